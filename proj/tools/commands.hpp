#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ergoflow::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 2 configuration error, 3 runtime numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ergoflow::cli
