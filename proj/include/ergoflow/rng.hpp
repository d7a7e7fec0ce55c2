#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ergoflow {

// Labeled stream splitting: every consumer of randomness derives its own
// engine from (root seed, label, index), so adding cycles or agents never
// shifts the draws of earlier ones.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    Rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
        : eng_(derive_seed(seed, label, index)) {}

    // Uniform on [0,1).
    double uniform() { return std::generate_canonical<double, 53>(eng_); }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal() { return normal_(eng_); }
    std::uint64_t bits() { return eng_(); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ergoflow
