#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergoflow/common.hpp"

namespace ergoflow {

// Timestamped positions tagged with cycle index and leg (0 outward, 1 return).
// Within a leg timestamps strictly increase. Consecutive legs share their
// boundary time: the turnaround sample closes one leg and opens the next.
struct Trajectory {
    std::vector<double> t;
    Points points;
    std::vector<int> cycle;
    std::vector<int> leg;
    std::string source_id;

    std::size_t size() const { return t.size(); }
    double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
    void validate() const;

    // Half-open ranges [begin, end) of maximal runs with equal (cycle, leg).
    std::vector<std::pair<std::size_t, std::size_t>> legs() const;

    // Trapezoid weights within each leg; they sum to the total leg time.
    std::vector<double> time_weights() const;
};

}  // namespace ergoflow
