#pragma once

#include <cstdint>
#include <vector>

#include "ergoflow/metrics.hpp"
#include "ergoflow/trajectory.hpp"

namespace ergoflow {

class PointMap;

struct FleetOptions {
    int grid_size = 50;
    BBox bbox;
    double dt = 1.0;
};

struct FleetRun {
    int n_agents = 0;
    std::vector<std::uint64_t> agent_seeds;  // latent trajectory seed of each agent
    std::vector<Trajectory> trajectories;
    std::vector<GridDensity> agent_grids;
    GridDensity pooled;  // sum of the agents' time-occupancy grids
};

// Agent n runs generate_trajectory with seed derive_seed(rng_seed, "agent", n).
FleetRun simulate_fleet(const PointMap& map, int N, int K, int n_points, double delta,
                        std::uint64_t rng_seed, const FleetOptions& opts = {});

std::uint64_t agent_seed(std::uint64_t rng_seed, int agent);

struct PooledRateOptions {
    std::vector<int> Ns{1, 2, 5, 10, 20};
    int K = 20;
    int seeds = 5;
    int n_points = 100;
    int n_reference = 200000;
    FleetOptions fleet;
};

struct PooledRateResult {
    std::vector<int> Ns;
    std::vector<std::vector<double>> metric;  // [N index][seed] pooled grid RMSE
    std::vector<double> mean_metric;
    std::vector<double> reference;            // mean_metric[0] / sqrt(N)
    double slope = 0.0;
    double ratio_first_last = 0.0;
};

PooledRateResult pooled_rate_check(const PointMap& map, double delta, std::uint64_t rng_seed,
                                   const PooledRateOptions& opts = {});

// Smallest pairwise Pearson correlation between agents' occupancy grids.
double min_pairwise_agent_correlation(const FleetRun& run);

}  // namespace ergoflow
