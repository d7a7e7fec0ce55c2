#include "ergoflow/fleet.hpp"

#include <cmath>

#include "ergoflow/flow.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/rng.hpp"

namespace ergoflow {

std::uint64_t agent_seed(std::uint64_t rng_seed, int agent) {
    return derive_seed(rng_seed, "agent", static_cast<std::uint64_t>(agent));
}

FleetRun simulate_fleet(const PointMap& map, int N, int K, int n_points, double delta,
                        std::uint64_t rng_seed, const FleetOptions& o) {
    require(N >= 1, "fleet needs at least one agent");
    FleetRun run;
    run.n_agents = N;
    run.pooled.size = o.grid_size;
    run.pooled.bbox = o.bbox;
    run.pooled.values = Eigen::MatrixXd::Zero(o.grid_size, o.grid_size);
    for (int n = 0; n < N; ++n) {
        const auto seed = agent_seed(rng_seed, n);
        run.agent_seeds.push_back(seed);
        Trajectory x = pushforward_trajectory(map, generate_trajectory(seed, delta, K, n_points, o.dt));
        x.source_id = "agent-" + std::to_string(n);
        GridDensity g = grid_histogram(x, o.grid_size, o.bbox);
        run.pooled.values += g.values;
        run.pooled.outside_mass += g.outside_mass;
        run.agent_grids.push_back(std::move(g));
        run.trajectories.push_back(std::move(x));
    }
    return run;
}

PooledRateResult pooled_rate_check(const PointMap& map, double delta, std::uint64_t rng_seed,
                                   const PooledRateOptions& o) {
    require(!o.Ns.empty() && o.seeds >= 1, "pooled rate check needs Ns and seeds");
    const Points ref_pts = map.apply(uniform_annulus_sample(derive_seed(rng_seed, "fleet-reference"), delta, o.n_reference));
    const GridDensity ref = grid_histogram(ref_pts, o.fleet.grid_size, o.fleet.bbox);
    PooledRateResult r;
    r.Ns = o.Ns;
    std::vector<double> xs;
    for (std::size_t a = 0; a < o.Ns.size(); ++a) {
        std::vector<double> m;
        for (int s = 0; s < o.seeds; ++s) {
            const auto seed = derive_seed(rng_seed, "fleet-run", a * 1000003ULL + static_cast<std::uint64_t>(s));
            FleetRun run = simulate_fleet(map, o.Ns[a], o.K, o.n_points, delta, seed, o.fleet);
            m.push_back(grid_rmse(run.pooled, ref));
        }
        double mean = 0.0;
        for (double v : m) mean += v / m.size();
        r.metric.push_back(m);
        r.mean_metric.push_back(mean);
        xs.push_back(o.Ns[a]);
    }
    for (int N : o.Ns) r.reference.push_back(r.mean_metric.front() / std::sqrt(static_cast<double>(N)));
    r.slope = o.Ns.size() >= 2 ? loglog_slope(xs, r.mean_metric) : 0.0;
    r.ratio_first_last = r.mean_metric.front() / r.mean_metric.back();
    return r;
}

double min_pairwise_agent_correlation(const FleetRun& run) {
    require(run.agent_grids.size() >= 2, "need at least two agents");
    double best = 1.0;
    for (std::size_t a = 0; a < run.agent_grids.size(); ++a)
        for (std::size_t b = a + 1; b < run.agent_grids.size(); ++b)
            best = std::min(best, pearson_corr(run.agent_grids[a], run.agent_grids[b]));
    return best;
}

}  // namespace ergoflow
