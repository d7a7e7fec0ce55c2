#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ergoflow/common.hpp"
#include "ergoflow/trajectory.hpp"

namespace ergoflow {

class PointMap;
class TargetSpec;

// Row i covers y in [ymin + i*h, ymin + (i+1)*h], column j likewise in x.
// Values hold unnormalized mass; comparisons normalize where they need to.
struct GridDensity {
    int size = 50;
    BBox bbox;
    Eigen::MatrixXd values;
    double outside_mass = 0.0;  // weight of inputs that fell outside bbox

    double total() const { return values.sum(); }
    Vec2 cell_center(int i, int j) const;
};

GridDensity grid_histogram(const Points& points, int grid_size = 50, const BBox& bbox = {});
// Time-occupancy: each sample carries its trapezoid time weight.
GridDensity grid_histogram(const Trajectory& traj, int grid_size = 50, const BBox& bbox = {});
// Target density evaluated at cell centers.
GridDensity density_grid(const TargetSpec& target, int grid_size = 50, const BBox& bbox = {});

double pearson_corr(const GridDensity& a, const GridDensity& b);
// RMSE between the two grids after scaling each to unit mass.
double grid_rmse(const GridDensity& a, const GridDensity& b);

using Region = std::function<bool(const Vec2&)>;
// Time fraction spent in each region (samples outside every region count
// toward the total only).
std::vector<double> region_fractions(const Trajectory& traj, const std::vector<Region>& regions);
std::vector<double> region_fractions(const Points& points, const std::vector<Region>& regions);
// sum_i |achieved_i - target_i| in percentage points.
double l1_allocation(const std::vector<double>& achieved, const std::vector<double>& target);

double jains_index(const std::vector<double>& service_ratios);

struct NfzMetrics {
    double frac_inside = 0.0;
    double max_depth = 0.0;
    int n_incursions = 0;
    double dwell = 0.0;
};
NfzMetrics nfz_metrics(const Trajectory& traj, const std::vector<Disc>& discs);

double acc_ratio(const Trajectory& target_traj, const Trajectory& latent_traj);

struct AccelerationBound {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};
// sqrt E(x) <= L sqrt E(z) + M_H sqrt Phi4(z), judged with 5% slack.
AccelerationBound bound_check_acceleration(const Trajectory& target_traj, const Trajectory& latent_traj,
                                           double L_hat, double M_H_hat, double slack = 0.05);

struct ConvergenceOptions {
    std::vector<int> Ks{5, 10, 20, 50, 100};
    int seeds_per_K = 5;
    int n_points_per_leg = 200;
    int grid_size = 50;
    int n_reference = 20000;
    BBox bbox;
};

struct ConvergenceResult {
    std::vector<int> Ks;
    std::vector<std::vector<double>> rmse;  // [K index][seed]
    std::vector<double> mean_rmse;
    std::vector<double> std_error;          // sample std / sqrt(seeds)
    double slope = 0.0;                     // least squares of log mean rmse on log K
};

// Grid-RMSE between K-cycle time-occupancy and the histogram of n_reference
// i.i.d. pushforward samples.
ConvergenceResult convergence_study(const PointMap& map, double delta, std::uint64_t rng_seed,
                                    const ConvergenceOptions& opts = {});

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

double hoeffding_tail(double B_phi, int K, double alpha);

struct FloorResult {
    double floor = 0.0;
    bool eps_feasible = true;  // requested eps exceeds the floor
};
FloorResult end_to_end_floor(double L_phi, double Lv_hat, double eps_v, double eta_top,
                             std::optional<double> eps = std::nullopt);

double eta_top_estimate(double delta, double c_top = 1.0, bool annular_target = false);

struct SampleComplexity {
    bool feasible = false;
    long long K = 0;
};
SampleComplexity sample_complexity(double eps, double B_phi, double alpha, double floor);

struct W2Estimate {
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> values;
};
W2Estimate w2_hat(const PointMap& map, const TargetSpec& target, double delta, int n = 3000,
                  int n_seeds = 3, std::uint64_t rng_seed = 0);

double energy_proxy(const Trajectory& traj);

// Sobolev-weighted distance between cosine-basis coefficients of the
// occupancy and the target grid on a square bbox.
double fourier_ergodic_metric(const GridDensity& occupancy, const GridDensity& target, int n_modes);
double fourier_ergodic_metric(const Trajectory& traj, const GridDensity& target, int n_modes);

// Per-cycle averages X_k of phi(x) = x_1 over the outward leg.
std::vector<double> cycle_averages(const Trajectory& traj);

struct HoeffdingStudy {
    double mu = 0.0;             // E phi under the i.i.d. pushforward
    double eps_stat = 0.0;       // hoeffding_tail(B, K, alpha)
    double exceed_fraction = 0.0;
    double var_cycle = 0.0;      // empirical Var(X_k)
    double var_envelope = 0.0;   // C_D L^2 L_phi^2
    double B_phi = 0.0;
};

inline constexpr double kPoincareDisc = 0.295;  // 1 / j'_{1,1}^2

HoeffdingStudy hoeffding_study(const PointMap& map, double delta, int K, int trials, double alpha,
                               double L_hat, std::uint64_t rng_seed, int n_points_per_leg = 100,
                               int n_mu = 1000000);

struct MetricsReport {
    std::optional<double> rho_iid, rho_traj, l1_allocation, jain;
    std::optional<NfzMetrics> nfz;
    std::optional<double> acc_ratio, energy_proxy, w2_hat, w2_std;
    std::optional<double> L_hat, Lv_hat, Lv_net, M_H_hat, eps_v, eta_top, floor;
    std::optional<long long> sample_complexity_K;
    std::optional<double> slope, fourier_metric, final_cfm_loss;
    std::optional<AccelerationBound> acc_bound;
    std::string notes;
};

}  // namespace ergoflow
