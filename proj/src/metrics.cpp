#include "ergoflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ergoflow/flow.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/ot.hpp"
#include "ergoflow/rng.hpp"
#include "ergoflow/targets.hpp"

namespace ergoflow {

namespace {

void add_weighted(GridDensity& g, const Points& pts, const std::vector<double>* w) {
    const double cw = g.bbox.width() / g.size, ch = g.bbox.height() / g.size;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
        const double wk = w ? (*w)[static_cast<std::size_t>(k)] : 1.0;
        const Vec2 p = pts.col(k);
        if (!g.bbox.contains(p)) {
            g.outside_mass += wk;
            continue;
        }
        const int j = std::min(g.size - 1, static_cast<int>((p.x() - g.bbox.xmin) / cw));
        const int i = std::min(g.size - 1, static_cast<int>((p.y() - g.bbox.ymin) / ch));
        g.values(i, j) += wk;
    }
}

GridDensity empty_grid(int grid_size, const BBox& bbox) {
    require(grid_size >= 1, "grid size must be positive");
    bbox.validate();
    GridDensity g;
    g.size = grid_size;
    g.bbox = bbox;
    g.values = Eigen::MatrixXd::Zero(grid_size, grid_size);
    return g;
}

}  // namespace

Vec2 GridDensity::cell_center(int i, int j) const {
    return {bbox.xmin + (j + 0.5) * bbox.width() / size, bbox.ymin + (i + 0.5) * bbox.height() / size};
}

GridDensity grid_histogram(const Points& points, int grid_size, const BBox& bbox) {
    if (points.cols() == 0) throw DomainError("histogram of an empty point set");
    GridDensity g = empty_grid(grid_size, bbox);
    add_weighted(g, points, nullptr);
    return g;
}

GridDensity grid_histogram(const Trajectory& traj, int grid_size, const BBox& bbox) {
    if (traj.size() == 0) throw DomainError("histogram of an empty trajectory");
    GridDensity g = empty_grid(grid_size, bbox);
    const auto w = traj.time_weights();
    add_weighted(g, traj.points, &w);
    return g;
}

GridDensity density_grid(const TargetSpec& target, int grid_size, const BBox& bbox) {
    GridDensity g = empty_grid(grid_size, bbox);
    for (int i = 0; i < grid_size; ++i)
        for (int j = 0; j < grid_size; ++j) g.values(i, j) = target.density(g.cell_center(i, j));
    return g;
}

double pearson_corr(const GridDensity& a, const GridDensity& b) {
    require(a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols(),
            "grids differ in shape");
    const Eigen::ArrayXd x = a.values.reshaped().array(), y = b.values.reshaped().array();
    const Eigen::ArrayXd dx = x - x.mean(), dy = y - y.mean();
    const double sxx = dx.square().sum(), syy = dy.square().sum();
    if (sxx <= 0.0 || syy <= 0.0) throw DomainError("correlation of a zero-variance grid");
    return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

double grid_rmse(const GridDensity& a, const GridDensity& b) {
    require(a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols(),
            "grids differ in shape");
    const double ta = a.total(), tb = b.total();
    if (!(ta > 0.0) || !(tb > 0.0)) throw DomainError("grid without mass");
    return std::sqrt((a.values / ta - b.values / tb).array().square().mean());
}

std::vector<double> region_fractions(const Trajectory& traj, const std::vector<Region>& regions) {
    require(!regions.empty(), "empty region set");
    require(traj.size() > 0, "empty trajectory");
    const auto w = traj.time_weights();
    std::vector<double> out(regions.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        total += w[k];
        const Vec2 p = traj.points.col(static_cast<Eigen::Index>(k));
        for (std::size_t r = 0; r < regions.size(); ++r)
            if (regions[r](p)) {
                out[r] += w[k];
                break;
            }
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> region_fractions(const Points& points, const std::vector<Region>& regions) {
    require(!regions.empty(), "empty region set");
    require(points.cols() > 0, "empty point set");
    std::vector<double> out(regions.size(), 0.0);
    for (Eigen::Index k = 0; k < points.cols(); ++k)
        for (std::size_t r = 0; r < regions.size(); ++r)
            if (regions[r](points.col(k))) {
                out[r] += 1.0;
                break;
            }
    for (double& v : out) v /= static_cast<double>(points.cols());
    return out;
}

double l1_allocation(const std::vector<double>& achieved, const std::vector<double>& target) {
    require(!target.empty(), "empty region set");
    require(achieved.size() == target.size(), "region count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(achieved[i] - target[i]);
    return 100.0 * s;
}

double jains_index(const std::vector<double>& w) {
    require(!w.empty(), "Jain's index of an empty set");
    double s = 0.0, s2 = 0.0;
    for (double v : w) {
        require(v >= 0.0 && std::isfinite(v), "service ratios must be finite and nonnegative");
        s += v;
        s2 += v * v;
    }
    if (s2 <= 0.0) throw DomainError("Jain's index of an all-zero vector");
    return s * s / (static_cast<double>(w.size()) * s2);
}

NfzMetrics nfz_metrics(const Trajectory& traj, const std::vector<Disc>& discs) {
    require(!discs.empty(), "nfz metrics need at least one disc");
    NfzMetrics m;
    if (traj.size() == 0) return m;
    const auto w = traj.time_weights();
    double total = 0.0;
    bool prev_inside = false;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const Vec2 p = traj.points.col(static_cast<Eigen::Index>(k));
        double depth = -1.0;
        for (const auto& d : discs) depth = std::max(depth, d.radius - (p - d.center).norm());
        const bool inside = depth > 0.0;
        total += w[k];
        if (inside) {
            m.dwell += w[k];
            m.max_depth = std::max(m.max_depth, depth);
            if (!prev_inside) ++m.n_incursions;
        }
        prev_inside = inside;
    }
    m.frac_inside = total > 0.0 ? m.dwell / total : 0.0;
    return m;
}

double acc_ratio(const Trajectory& x, const Trajectory& z) {
    require(x.size() == z.size() && x.cycle == z.cycle && x.leg == z.leg,
            "trajectories do not share cycle/leg structure");
    const double ez = numeric_energy(z).E_acc;
    if (!(ez > 0.0)) throw DomainError("latent acceleration energy is zero");
    return numeric_energy(x).E_acc / ez;
}

AccelerationBound bound_check_acceleration(const Trajectory& x, const Trajectory& z, double L_hat,
                                           double M_H_hat, double slack) {
    const EnergyReport ex = numeric_energy(x), ez = numeric_energy(z);
    AccelerationBound b;
    b.lhs = std::sqrt(ex.E_acc);
    b.rhs = L_hat * std::sqrt(ez.E_acc) + M_H_hat * std::sqrt(ez.Phi4);
    b.holds = b.lhs <= (1.0 + slack) * b.rhs;
    return b;
}

// ---------------------------------------------------------------- convergence

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "slope needs at least two points");
    double mx = 0, my = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] > 0 && y[i] > 0, "log-log slope needs positive values");
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

ConvergenceResult convergence_study(const PointMap& map, double delta, std::uint64_t rng_seed,
                                    const ConvergenceOptions& o) {
    require(!o.Ks.empty() && o.seeds_per_K >= 1, "convergence study needs Ks and seeds");
    const Points ref_latent = uniform_annulus_sample(derive_seed(rng_seed, "conv-reference"), delta, o.n_reference);
    const GridDensity ref = grid_histogram(map.apply(ref_latent), o.grid_size, o.bbox);
    ConvergenceResult res;
    res.Ks = o.Ks;
    std::vector<double> xs;
    for (std::size_t a = 0; a < o.Ks.size(); ++a) {
        std::vector<double> r;
        for (int s = 0; s < o.seeds_per_K; ++s) {
            const auto lt = generate_trajectory(derive_seed(rng_seed, "conv-traj", a * 1000003ULL + s), delta,
                                                o.Ks[a], o.n_points_per_leg);
            const Trajectory x = pushforward_trajectory(map, lt);
            r.push_back(grid_rmse(grid_histogram(x, o.grid_size, o.bbox), ref));
        }
        double mean = 0.0;
        for (double v : r) mean += v / r.size();
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var = r.size() > 1 ? var / (r.size() - 1) : 0.0;
        res.rmse.push_back(r);
        res.mean_rmse.push_back(mean);
        res.std_error.push_back(std::sqrt(var / r.size()));
        xs.push_back(o.Ks[a]);
    }
    res.slope = res.Ks.size() >= 2 ? loglog_slope(xs, res.mean_rmse) : 0.0;
    return res;
}

// ---------------------------------------------------------------- bounds

double hoeffding_tail(double B, int K, double alpha) {
    require(K >= 1, "K must be at least 1");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    require(B >= 0.0, "B_phi must be nonnegative");
    return B * std::sqrt(2.0 * std::log(2.0 / alpha) / K);
}

FloorResult end_to_end_floor(double L_phi, double Lv, double eps_v, double eta_top, std::optional<double> eps) {
    require(L_phi >= 0.0 && Lv >= 0.0 && eps_v >= 0.0 && eta_top >= 0.0, "floor inputs must be nonnegative");
    FloorResult r;
    r.floor = L_phi * std::exp(Lv) * eps_v + L_phi * eta_top;
    if (eps) r.eps_feasible = *eps > r.floor;
    return r;
}

double eta_top_estimate(double delta, double c_top, bool annular_target) {
    return annular_target ? 0.0 : c_top * delta;
}

SampleComplexity sample_complexity(double eps, double B, double alpha, double floor) {
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    SampleComplexity r;
    if (!(eps > floor)) return r;
    const double gap = eps - floor;
    const double k = 2.0 * B * B * std::log(2.0 / alpha) / (gap * gap);
    r.feasible = true;
    // shave representation error so exact integers are not pushed up a step
    r.K = std::max(1LL, static_cast<long long>(std::ceil(k * (1.0 - 1e-12))));
    return r;
}

W2Estimate w2_hat(const PointMap& map, const TargetSpec& target, double delta, int n, int n_seeds,
                  std::uint64_t rng_seed) {
    require(n_seeds >= 1, "w2_hat needs at least one seed");
    W2Estimate e;
    for (int s = 0; s < n_seeds; ++s) {
        const auto k = static_cast<std::uint64_t>(s);
        const Points z = uniform_annulus_sample(derive_seed(rng_seed, "w2-source", k), delta, n);
        const Points x = target.sample(derive_seed(rng_seed, "w2-target", k), n);
        e.values.push_back(exact_w2(map.apply(z), x));
    }
    for (double v : e.values) e.mean += v / n_seeds;
    double var = 0.0;
    for (double v : e.values) var += (v - e.mean) * (v - e.mean);
    e.std = n_seeds > 1 ? std::sqrt(var / (n_seeds - 1)) : 0.0;
    return e;
}

double energy_proxy(const Trajectory& traj) {
    require(traj.size() >= 2, "energy proxy needs at least two samples");
    double e = 0.0;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const double dt = traj.t[k] - traj.t[k - 1];
        if (dt <= 0.0) continue;  // leg boundary or base-station reset
        const auto d = traj.points.col(static_cast<Eigen::Index>(k)) - traj.points.col(static_cast<Eigen::Index>(k - 1));
        e += d.squaredNorm() / dt;
    }
    return e;
}

// ---------------------------------------------------------------- spectral

namespace {

Eigen::MatrixXd cosine_coefficients(const Points& pts, const Eigen::VectorXd& w, const BBox& b, int n_modes) {
    const double L = b.width();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n_modes, n_modes);
    const double total = w.sum();
    Eigen::VectorXd cx(n_modes), cy(n_modes);
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
        for (int m = 0; m < n_modes; ++m) {
            const double nm = std::sqrt(m == 0 ? L : 0.5 * L);
            cx(m) = std::cos(m * std::numbers::pi * (pts(0, k) - b.xmin) / L) / nm;
            cy(m) = std::cos(m * std::numbers::pi * (pts(1, k) - b.ymin) / L) / nm;
        }
        c.noalias() += (w(k) / total) * cx * cy.transpose();
    }
    return c;
}

double sobolev_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double lam = std::pow(1.0 + static_cast<double>(i * i + j * j), -1.5);
            d += lam * (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
        }
    return d;
}

std::pair<Points, Eigen::VectorXd> grid_cells(const GridDensity& g) {
    const int n = g.size;
    Points p(2, n * n);
    Eigen::VectorXd w(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            p.col(i * n + j) = g.cell_center(i, j);
            w(i * n + j) = g.values(i, j);
        }
    return {p, w};
}

void check_square(const BBox& b) {
    require(std::abs(b.width() - b.height()) < 1e-12 * std::max(1.0, b.width()), "Fourier metric needs a square bbox");
}

}  // namespace

double fourier_ergodic_metric(const GridDensity& occ, const GridDensity& target, int n_modes) {
    require(n_modes >= 1, "need at least one mode");
    check_square(target.bbox);
    const auto [po, wo] = grid_cells(occ);
    const auto [pt, wt] = grid_cells(target);
    require(wo.sum() > 0.0 && wt.sum() > 0.0, "grids without mass");
    return sobolev_distance(cosine_coefficients(po, wo, occ.bbox, n_modes),
                            cosine_coefficients(pt, wt, target.bbox, n_modes));
}

double fourier_ergodic_metric(const Trajectory& traj, const GridDensity& target, int n_modes) {
    require(n_modes >= 1, "need at least one mode");
    require(traj.size() > 0, "empty trajectory");
    check_square(target.bbox);
    const auto tw = traj.time_weights();
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(tw.data(), static_cast<Eigen::Index>(tw.size()));
    const auto [pt, wt] = grid_cells(target);
    require(wt.sum() > 0.0, "target grid without mass");
    return sobolev_distance(cosine_coefficients(traj.points, w, target.bbox, n_modes),
                            cosine_coefficients(pt, wt, target.bbox, n_modes));
}

// ---------------------------------------------------------------- hoeffding

std::vector<double> cycle_averages(const Trajectory& traj) {
    const auto w = traj.time_weights();
    std::vector<double> out;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        if (k > 0 && traj.cycle[k] != traj.cycle[k - 1]) {
            out.push_back(num / den);
            num = den = 0.0;
        }
        num += w[k] * traj.points(0, static_cast<Eigen::Index>(k));
        den += w[k];
    }
    if (den > 0.0) out.push_back(num / den);
    return out;
}

HoeffdingStudy hoeffding_study(const PointMap& map, double delta, int K, int trials, double alpha,
                               double L_hat, std::uint64_t rng_seed, int n_points_per_leg, int n_mu) {
    require(trials >= 1, "need at least one trial");
    HoeffdingStudy h;
    const Points iid = map.apply(uniform_annulus_sample(derive_seed(rng_seed, "hoeffding-mu"), delta, n_mu));
    h.mu = iid.row(0).mean();
    h.B_phi = iid.row(0).cwiseAbs().maxCoeff();
    h.eps_stat = hoeffding_tail(h.B_phi, K, alpha);
    int exceed = 0;
    std::vector<double> all;
    for (int t = 0; t < trials; ++t) {
        const auto lt = generate_trajectory(derive_seed(rng_seed, "hoeffding-trial", static_cast<std::uint64_t>(t)),
                                            delta, K, n_points_per_leg);
        const auto X = cycle_averages(pushforward_trajectory(map, lt));
        double S = 0.0;
        for (double v : X) S += v / X.size();
        if (std::abs(S - h.mu) > h.eps_stat) ++exceed;
        all.insert(all.end(), X.begin(), X.end());
    }
    h.exceed_fraction = static_cast<double>(exceed) / trials;
    double m = 0.0;
    for (double v : all) m += v / all.size();
    for (double v : all) h.var_cycle += (v - m) * (v - m) / (all.size() - 1);
    h.var_envelope = kPoincareDisc * L_hat * L_hat;
    return h;
}

}  // namespace ergoflow
