#include "ergoflow/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>

#include "ergoflow/rng.hpp"

namespace ergoflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
}

}  // namespace

// ---------------------------------------------------------------- trajectory

void Trajectory::validate() const {
    const std::size_t n = t.size();
    require(static_cast<std::size_t>(points.cols()) == n && cycle.size() == n && leg.size() == n,
            "trajectory columns have mismatched lengths");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(t[i]) || !points.col(i).allFinite())
            throw NumericError("trajectory contains non-finite values");
    }
    for (std::size_t i = 1; i < n; ++i) {
        const bool same_leg = cycle[i] == cycle[i - 1] && leg[i] == leg[i - 1];
        if (same_leg ? !(t[i] > t[i - 1]) : t[i] < t[i - 1])
            throw DomainError("trajectory timestamps out of order at sample " + std::to_string(i));
    }
}

std::vector<std::pair<std::size_t, std::size_t>> Trajectory::legs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t b = 0;
    for (std::size_t i = 1; i <= size(); ++i) {
        if (i == size() || cycle[i] != cycle[b] || leg[i] != leg[b]) {
            out.emplace_back(b, i);
            b = i;
        }
    }
    return out;
}

std::vector<double> Trajectory::time_weights() const {
    std::vector<double> w(size(), 0.0);
    for (auto [b, e] : legs()) {
        for (std::size_t i = b; i + 1 < e; ++i) {
            const double h = 0.5 * (t[i + 1] - t[i]);
            w[i] += h;
            w[i + 1] += h;
        }
    }
    return w;
}

// ---------------------------------------------------------------- domain

AnnulusDomain::AnnulusDomain(double delta) : delta_(delta) { check_delta(delta); }

double AnnulusDomain::area() const { return std::numbers::pi * (1.0 - delta_ * delta_); }

bool AnnulusDomain::contains(const Vec2& z, double tol) const {
    const double r = z.norm();
    return r >= delta_ - tol && r <= 1.0 + tol;
}

// ---------------------------------------------------------------- profile

double radial_profile(double s, double delta) {
    check_delta(delta);
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("cycle parameter s must lie in [0,1]");
    return std::sqrt(delta * delta + (1.0 - delta * delta) * s);
}

double radial_speed(double s, double delta) {
    return 0.5 * (1.0 - delta * delta) / radial_profile(s, delta);
}

std::vector<double> make_s_grid(int n, SampleGrid grid) {
    if (n < 2) throw DomainError("n_points_per_leg must be at least 2");
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / (n - 1);
        s[i] = grid == SampleGrid::Graded ? u * u : u;
    }
    s.back() = 1.0;
    return s;
}

LatentCycle make_cycle(double theta, double delta, const std::vector<double>& s_grid) {
    check_delta(delta);
    const int n = static_cast<int>(s_grid.size());
    if (n < 2) throw DomainError("cycle needs at least 2 samples per leg");
    LatentCycle c;
    c.theta = theta;
    c.delta = delta;
    c.s_grid = s_grid;
    c.points.resize(2, 2 * n);
    const Vec2 dir(std::cos(theta), std::sin(theta));
    for (int i = 0; i < n; ++i) {
        const Vec2 p = radial_profile(s_grid[i], delta) * dir;
        c.points.col(i) = p;
        c.points.col(2 * n - 1 - i) = p;
    }
    return c;
}

LatentCycle sample_cycle(std::uint64_t rng_seed, double delta, int n, SampleGrid grid) {
    Rng rng(rng_seed, "cycle", 0);
    return make_cycle(kTwoPi * rng.uniform(), delta, make_s_grid(n, grid));
}

LatentTrajectory generate_trajectory(std::uint64_t rng_seed, double delta, int K, int n,
                                     double dt, SampleGrid grid) {
    check_delta(delta);
    if (K < 1) throw DomainError("cycle count K must be at least 1");
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    const auto s = make_s_grid(n, grid);
    LatentTrajectory traj;
    traj.delta = delta;
    traj.dt = dt;
    traj.cycles.reserve(K);
    for (int k = 0; k < K; ++k) {
        Rng rng(rng_seed, "cycle", static_cast<std::uint64_t>(k));
        traj.cycles.push_back(make_cycle(kTwoPi * rng.uniform(), delta, s));
    }
    return traj;
}

std::size_t LatentTrajectory::size() const {
    std::size_t n = 0;
    for (const auto& c : cycles) n += c.points.cols();
    return n;
}

Trajectory LatentTrajectory::flatten() const {
    Trajectory out;
    const std::size_t n = size();
    out.t.reserve(n);
    out.cycle.reserve(n);
    out.leg.reserve(n);
    out.points.resize(2, static_cast<Eigen::Index>(n));
    out.source_id = "latent";
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < cycles.size(); ++k) {
        const auto& c = cycles[k];
        const std::size_t m = c.per_leg();
        const double t0 = 2.0 * static_cast<double>(k) * dt;
        for (std::size_t i = 0; i < 2 * m; ++i) {
            const bool ret = i >= m;
            const double s = ret ? 1.0 + (1.0 - c.s_grid[2 * m - 1 - i]) : c.s_grid[i];
            out.t.push_back(t0 + s * dt);
            out.cycle.push_back(static_cast<int>(k));
            out.leg.push_back(ret ? 1 : 0);
            out.points.col(col++) = c.points.col(static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

Points uniform_annulus_sample(std::uint64_t rng_seed, double delta, int n) {
    check_delta(delta);
    if (n < 1) throw DomainError("sample count must be at least 1");
    Rng rng(rng_seed, "annulus");
    Points out(2, n);
    const double d2 = delta * delta;
    for (int i = 0; i < n; ++i) {
        const double r = std::sqrt(d2 + (1.0 - d2) * rng.uniform());
        const double th = kTwoPi * rng.uniform();
        out(0, i) = r * std::cos(th);
        out(1, i) = r * std::sin(th);
    }
    return out;
}

// ---------------------------------------------------------------- energy

LatentMoments latent_moments_closed_form(double delta, int K) {
    if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("delta must lie in (0,1]");
    if (K < 1) throw DomainError("cycle count K must be at least 1");
    const double d2 = delta * delta;
    const double a4 = std::pow(1.0 - d2, 4);
    LatentMoments m;
    m.E_acc = K * a4 * (1.0 + d2) / (16.0 * d2 * d2);
    m.Phi4 = K * a4 / (8.0 * d2);
    m.ratio = 2.0 * d2 / (1.0 + d2);
    return m;
}

EnergyReport numeric_energy(const Trajectory& traj) {
    traj.validate();
    EnergyReport rep;
    const auto& x = traj.points;
    const auto& t = traj.t;
    const auto legs = traj.legs();
    for (auto [b, e] : legs) {
        if (e - b < 3) throw DomainError("leg too short for central differences (need 3 samples)");
        // Derivatives at each node come from the quadratic through the nearest
        // three samples, so the trapezoid rule spans the whole leg.
        double prev_t = 0.0, prev_a = 0.0, prev_v = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t c = std::clamp(i, b + 1, e - 2);
            const double t0 = t[c - 1], t1 = t[c], t2 = t[c + 1], ti = t[i];
            const Vec2 x0 = x.col(c - 1), x1 = x.col(c), x2 = x.col(c + 1);
            const double h1 = t1 - t0, h2 = t2 - t1;
            const Vec2 acc = 2.0 * ((x2 - x1) / h2 - (x1 - x0) / h1) / (h1 + h2);
            const Vec2 vel = x0 * ((ti - t1) + (ti - t2)) / ((t0 - t1) * (t0 - t2)) +
                             x1 * ((ti - t0) + (ti - t2)) / ((t1 - t0) * (t1 - t2)) +
                             x2 * ((ti - t0) + (ti - t1)) / ((t2 - t0) * (t2 - t1));
            const double a2 = acc.squaredNorm();
            const double v4 = vel.squaredNorm() * vel.squaredNorm();
            if (i > b) {
                const double w = 0.5 * (ti - prev_t);
                rep.E_acc += w * (a2 + prev_a);
                rep.Phi4 += w * (v4 + prev_v);
            }
            prev_t = ti;
            prev_a = a2;
            prev_v = v4;
        }
    }
    for (std::size_t l = 0; l + 1 < legs.size(); ++l) {
        const auto [b0, e0] = legs[l];
        const auto [b1, e1] = legs[l + 1];
        (void)b0;
        (void)e1;
        const Vec2 v_in = (x.col(e0 - 1) - x.col(e0 - 2)) / (t[e0 - 1] - t[e0 - 2]);
        const Vec2 v_out = (x.col(b1 + 1) - x.col(b1)) / (t[b1 + 1] - t[b1]);
        rep.turnaround_impulse += (v_out - v_in).norm();
    }
    return rep;
}

EnergyReport numeric_energy(const LatentTrajectory& traj) { return numeric_energy(traj.flatten()); }

LatentCycle smooth_cycle(const LatentCycle& cycle, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("epsilon_window must lie in (0,1)");
    const double a = 1.0 - eps;
    const auto& s = cycle.s_grid;
    const auto inside = std::count_if(s.begin(), s.end(), [a](double v) { return v > a; });
    if (inside < 3) throw DomainError("smoothing window too small for the cycle's grid resolution");

    const double delta = cycle.delta;
    const double p0 = radial_profile(a, delta);
    const double m0 = radial_speed(a, delta) * eps;
    LatentCycle out = cycle;
    const Vec2 dir(std::cos(cycle.theta), std::sin(cycle.theta));
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] <= a) continue;
        const double u = (s[i] - a) / eps;
        const double u2 = u * u, u3 = u2 * u;
        const double r = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 + (-2 * u3 + 3 * u2);
        out.points.col(static_cast<Eigen::Index>(i)) = r * dir;
        out.points.col(static_cast<Eigen::Index>(2 * n - 1 - i)) = r * dir;
    }
    return out;
}

double hermite_splice_energy(double delta, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("epsilon_window must lie in (0,1)");
    const double a = 1.0 - eps;
    const double p0 = radial_profile(a, delta);
    const double m0 = radial_speed(a, delta) * eps;
    // r~''(u) * eps^2 = A + B u on u in [0,1]
    const double A = -6.0 * p0 - 4.0 * m0 + 6.0;
    const double B = 12.0 * p0 + 6.0 * m0 - 12.0;
    const double integral_u = A * A + A * B + B * B / 3.0;
    return integral_u / (eps * eps * eps);
}

// ---------------------------------------------------------------- diagnostics

namespace {

// Calls fn(p0, p1, dt) for each segment joining consecutive samples of one leg.
template <class Fn>
double for_each_segment(const Trajectory& flat, Fn fn) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < flat.size(); ++i) {
        if (flat.cycle[i] != flat.cycle[i + 1] || flat.leg[i] != flat.leg[i + 1]) continue;
        const double dt = flat.t[i + 1] - flat.t[i];
        if (dt <= 0.0) continue;
        fn(Vec2(flat.points.col(static_cast<Eigen::Index>(i))), Vec2(flat.points.col(static_cast<Eigen::Index>(i + 1))),
           dt);
        total += dt;
    }
    return total;
}

}  // namespace

UniformityTest occupancy_uniformity(const LatentTrajectory& traj, int n_radial, int n_angular) {
    require(n_radial >= 1 && n_angular >= 2, "need at least 1 radial and 2 angular bins");
    require(!traj.cycles.empty(), "empty trajectory");
    const double d2 = traj.delta * traj.delta;
    const int K = static_cast<int>(traj.cycles.size());
    std::vector<double> edge(n_radial + 1);
    for (int k = 0; k <= n_radial; ++k) edge[k] = std::sqrt(d2 + (1.0 - d2) * k / n_radial);
    auto ring_of = [&](double r) {
        const double s = std::clamp((r * r - d2) / (1.0 - d2), 0.0, 1.0);
        return std::min(n_radial - 1, static_cast<int>(s * n_radial));
    };
    Eigen::MatrixXd occ = Eigen::MatrixXd::Zero(n_radial, n_angular);
    const double total_per_cycle = 2.0 * traj.dt;
    // Radius varies linearly along each segment, so its time splits over
    // rings in proportion to the radial overlap.
    for_each_segment(traj.flatten(), [&](const Vec2& p0, const Vec2& p1, double dt) {
        const Vec2 mid = 0.5 * (p0 + p1);
        double th = std::atan2(mid.y(), mid.x());
        if (th < 0) th += kTwoPi;
        const int ab = std::min(n_angular - 1, static_cast<int>(th / kTwoPi * n_angular));
        const double lo = std::min(p0.norm(), p1.norm()), hi = std::max(p0.norm(), p1.norm());
        const int r0 = ring_of(lo), r1 = ring_of(hi);
        if (r0 == r1 || hi == lo) {
            occ(r0, ab) += dt / total_per_cycle;
            return;
        }
        for (int k = r0; k <= r1; ++k) {
            const double a = k == r0 ? lo : edge[k], b = k == r1 ? hi : edge[k + 1];
            occ(k, ab) += dt * std::max(0.0, b - a) / (hi - lo) / total_per_cycle;
        }
    });
    const double expected = static_cast<double>(K) / (n_radial * n_angular);
    UniformityTest out;
    out.chi2 = (occ.array() - expected).square().sum() / expected;
    out.dof = n_angular - 1;
    boost::math::chi_squared dist(out.dof);
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.chi2));
    return out;
}

double radial_ks_statistic(const LatentTrajectory& traj) {
    require(!traj.cycles.empty(), "empty trajectory");
    // The empirical CDF of radius along the piecewise-linear path is piecewise
    // linear: each segment adds slope dt/(hi-lo) on [lo, hi], or a jump when
    // its radius is constant. Events are (radius, slope change, jump).
    struct Event {
        double r, dslope, jump;
    };
    std::vector<Event> ev;
    const double total = for_each_segment(traj.flatten(), [&](const Vec2& p0, const Vec2& p1, double dt) {
        const double lo = std::min(p0.norm(), p1.norm()), hi = std::max(p0.norm(), p1.norm());
        if (hi > lo) {
            ev.push_back({lo, dt / (hi - lo), 0.0});
            ev.push_back({hi, -dt / (hi - lo), 0.0});
        } else {
            ev.push_back({lo, 0.0, dt});
        }
    });
    require(total > 0.0, "trajectory has no time span");
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.r < b.r; });
    const double d2 = traj.delta * traj.delta;
    auto cdf = [&](double r) { return std::clamp((r * r - d2) / (1.0 - d2), 0.0, 1.0); };
    double G = 0.0, slope = 0.0, ks = 0.0, r_prev = ev.front().r;
    for (std::size_t i = 0; i < ev.size();) {
        const double r = ev[i].r;
        // G is linear on (r_prev, r) and the target is smooth: check the midpoint too.
        const double mid = 0.5 * (r_prev + r);
        ks = std::max(ks, std::abs((G + slope * (mid - r_prev)) / total - cdf(mid)));
        G += slope * (r - r_prev);
        const double before = G;
        while (i < ev.size() && ev[i].r == r) {
            slope += ev[i].dslope;
            G += ev[i].jump;
            ++i;
        }
        ks = std::max({ks, std::abs(before / total - cdf(r)), std::abs(G / total - cdf(r))});
        r_prev = r;
    }
    return ks;
}

}  // namespace ergoflow
