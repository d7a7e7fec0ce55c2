#include "ergoflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ergoflow/ot.hpp"
#include "ergoflow/rng.hpp"
#include "ergoflow/targets.hpp"

namespace ergoflow {

namespace {

constexpr Eigen::Index kChunk = 2048;

}  // namespace

Vec2 PointMap::apply(const Vec2& z) const {
    Points zz = z;
    return apply(zz).col(0);
}

Points FunctionMap::apply(const Points& z) const {
    Points out(2, z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) out.col(i) = f_(z.col(i));
    return out;
}

FlowMap::FlowMap(std::shared_ptr<const VelocityField> field, int n_steps)
    : field_(std::move(field)), n_steps_(n_steps) {
    require(field_ != nullptr, "flow map needs a velocity field");
    require(n_steps >= 1, "flow map needs at least one RK4 step");
}

FlowMap::FlowMap(const MlpParams& params, int n_steps)
    : FlowMap(std::make_shared<MlpField>(params), n_steps) {}

const MlpParams* FlowMap::params() const {
    const auto* m = dynamic_cast<const MlpField*>(field_.get());
    return m ? &m->params() : nullptr;
}

Points FlowMap::apply(const Points& z0) const {
    if (!z0.allFinite()) throw DomainError("non-finite start point for integration");
    Points out(2, z0.cols());
    const double h = 1.0 / n_steps_;
    for (Eigen::Index b = 0; b < z0.cols(); b += kChunk) {
        const Eigen::Index m = std::min(kChunk, z0.cols() - b);
        Points y = z0.middleCols(b, m);
        for (int k = 0; k < n_steps_; ++k) {
            const double s = k * h;
            const Points k1 = field_->eval(s, y);
            const Points k2 = field_->eval(s + 0.5 * h, y + 0.5 * h * k1);
            const Points k3 = field_->eval(s + 0.5 * h, y + 0.5 * h * k2);
            const Points k4 = field_->eval(s + h, y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!y.allFinite())
                throw NumericError("non-finite state at RK4 step " + std::to_string(k + 1));
        }
        out.middleCols(b, m) = y;
    }
    return out;
}

Points integrate(const FlowMap& flow, const Points& z0) { return flow.apply(z0); }
Vec2 integrate(const FlowMap& flow, const Vec2& z0) { return flow.PointMap::apply(z0); }

Trajectory pushforward_trajectory(const PointMap& map, const Trajectory& latent) {
    Trajectory out = latent;
    out.points = map.apply(latent.points);
    out.source_id = latent.source_id.empty() ? "pushforward" : "pushforward:" + latent.source_id;
    return out;
}

Trajectory pushforward_trajectory(const PointMap& map, const LatentTrajectory& latent) {
    return pushforward_trajectory(map, latent.flatten());
}

// ---------------------------------------------------------------- jacobians

std::vector<Mat2> jacobians(const PointMap& map, const Points& z, double h) {
    require(h > 0.0, "finite-difference step must be positive");
    const Eigen::Index n = z.cols();
    Points stacked(2, 4 * n);
    stacked.middleCols(0, n) = z;
    stacked.middleCols(n, n) = z;
    stacked.middleCols(2 * n, n) = z;
    stacked.middleCols(3 * n, n) = z;
    stacked.row(0).segment(0, n).array() += h;
    stacked.row(0).segment(n, n).array() -= h;
    stacked.row(1).segment(2 * n, n).array() += h;
    stacked.row(1).segment(3 * n, n).array() -= h;
    const Points g = map.apply(stacked);
    std::vector<Mat2> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        out[i].col(0) = (g.col(i) - g.col(n + i)) / (2 * h);
        out[i].col(1) = (g.col(2 * n + i) - g.col(3 * n + i)) / (2 * h);
    }
    return out;
}

Mat2 jacobian(const PointMap& map, const Vec2& z, double h) {
    Points zz = z;
    return jacobians(map, zz, h)[0];
}

double sigma_max(const Mat2& J) {
    const Mat2 G = J.transpose() * J;
    const double tr = G.trace(), det = G.determinant();
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    return std::sqrt(std::max(0.0, 0.5 * tr + disc));
}

double map_lipschitz_hat(const PointMap& map, double delta, int n_samples, double h,
                         std::uint64_t rng_seed) {
    require(n_samples >= 1, "need at least one sample");
    const Points z = uniform_annulus_sample(derive_seed(rng_seed, "map-lipschitz"), delta, n_samples);
    double best = 0.0;
    for (const auto& J : jacobians(map, z, h)) best = std::max(best, sigma_max(J));
    return best;
}

double velocity_lipschitz_hat(const VelocityField& field, double delta, const TargetSpec& target,
                              std::uint64_t rng_seed, const VelocityLipschitzOptions& o) {
    require(o.n_pts >= 1 && o.power_iters >= 1 && o.h > 0.0, "invalid velocity Lipschitz options");
    const int n = o.n_pts;
    const Points z0 = uniform_annulus_sample(derive_seed(rng_seed, "vlip-source"), delta, n);
    const Points x1 = target.sample(derive_seed(rng_seed, "vlip-target"), n);
    const CouplingPlan plan = sinkhorn_plan(z0, x1, o.eps_sink, o.sinkhorn_iters);
    const auto pairs = sample_pairs(plan, derive_seed(rng_seed, "vlip-pairs"));
    Rng rng(rng_seed, "vlip-s");
    Eigen::RowVectorXd s(n);
    Points y(2, n);
    for (int i = 0; i < n; ++i) {
        s(i) = rng.uniform();
        y.col(i) = (1.0 - s(i)) * z0.col(pairs[i].first) + s(i) * x1.col(pairs[i].second);
    }
    Eigen::RowVectorXd s4(4 * n);
    Points y4(2, 4 * n);
    for (int b = 0; b < 4; ++b) {
        s4.segment(b * n, n) = s;
        y4.middleCols(b * n, n) = y;
    }
    y4.row(0).segment(0, n).array() += o.h;
    y4.row(0).segment(n, n).array() -= o.h;
    y4.row(1).segment(2 * n, n).array() += o.h;
    y4.row(1).segment(3 * n, n).array() -= o.h;
    const Points v = field.eval(s4, y4);
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        Mat2 J;
        J.col(0) = (v.col(i) - v.col(n + i)) / (2 * o.h);
        J.col(1) = (v.col(2 * n + i) - v.col(3 * n + i)) / (2 * o.h);
        const Mat2 G = J.transpose() * J;
        const double th = 2.0 * std::numbers::pi * rng.uniform();
        Vec2 w(std::cos(th), std::sin(th));
        for (int it = 0; it < o.power_iters; ++it) {
            const Vec2 next = G * w;
            const double nn = next.norm();
            if (nn == 0.0) break;
            w = next / nn;
        }
        best = std::max(best, (J * w).norm());
    }
    return best;
}

// ---------------------------------------------------------------- hessians

Points hessian_stencil(const Points& z, double h) {
    require(h > 0.0, "finite-difference step must be positive");
    static const int off[9][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                  {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    const Eigen::Index n = z.cols();
    Points out(2, 9 * n);
    for (int k = 0; k < 9; ++k) {
        out.middleCols(k * n, n) = z;
        out.row(0).segment(k * n, n).array() += off[k][0] * h;
        out.row(1).segment(k * n, n).array() += off[k][1] * h;
    }
    return out;
}

HessianFd hessians_from_stencil(const Points& g, Eigen::Index n, double h) {
    HessianFd out;
    out.h1.resize(static_cast<std::size_t>(n));
    out.h2.resize(static_cast<std::size_t>(n));
    out.frobenius_sq.resize(n);
    const double h2 = h * h;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto G = [&](int k) { return g.col(k * n + i); };
        const Vec2 d11 = (G(1) - 2.0 * G(0) + G(2)) / h2;
        const Vec2 d22 = (G(3) - 2.0 * G(0) + G(4)) / h2;
        const Vec2 d12 = (G(5) - G(6) - G(7) + G(8)) / (4.0 * h2);
        out.h1[i] << d11(0), d12(0), d12(0), d22(0);
        out.h2[i] << d11(1), d12(1), d12(1), d22(1);
        out.frobenius_sq(i) = d11.squaredNorm() + d22.squaredNorm() + 2.0 * d12.squaredNorm();
    }
    return out;
}

HessianFd hessians(const PointMap& map, const Points& z, double h) {
    return hessians_from_stencil(map.apply(hessian_stencil(z, h)), z.cols(), h);
}

double hessian_norm_hat(const PointMap& map, double delta, int n_samples, double h,
                        std::uint64_t rng_seed) {
    const Points z = uniform_annulus_sample(derive_seed(rng_seed, "hessian-norm"), delta, n_samples);
    const HessianFd H = hessians(map, z, h);
    double best = 0.0;
    for (std::size_t i = 0; i < H.h1.size(); ++i) {
        Eigen::SelfAdjointEigenSolver<Mat2> e1(H.h1[i], Eigen::EigenvaluesOnly);
        Eigen::SelfAdjointEigenSolver<Mat2> e2(H.h2[i], Eigen::EigenvaluesOnly);
        const double a = e1.eigenvalues().cwiseAbs().maxCoeff();
        const double b = e2.eigenvalues().cwiseAbs().maxCoeff();
        best = std::max(best, std::sqrt(a * a + b * b));
    }
    return best;
}

// ---------------------------------------------------------------- lookup

LookupTable::LookupTable(int resolution, const BBox& bbox, Eigen::MatrixXd gx, Eigen::MatrixXd gy)
    : res_(resolution), bbox_(bbox), gx_(std::move(gx)), gy_(std::move(gy)) {
    require(resolution >= 2, "lookup table needs at least 2 nodes per axis");
    bbox.validate();
    require(gx_.rows() == res_ && gx_.cols() == res_ && gy_.rows() == res_ && gy_.cols() == res_,
            "lookup table node arrays have the wrong shape");
}

Points LookupTable::apply(const Points& z) const {
    Points out(2, z.cols());
    const double sx = (res_ - 1) / bbox_.width(), sy = (res_ - 1) / bbox_.height();
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
        const double fx = std::clamp((z(0, k) - bbox_.xmin) * sx, 0.0, res_ - 1.0);
        const double fy = std::clamp((z(1, k) - bbox_.ymin) * sy, 0.0, res_ - 1.0);
        const int j = std::min(static_cast<int>(fx), res_ - 2);
        const int i = std::min(static_cast<int>(fy), res_ - 2);
        const double tx = fx - j, ty = fy - i;
        const double w00 = (1 - tx) * (1 - ty), w01 = tx * (1 - ty), w10 = (1 - tx) * ty, w11 = tx * ty;
        out(0, k) = w00 * gx_(i, j) + w01 * gx_(i, j + 1) + w10 * gx_(i + 1, j) + w11 * gx_(i + 1, j + 1);
        out(1, k) = w00 * gy_(i, j) + w01 * gy_(i, j + 1) + w10 * gy_(i + 1, j) + w11 * gy_(i + 1, j + 1);
    }
    return out;
}

LookupTable lookup_table(const PointMap& map, int resolution, double delta, const BBox& bbox,
                         int n_probe, double tolerance, std::uint64_t rng_seed) {
    require(resolution >= 2, "lookup table needs at least 2 nodes per axis");
    require(bbox.xmin <= -1.0 && bbox.xmax >= 1.0 && bbox.ymin <= -1.0 && bbox.ymax >= 1.0,
            "lookup grid must cover the annulus bounding square");
    const int R = resolution;
    Points nodes(2, R * R);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < R; ++j) {
            nodes(0, i * R + j) = bbox.xmin + bbox.width() * j / (R - 1);
            nodes(1, i * R + j) = bbox.ymin + bbox.height() * i / (R - 1);
        }
    const Points g = map.apply(nodes);
    Eigen::MatrixXd gx(R, R), gy(R, R);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < R; ++j) {
            gx(i, j) = g(0, i * R + j);
            gy(i, j) = g(1, i * R + j);
        }
    LookupTable lut(R, bbox, std::move(gx), std::move(gy));
    lut.probe_tolerance = tolerance;
    if (n_probe > 0) {
        const Points z = uniform_annulus_sample(derive_seed(rng_seed, "lut-probe"), delta, n_probe);
        lut.probe_max_error = (lut.apply(z) - map.apply(z)).colwise().norm().maxCoeff();
        lut.probe_ok = lut.probe_max_error <= tolerance;
    }
    return lut;
}

}  // namespace ergoflow
