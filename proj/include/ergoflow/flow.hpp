#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ergoflow/common.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/mlp.hpp"
#include "ergoflow/trajectory.hpp"

namespace ergoflow {

class TargetSpec;

class VelocityField {
public:
    virtual ~VelocityField() = default;
    // One flow time per column of y.
    virtual Points eval(const Eigen::RowVectorXd& s, const Points& y) const = 0;
    Points eval(double s, const Points& y) const {
        return eval(Eigen::RowVectorXd::Constant(y.cols(), s), y);
    }
};

class MlpField : public VelocityField {
public:
    explicit MlpField(MlpParams p) : p_(std::move(p)) { p_.validate(); }
    using VelocityField::eval;
    Points eval(const Eigen::RowVectorXd& s, const Points& y) const override {
        return forward(p_, s, y);
    }
    const MlpParams& params() const { return p_; }

private:
    MlpParams p_;
};

// v(s, y) = A y + c
class LinearField : public VelocityField {
public:
    LinearField(const Mat2& A, const Vec2& c = Vec2::Zero()) : A_(A), c_(c) {}
    using VelocityField::eval;
    Points eval(const Eigen::RowVectorXd&, const Points& y) const override {
        Points out = A_ * y;
        out.colwise() += c_;
        return out;
    }

private:
    Mat2 A_;
    Vec2 c_;
};

// Any map R^2 -> R^2 evaluated column-wise.
class PointMap {
public:
    virtual ~PointMap() = default;
    virtual Points apply(const Points& z) const = 0;
    Vec2 apply(const Vec2& z) const;
};

class FunctionMap : public PointMap {
public:
    explicit FunctionMap(std::function<Vec2(const Vec2&)> f) : f_(std::move(f)) {}
    Points apply(const Points& z) const override;

private:
    std::function<Vec2(const Vec2&)> f_;
};

// Pushforward map G: fixed-step RK4 of the velocity field from s = 0 to 1.
class FlowMap : public PointMap {
public:
    FlowMap(std::shared_ptr<const VelocityField> field, int n_steps = 50);
    FlowMap(const MlpParams& params, int n_steps = 50);

    Points apply(const Points& z) const override;
    int n_steps() const { return n_steps_; }
    const VelocityField& field() const { return *field_; }
    // Network parameters when the field is an MLP, otherwise null.
    const MlpParams* params() const;

private:
    std::shared_ptr<const VelocityField> field_;
    int n_steps_;
};

Points integrate(const FlowMap& flow, const Points& z0);
Vec2 integrate(const FlowMap& flow, const Vec2& z0);

Trajectory pushforward_trajectory(const PointMap& map, const Trajectory& latent);
Trajectory pushforward_trajectory(const PointMap& map, const LatentTrajectory& latent);

// Central-difference Jacobian; columns (G(z + h e_i) - G(z - h e_i)) / 2h.
Mat2 jacobian(const PointMap& map, const Vec2& z, double h = 1e-3);
std::vector<Mat2> jacobians(const PointMap& map, const Points& z, double h = 1e-3);

double sigma_max(const Mat2& J);

// max_i sigma_max(J_G(z_i)) over uniform annulus samples. This is a sampled
// lower estimate of the Lipschitz constant, not a certificate.
double map_lipschitz_hat(const PointMap& map, double delta, int n_samples = 2048, double h = 1e-3,
                         std::uint64_t rng_seed = 0);

struct VelocityLipschitzOptions {
    int n_pts = 1024;
    int power_iters = 10;
    double h = 1e-3;
    double eps_sink = 0.05;
    int sinkhorn_iters = 50;
};

// Power iteration on J^T J of dv/dy at (s_i, y_i), s_i uniform and y_i on
// straight interpolants of Sinkhorn-coupled (annulus, target) pairs.
double velocity_lipschitz_hat(const VelocityField& field, double delta, const TargetSpec& target,
                              std::uint64_t rng_seed = 0, const VelocityLipschitzOptions& opts = {});

// Second derivatives of each output by a 9-point stencil (step h).
struct HessianFd {
    std::vector<Mat2> h1, h2;  // Hessians of G_1 and G_2 per sample
    Eigen::VectorXd frobenius_sq;  // |H_G|_F^2 per sample
};
HessianFd hessians(const PointMap& map, const Points& z, double h = 1e-2);

// The 9 stencil points (center, +-e1, +-e2, four diagonal corners) for every
// z, stacked as 9 blocks of z.cols() columns.
Points hessian_stencil(const Points& z, double h);
HessianFd hessians_from_stencil(const Points& g, Eigen::Index n, double h);

// max over samples of sqrt(|hess G_1|_op^2 + |hess G_2|_op^2).
double hessian_norm_hat(const PointMap& map, double delta, int n_samples = 512, double h = 1e-2,
                        std::uint64_t rng_seed = 0);

// Bilinear interpolation of G precomputed on a node grid.
class LookupTable : public PointMap {
public:
    LookupTable(int resolution, const BBox& bbox, Eigen::MatrixXd gx, Eigen::MatrixXd gy);

    Points apply(const Points& z) const override;
    int resolution() const { return res_; }
    const BBox& bbox() const { return bbox_; }
    const Eigen::MatrixXd& gx() const { return gx_; }
    const Eigen::MatrixXd& gy() const { return gy_; }

    double probe_max_error = 0.0;
    double probe_tolerance = 1e-2;
    bool probe_ok = true;

private:
    int res_;
    BBox bbox_;
    Eigen::MatrixXd gx_, gy_;  // (row = y index, col = x index)
};

// Nodes span bbox (default: the square [-1,1]^2 around the annulus). The
// audit compares against the direct map on n_probe annulus samples.
LookupTable lookup_table(const PointMap& map, int resolution, double delta, const BBox& bbox = {},
                         int n_probe = 1000, double tolerance = 1e-2, std::uint64_t rng_seed = 0);

}  // namespace ergoflow
