#pragma once

#include <cstdint>
#include <vector>

#include "ergoflow/common.hpp"

namespace ergoflow {

enum class Activation { SiLU, Identity };

// max |silu'(x)|, attained near x = 2.3994.
double silu_derivative_bound();
double activation_lipschitz(Activation a);

// depth counts hidden layers (and therefore activations); the network has
// depth + 1 affine layers: 3 -> hidden -> ... -> hidden -> 2.
struct NetConfig {
    int depth = 4;
    int hidden_dim = 256;
    Activation activation = Activation::SiLU;

    void validate() const;
    int n_layers() const { return depth + 1; }
};

struct MlpParams {
    NetConfig config;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static MlpParams zeros(const NetConfig& config);
    // Gaussian weights with std 1/(sqrt(fan_in) + sqrt(fan_out)), zero biases.
    // Each layer starts with spectral norm close to 1.
    static MlpParams init(const NetConfig& config, std::uint64_t seed);

    std::size_t n_params() const;
    bool all_finite() const;
    void validate() const;

    void set_zero();
    void axpy(double a, const MlpParams& x);  // this += a * x
    void scale(double a);
    double dot(const MlpParams& other) const;

    Eigen::VectorXd flatten() const;
    void assign_flat(const Eigen::VectorXd& flat);
};

// Inputs are stacked as a 3 x N matrix with rows (s, y1, y2).
Eigen::MatrixXd stack_inputs(const Eigen::RowVectorXd& s, const Points& y);

struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each affine layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
};

Points forward(const MlpParams& p, const Eigen::MatrixXd& x);
Points forward(const MlpParams& p, const Eigen::RowVectorXd& s, const Points& y);
Points forward(const MlpParams& p, double s, const Points& y);
Vec2 forward(const MlpParams& p, double s, const Vec2& y);

Points forward_cached(const MlpParams& p, const Eigen::MatrixXd& x, ForwardCache& cache);

// Reverse pass for upstream gradient dout (2 x N). Parameter gradients are
// accumulated into grads when it is non-null. Returns d/dx (3 x N).
Eigen::MatrixXd backward(const MlpParams& p, const ForwardCache& cache, const Points& dout,
                         MlpParams* grads);

struct RegressionBatch {
    Eigen::RowVectorXd s;
    Points y;
    Points u;  // target velocities
};

struct LossGrad {
    double loss = 0.0;
    MlpParams grads;
};

// Mean over the batch of |v(s_i, y_i) - u_i|^2.
LossGrad loss_and_grad(const MlpParams& p, const RegressionBatch& batch);

struct AdamConfig {
    double lr_base = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int horizon = 1000;  // number of steps in the cosine schedule
};

struct AdamState {
    AdamConfig config;
    MlpParams m;
    MlpParams v;
    int step = 0;
    double lr = 0.0;  // rate used by the most recent step

    static AdamState create(const MlpParams& like, const AdamConfig& config);
};

// Learning rate for step k in 1..horizon; reaches 0 at k = horizon.
double cosine_lr(double base, int step, int horizon);

void adam_step(MlpParams& p, AdamState& state, const MlpParams& grads);

// Largest singular value by power iteration on W^T W (exact for rank <= 2).
double spectral_norm(const Eigen::MatrixXd& W, double rel_tol = 1e-10, int max_iter = 50000);
std::vector<double> spectral_norms(const MlpParams& p);

// Architectural Lipschitz bound in y: L_act^depth * prod sigma_max(W_l).
double lv_net(const MlpParams& p);

}  // namespace ergoflow
