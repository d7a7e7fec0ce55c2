#include "ergoflow/mlp.hpp"

#include <cmath>
#include <numbers>

#include "ergoflow/rng.hpp"

namespace ergoflow {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_activation(Activation a, const Eigen::MatrixXd& z, Eigen::MatrixXd& out) {
    if (a == Activation::Identity) {
        out = z;
        return;
    }
    out = (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

// delta <- delta * act'(z)
void apply_activation_grad(Activation a, const Eigen::MatrixXd& z, Eigen::MatrixXd& delta) {
    if (a == Activation::Identity) return;
    const Eigen::ArrayXXd sig = (1.0 + (-z.array()).exp()).inverse();
    delta.array() *= sig * (1.0 + z.array() * (1.0 - sig));
}

}  // namespace

double silu_derivative_bound() {
    static const double value = [] {
        // silu''(x) = sig'(x) (2 + x (1 - 2 sig(x))); Newton on the bracket term.
        auto g = [](double x) { return 2.0 + x * (1.0 - 2.0 * sigmoid(x)); };
        double x = 2.4;
        for (int i = 0; i < 60; ++i) {
            const double h = 1e-6;
            const double d = (g(x + h) - g(x - h)) / (2 * h);
            const double step = g(x) / d;
            x -= step;
            if (std::abs(step) < 1e-15) break;
        }
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
    }();
    return value;
}

double activation_lipschitz(Activation a) {
    return a == Activation::SiLU ? silu_derivative_bound() : 1.0;
}

void NetConfig::validate() const {
    require(depth >= 2, "net depth must be at least 2");
    require(hidden_dim >= 1, "hidden_dim must be positive");
}

// ---------------------------------------------------------------- params

MlpParams MlpParams::zeros(const NetConfig& config) {
    config.validate();
    MlpParams p;
    p.config = config;
    const int L = config.n_layers();
    for (int l = 0; l < L; ++l) {
        const int in = l == 0 ? 3 : config.hidden_dim;
        const int out = l == L - 1 ? 2 : config.hidden_dim;
        p.weights.push_back(Eigen::MatrixXd::Zero(out, in));
        p.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return p;
}

MlpParams MlpParams::init(const NetConfig& config, std::uint64_t seed) {
    MlpParams p = zeros(config);
    Rng rng(seed, "mlp-init");
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, the
    // common framework default; the input layer gets wide, spread-out kinks.
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        auto& W = p.weights[l];
        const double a = 1.0 / std::sqrt(static_cast<double>(W.cols()));
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-a, a);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = rng.uniform(-a, a);
    }
    return p;
}

std::size_t MlpParams::n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

bool MlpParams::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
}

void MlpParams::validate() const {
    config.validate();
    const int L = config.n_layers();
    if (static_cast<int>(weights.size()) != L || static_cast<int>(biases.size()) != L)
        throw DomainError("layer count does not match config depth");
    for (int l = 0; l < L; ++l) {
        const int in = l == 0 ? 3 : config.hidden_dim;
        const int out = l == L - 1 ? 2 : config.hidden_dim;
        if (weights[l].rows() != out || weights[l].cols() != in || biases[l].size() != out)
            throw DomainError("layer " + std::to_string(l) + " has the wrong shape");
    }
    if (!all_finite()) throw NumericError("parameters contain non-finite entries");
}

void MlpParams::set_zero() {
    for (auto& W : weights) W.setZero();
    for (auto& b : biases) b.setZero();
}

void MlpParams::axpy(double a, const MlpParams& x) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += a * x.weights[l];
        biases[l] += a * x.biases[l];
    }
}

void MlpParams::scale(double a) {
    for (auto& W : weights) W *= a;
    for (auto& b : biases) b *= a;
}

double MlpParams::dot(const MlpParams& o) const {
    double s = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        s += weights[l].cwiseProduct(o.weights[l]).sum() + biases[l].dot(o.biases[l]);
    return s;
}

Eigen::VectorXd MlpParams::flatten() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(n_params()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.segment(k, weights[l].size()) = weights[l].reshaped();
        k += weights[l].size();
        out.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return out;
}

void MlpParams::assign_flat(const Eigen::VectorXd& flat) {
    require(flat.size() == static_cast<Eigen::Index>(n_params()), "flat parameter size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l].reshaped() = flat.segment(k, weights[l].size());
        k += weights[l].size();
        biases[l] = flat.segment(k, biases[l].size());
        k += biases[l].size();
    }
}

// ---------------------------------------------------------------- forward

Eigen::MatrixXd stack_inputs(const Eigen::RowVectorXd& s, const Points& y) {
    require(s.size() == y.cols(), "s and y batch sizes differ");
    Eigen::MatrixXd x(3, y.cols());
    x.row(0) = s;
    x.bottomRows(2) = y;
    return x;
}

Points forward(const MlpParams& p, const Eigen::MatrixXd& x) {
    require(x.rows() == 3, "net input must have 3 rows");
    if (!x.allFinite()) throw NumericError("non-finite net input");
    const std::size_t L = p.weights.size();
    Eigen::MatrixXd a = x, z;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        z.noalias() = p.weights[l] * a;
        z.colwise() += p.biases[l];
        apply_activation(p.config.activation, z, a);
    }
    Points out = p.weights[L - 1] * a;
    out.colwise() += p.biases[L - 1];
    return out;
}

Points forward(const MlpParams& p, const Eigen::RowVectorXd& s, const Points& y) {
    return forward(p, stack_inputs(s, y));
}

Points forward(const MlpParams& p, double s, const Points& y) {
    return forward(p, stack_inputs(Eigen::RowVectorXd::Constant(y.cols(), s), y));
}

Vec2 forward(const MlpParams& p, double s, const Vec2& y) {
    Points yy = y;
    return forward(p, s, yy).col(0);
}

Points forward_cached(const MlpParams& p, const Eigen::MatrixXd& x, ForwardCache& cache) {
    require(x.rows() == 3, "net input must have 3 rows");
    if (!x.allFinite()) throw NumericError("non-finite net input");
    const std::size_t L = p.weights.size();
    cache.inputs.resize(L);
    cache.pre.resize(L - 1);
    cache.inputs[0] = x;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        cache.pre[l].noalias() = p.weights[l] * cache.inputs[l];
        cache.pre[l].colwise() += p.biases[l];
        apply_activation(p.config.activation, cache.pre[l], cache.inputs[l + 1]);
    }
    Points out = p.weights[L - 1] * cache.inputs[L - 1];
    out.colwise() += p.biases[L - 1];
    return out;
}

Eigen::MatrixXd backward(const MlpParams& p, const ForwardCache& cache, const Points& dout,
                         MlpParams* grads) {
    const std::size_t L = p.weights.size();
    require(dout.cols() == cache.inputs[0].cols(), "upstream gradient batch size mismatch");
    Eigen::MatrixXd delta = dout, next;
    for (std::size_t l = L; l-- > 0;) {
        if (grads) {
            grads->weights[l].noalias() += delta * cache.inputs[l].transpose();
            grads->biases[l] += delta.rowwise().sum();
        }
        next.noalias() = p.weights[l].transpose() * delta;
        if (l > 0) apply_activation_grad(p.config.activation, cache.pre[l - 1], next);
        delta.swap(next);
    }
    return delta;
}

LossGrad loss_and_grad(const MlpParams& p, const RegressionBatch& batch) {
    const Eigen::Index n = batch.y.cols();
    if (n == 0) throw DomainError("empty regression batch");
    if (batch.s.size() != n || batch.u.cols() != n) throw DomainError("regression batch shape mismatch");
    ForwardCache cache;
    const Points v = forward_cached(p, stack_inputs(batch.s, batch.y), cache);
    const Points r = v - batch.u;
    LossGrad out;
    out.loss = r.squaredNorm() / static_cast<double>(n);
    out.grads = MlpParams::zeros(p.config);
    backward(p, cache, (2.0 / static_cast<double>(n)) * r, &out.grads);
    return out;
}

// ---------------------------------------------------------------- adam

AdamState AdamState::create(const MlpParams& like, const AdamConfig& config) {
    require(config.horizon >= 1, "Adam horizon must be positive");
    AdamState s;
    s.config = config;
    s.m = MlpParams::zeros(like.config);
    s.v = MlpParams::zeros(like.config);
    return s;
}

double cosine_lr(double base, int step, int horizon) {
    require(horizon >= 1 && step >= 1 && step <= horizon, "learning-rate step outside schedule");
    return 0.5 * base * (1.0 + std::cos(std::numbers::pi * step / horizon));
}

void adam_step(MlpParams& p, AdamState& st, const MlpParams& g) {
    if (st.step >= st.config.horizon) throw DomainError("Adam step beyond schedule horizon");
    ++st.step;
    const auto& c = st.config;
    st.lr = cosine_lr(c.lr_base, st.step, c.horizon);
    const double bc1 = 1.0 - std::pow(c.beta1, st.step);
    const double bc2 = 1.0 - std::pow(c.beta2, st.step);
    auto update = [&](auto& w, auto& m, auto& v, const auto& grad) {
        m.array() = c.beta1 * m.array() + (1.0 - c.beta1) * grad.array();
        v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * grad.array().square();
        w.array() -= st.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        update(p.weights[l], st.m.weights[l], st.v.weights[l], g.weights[l]);
        update(p.biases[l], st.m.biases[l], st.v.biases[l], g.biases[l]);
    }
}

// ---------------------------------------------------------------- spectra

double spectral_norm(const Eigen::MatrixXd& W, double rel_tol, int max_iter) {
    if (W.size() == 0) return 0.0;
    if (W.rows() <= 2 || W.cols() <= 2) {
        // Gram matrix of the short side is at most 2x2: closed-form top eigenvalue.
        const Eigen::MatrixXd G = W.rows() <= 2 ? Eigen::MatrixXd(W * W.transpose())
                                                : Eigen::MatrixXd(W.transpose() * W);
        if (G.rows() == 1) return std::sqrt(G(0, 0));
        const double tr = G(0, 0) + G(1, 1);
        const double det = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        return std::sqrt(std::max(0.0, 0.5 * tr + disc));
    }
    Eigen::VectorXd v = Eigen::VectorXd::Ones(W.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.01 * std::sin(1.0 + i);
    v.normalize();
    double lambda = 0.0;
    Eigen::VectorXd w(W.rows()), u(W.cols());
    for (int it = 0; it < max_iter; ++it) {
        w.noalias() = W * v;
        u.noalias() = W.transpose() * w;
        const double next = v.dot(u);
        const double nu = u.norm();
        if (nu == 0.0) return 0.0;
        v = u / nu;
        if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(0.0, lambda));
}

std::vector<double> spectral_norms(const MlpParams& p) {
    std::vector<double> out;
    out.reserve(p.weights.size());
    for (const auto& W : p.weights) out.push_back(spectral_norm(W));
    return out;
}

double lv_net(const MlpParams& p) {
    double prod = std::pow(activation_lipschitz(p.config.activation), p.config.depth);
    for (double s : spectral_norms(p)) prod *= s;
    return prod;
}

}  // namespace ergoflow
