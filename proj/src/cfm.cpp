#include "ergoflow/cfm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ergoflow/flow.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/ot.hpp"
#include "ergoflow/rng.hpp"

namespace ergoflow {

namespace {

Eigen::MatrixXd net_input(double s, const Points& y) {
    return stack_inputs(Eigen::RowVectorXd::Constant(y.cols(), s), y);
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(lr_base > 0.0)) throw ConfigError("lr_base must be positive");
    if (!(eps_sink > 0.0)) throw ConfigError("eps_sink must be positive");
    if (sinkhorn_iters < 1) throw ConfigError("sinkhorn_iters must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (lambda_nfz < 0.0 || lambda_acc < 0.0 || lambda_energy < 0.0)
        throw ConfigError("penalty weights must be nonnegative");
    if (lambda_nfz > 0.0 && nfz_discs.empty())
        throw ConfigError("lambda_nfz > 0 requires at least one nfz disc");
    for (const auto& d : nfz_discs)
        if (!(d.radius > 0.0)) throw ConfigError("nfz disc radius must be positive");
    if (rk4_steps_train < 1) throw ConfigError("rk4_steps_train must be at least 1");
    if (penalty_sample_count < 1 || acc_sample_count < 1)
        throw ConfigError("penalty sample counts must be positive");
    if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
    if (energy_chunk_len < 1 || energy_chunk_len > rk4_steps_train)
        throw ConfigError("energy_chunk_len must lie in [1, rk4_steps_train]");
    try {
        net.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

// ---------------------------------------------------------------- adjoint

Points integrate_taped(const MlpParams& p, const Points& z0, int n_steps, FlowTape& tape) {
    require(n_steps >= 1, "need at least one RK4 step");
    const double h = 1.0 / n_steps;
    tape.n_steps = n_steps;
    tape.states.assign(1, z0);
    Points y = z0;
    for (int k = 0; k < n_steps; ++k) {
        const double s = k * h;
        const Points k1 = forward(p, s, y);
        const Points k2 = forward(p, s + 0.5 * h, Points(y + 0.5 * h * k1));
        const Points k3 = forward(p, s + 0.5 * h, Points(y + 0.5 * h * k2));
        const Points k4 = forward(p, s + h, Points(y + h * k3));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite()) throw NumericError("non-finite state at RK4 step " + std::to_string(k + 1));
        tape.states.push_back(y);
    }
    return y;
}

void rk4_adjoint(const MlpParams& p, const FlowTape& tape, const Points& ybar_final,
                 double energy_coef, int chunk_len, MlpParams& grads) {
    const int N = tape.n_steps;
    const double h = 1.0 / N;
    require(chunk_len >= 1, "chunk_len must be positive");
    Points ybar = ybar_final;
    ForwardCache c1, c2, c3, c4;
    for (int k = N - 1; k >= 0; --k) {
        if ((k + 1) % chunk_len == 0 && k + 1 < N) ybar.setZero();
        const double s = k * h;
        const Points& y = tape.states[k];
        const Points k1 = forward_cached(p, net_input(s, y), c1);
        const Points k2 = forward_cached(p, net_input(s + 0.5 * h, y + 0.5 * h * k1), c2);
        const Points k3 = forward_cached(p, net_input(s + 0.5 * h, y + 0.5 * h * k2), c3);
        const Points k4 = forward_cached(p, net_input(s + h, y + h * k3), c4);

        Points kb1 = (h / 6.0) * ybar, kb2 = (h / 3.0) * ybar, kb3 = (h / 3.0) * ybar,
               kb4 = (h / 6.0) * ybar;
        if (energy_coef != 0.0) {
            const double w = 2.0 * energy_coef * h / 6.0;
            kb1 += w * k1;
            kb2 += 2.0 * w * k2;
            kb3 += 2.0 * w * k3;
            kb4 += w * k4;
        }
        Points yb = ybar;
        const Points d4 = backward(p, c4, kb4, &grads).bottomRows(2);
        yb += d4;
        kb3 += h * d4;
        const Points d3 = backward(p, c3, kb3, &grads).bottomRows(2);
        yb += d3;
        kb2 += 0.5 * h * d3;
        const Points d2 = backward(p, c2, kb2, &grads).bottomRows(2);
        yb += d2;
        kb1 += 0.5 * h * d2;
        yb += backward(p, c1, kb1, &grads).bottomRows(2);
        ybar.swap(yb);
    }
}

// ---------------------------------------------------------------- penalties

PenaltyValue nfz_penalty(const MlpParams& p, const Points& z, const std::vector<Disc>& discs,
                         int rk4_steps) {
    require(!discs.empty(), "nfz penalty needs at least one disc");
    require(z.cols() >= 1, "nfz penalty needs latent samples");
    FlowTape tape;
    const Points y = integrate_taped(p, z, rk4_steps, tape);
    const double inv_n = 1.0 / static_cast<double>(z.cols());
    PenaltyValue out;
    out.grads = MlpParams::zeros(p.config);
    Points ybar = Points::Zero(2, z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        for (const auto& d : discs) {
            const Vec2 diff = y.col(i) - d.center;
            const double dist = diff.norm();
            const double depth = d.radius - dist;
            if (depth <= 0.0) continue;
            out.value += depth * depth * inv_n;
            if (dist > 0.0) ybar.col(i) += -2.0 * depth * inv_n * diff / dist;
        }
    }
    if (out.value > 0.0) rk4_adjoint(p, tape, ybar, 0.0, rk4_steps, out.grads);
    return out;
}

PenaltyValue acc_penalty(const MlpParams& p, const Points& z, double h, int rk4_steps) {
    require(h > 0.0, "fd_step must be positive");
    require(z.cols() >= 1, "acceleration penalty needs latent samples");
    const Eigen::Index n = z.cols();
    FlowTape tape;
    const Points g = integrate_taped(p, hessian_stencil(z, h), rk4_steps, tape);
    const HessianFd H = hessians_from_stencil(g, n, h);
    PenaltyValue out;
    out.value = H.frobenius_sq.mean();
    out.grads = MlpParams::zeros(p.config);
    const double c = 1.0 / (static_cast<double>(n) * h * h);
    Points ybar = Points::Zero(2, 9 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto G = [&](int k) { return g.col(k * n + i); };
        const Vec2 d11 = (G(1) - 2.0 * G(0) + G(2)) / (h * h);
        const Vec2 d22 = (G(3) - 2.0 * G(0) + G(4)) / (h * h);
        const Vec2 d12 = (G(5) - G(6) - G(7) + G(8)) / (4.0 * h * h);
        auto B = [&](int k) { return ybar.col(k * n + i); };
        B(0) += -4.0 * c * (d11 + d22);
        B(1) += 2.0 * c * d11;
        B(2) += 2.0 * c * d11;
        B(3) += 2.0 * c * d22;
        B(4) += 2.0 * c * d22;
        B(5) += c * d12;
        B(6) -= c * d12;
        B(7) -= c * d12;
        B(8) += c * d12;
    }
    rk4_adjoint(p, tape, ybar, 0.0, rk4_steps, out.grads);
    return out;
}

PenaltyValue energy_penalty(const MlpParams& p, const Points& z, int rk4_steps, int chunk_len) {
    require(chunk_len >= 1 && chunk_len <= rk4_steps, "chunk_len must lie in [1, rk4_steps]");
    require(z.cols() >= 1, "energy penalty needs latent samples");
    const double h = 1.0 / rk4_steps;
    const double inv_n = 1.0 / static_cast<double>(z.cols());
    PenaltyValue out;
    out.grads = MlpParams::zeros(p.config);
    FlowTape tape;
    integrate_taped(p, z, rk4_steps, tape);
    for (int k = 0; k < rk4_steps; ++k) {
        const double s = k * h;
        const Points& y = tape.states[k];
        const Points k1 = forward(p, s, y);
        const Points k2 = forward(p, s + 0.5 * h, Points(y + 0.5 * h * k1));
        const Points k3 = forward(p, s + 0.5 * h, Points(y + 0.5 * h * k2));
        const Points k4 = forward(p, s + h, Points(y + h * k3));
        out.value += inv_n * h / 6.0 *
                     (k1.squaredNorm() + 2.0 * k2.squaredNorm() + 2.0 * k3.squaredNorm() +
                      k4.squaredNorm());
    }
    rk4_adjoint(p, tape, Points::Zero(2, z.cols()), inv_n, chunk_len, out.grads);
    return out;
}

NfzPenalty::NfzPenalty(std::vector<Disc> discs, int rk4_steps)
    : discs_(std::move(discs)), steps_(rk4_steps) {}
PenaltyValue NfzPenalty::evaluate(const MlpParams& p, const Points& z) const {
    return nfz_penalty(p, z, discs_, steps_);
}

AccelerationPenalty::AccelerationPenalty(double fd_step, int rk4_steps) : h_(fd_step), steps_(rk4_steps) {}
PenaltyValue AccelerationPenalty::evaluate(const MlpParams& p, const Points& z) const {
    return acc_penalty(p, z, h_, steps_);
}

EnergyPenalty::EnergyPenalty(int rk4_steps, int chunk_len) : steps_(rk4_steps), chunk_(chunk_len) {}
PenaltyValue EnergyPenalty::evaluate(const MlpParams& p, const Points& z) const {
    return energy_penalty(p, z, steps_, chunk_);
}

double nfz_penalty_value(const PointMap& map, const Points& z, const std::vector<Disc>& discs) {
    require(!discs.empty(), "nfz penalty needs at least one disc");
    const Points y = map.apply(z);
    double v = 0.0;
    for (Eigen::Index i = 0; i < y.cols(); ++i)
        for (const auto& d : discs) {
            const double depth = d.radius - (y.col(i) - d.center).norm();
            if (depth > 0.0) v += depth * depth;
        }
    return v / static_cast<double>(z.cols());
}

double acc_penalty_value(const PointMap& map, const Points& z, double fd_step) {
    return hessians(map, z, fd_step).frobenius_sq.mean();
}

// ---------------------------------------------------------------- training

CfmLoss cfm_batch_loss(const MlpParams& p, const Points& source, const Points& target,
                       const std::vector<std::pair<int, int>>& pairs, std::uint64_t rng_seed) {
    const auto n = static_cast<Eigen::Index>(pairs.size());
    if (n == 0) throw DomainError("cfm loss needs at least one pair");
    RegressionBatch batch;
    batch.s.resize(n);
    batch.y.resize(2, n);
    batch.u.resize(2, n);
    Rng rng(rng_seed, "cfm-s");
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [i, j] = pairs[static_cast<std::size_t>(k)];
        if (i < 0 || i >= source.cols() || j < 0 || j >= target.cols())
            throw DomainError("pair index out of range");
        const double s = rng.uniform();
        batch.s(k) = s;
        batch.y.col(k) = (1.0 - s) * source.col(i) + s * target.col(j);
        batch.u.col(k) = target.col(j) - source.col(i);
    }
    LossGrad lg = loss_and_grad(p, batch);
    return {lg.loss, std::move(lg.grads)};
}

TrainResult train(const TrainConfig& cfg, const TargetSpec& target, const TrainProgress& progress) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    struct Term {
        double lambda;
        std::unique_ptr<Penalty> penalty;
        int samples;
        std::vector<double>* log;
    };
    TrainResult res;
    TrainLog& log = res.log;
    std::vector<Term> terms;
    if (cfg.lambda_nfz > 0.0)
        terms.push_back({cfg.lambda_nfz, std::make_unique<NfzPenalty>(cfg.nfz_discs, cfg.rk4_steps_train),
                         cfg.penalty_sample_count, &log.nfz});
    if (cfg.lambda_acc > 0.0)
        terms.push_back({cfg.lambda_acc, std::make_unique<AccelerationPenalty>(cfg.fd_step, cfg.rk4_steps_train),
                         cfg.acc_sample_count, &log.acc});
    if (cfg.lambda_energy > 0.0)
        terms.push_back({cfg.lambda_energy,
                         std::make_unique<EnergyPenalty>(cfg.rk4_steps_train, cfg.energy_chunk_len),
                         cfg.penalty_sample_count, &log.energy});

    MlpParams params = MlpParams::init(cfg.net, derive_seed(cfg.seed, "net"));
    AdamConfig ac;
    ac.lr_base = cfg.lr_base;
    ac.horizon = cfg.epochs;
    AdamState adam = AdamState::create(params, ac);
    double residual_sum = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e = static_cast<std::uint64_t>(epoch);
        const Points z0 = uniform_annulus_sample(derive_seed(cfg.seed, "source", e), cfg.delta, cfg.batch_size);
        const Points x1 = target.sample(derive_seed(cfg.seed, "target", e), cfg.batch_size);
        const CouplingPlan plan = sinkhorn_plan(z0, x1, cfg.eps_sink, cfg.sinkhorn_iters);
        residual_sum += plan.raw_row_residual + plan.raw_col_residual;

        CfmLoss cl;
        if (cfg.pairing == Pairing::Categorical) {
            const auto pairs = sample_pairs(plan, derive_seed(cfg.seed, "pairs", e));
            cl = cfm_batch_loss(params, z0, x1, pairs, derive_seed(cfg.seed, "interp", e));
        } else if (cfg.pairing == Pairing::Permutation) {
            cl = cfm_batch_loss(params, z0, x1, permutation_pairs(plan), derive_seed(cfg.seed, "interp", e));
        } else {
            std::vector<std::pair<int, int>> pairs(static_cast<std::size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) pairs[i] = {i, i};
            cl = cfm_batch_loss(params, z0, barycentric_targets(plan, x1), pairs,
                                derive_seed(cfg.seed, "interp", e));
        }
        double total = cl.loss;
        MlpParams grads = std::move(cl.grads);
        for (auto& t : terms) {
            const Points zp = uniform_annulus_sample(derive_seed(cfg.seed, "penalty-" + t.penalty->name(), e),
                                                     cfg.delta, t.samples);
            const PenaltyValue pv = t.penalty->evaluate(params, zp);
            t.log->push_back(pv.value);
            total += t.lambda * pv.value;
            grads.axpy(t.lambda, pv.grads);
        }
        if (!std::isfinite(total) || !grads.all_finite())
            throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch), params, epoch);
        log.cfm_loss.push_back(cl.loss);
        log.total.push_back(total);
        adam_step(params, adam, grads);
        log.lr.push_back(adam.lr);
        log.epochs = epoch + 1;
        if (progress) progress(epoch, log);
    }
    for (auto* v : {&log.nfz, &log.acc, &log.energy})
        if (v->empty()) v->assign(static_cast<std::size_t>(cfg.epochs), 0.0);

    log.sinkhorn_raw_residual = residual_sum / cfg.epochs;
    {
        const Points z0 = uniform_annulus_sample(derive_seed(cfg.seed, "gap-source"), cfg.delta, cfg.batch_size);
        const Points x1 = target.sample(derive_seed(cfg.seed, "gap-target"), cfg.batch_size);
        const CouplingPlan plan = sinkhorn_plan(z0, x1, cfg.eps_sink, cfg.sinkhorn_iters);
        const RowMatrix C = sq_euclidean_cost(z0, x1);
        const double exact = solve_assignment(C).cost / cfg.batch_size;
        log.sinkhorn_gap = transport_cost(plan, C) - exact;
    }
    log.eps_v = log.epochs >= 20 ? epsilon_v_from_log(log) : std::sqrt(std::max(0.0, log.cfm_loss.back()));
    log.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    res.params = std::move(params);
    return res;
}

double epsilon_v_from_log(const TrainLog& log) {
    const std::size_t n = log.cfm_loss.size();
    if (n < 20) throw DomainError("training log too short for a plateau estimate (need 20 epochs)");
    const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * n)));
    std::vector<double> tail(log.cfm_loss.end() - static_cast<std::ptrdiff_t>(w), log.cfm_loss.end());
    std::sort(tail.begin(), tail.end());
    const double med = tail.size() % 2 ? tail[tail.size() / 2]
                                       : 0.5 * (tail[tail.size() / 2 - 1] + tail[tail.size() / 2]);
    return std::sqrt(std::max(0.0, med));
}

}  // namespace ergoflow
