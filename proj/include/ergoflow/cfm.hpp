#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ergoflow/common.hpp"
#include "ergoflow/mlp.hpp"
#include "ergoflow/targets.hpp"

namespace ergoflow {

enum class Pairing { Categorical, Barycentric, Permutation };

struct TrainConfig {
    int epochs = 1000;
    int batch_size = 1024;
    double lr_base = 2e-3;
    double eps_sink = 0.05;
    int sinkhorn_iters = 50;
    std::uint64_t seed = 0;
    double delta = 0.01;
    double lambda_nfz = 0.0;
    double lambda_acc = 0.0;
    double lambda_energy = 0.0;
    std::vector<Disc> nfz_discs;
    int rk4_steps_train = 8;
    int penalty_sample_count = 256;  // latent samples per epoch for NFZ and energy
    int acc_sample_count = 32;       // latent samples per epoch for the Hessian penalty
    double fd_step = 1e-2;
    int energy_chunk_len = 8;
    Pairing pairing = Pairing::Categorical;
    NetConfig net;

    void validate() const;
};

struct TrainLog {
    std::vector<double> cfm_loss;
    std::vector<double> nfz;
    std::vector<double> acc;
    std::vector<double> energy;
    std::vector<double> total;
    std::vector<double> lr;
    double eps_v = 0.0;
    // Sinkhorn L1 marginal violation before rounding, averaged over epochs.
    double sinkhorn_raw_residual = 0.0;
    // Entropic-minus-exact transport cost on a final batch (R_sink proxy).
    double sinkhorn_gap = 0.0;
    double wall_clock_s = 0.0;
    int epochs = 0;
};

struct PenaltyValue {
    double value = 0.0;
    MlpParams grads;
};

// Integrates a batch with RK4 and keeps the step states for the adjoint.
struct FlowTape {
    int n_steps = 0;
    std::vector<Points> states;  // n_steps + 1 states
};

Points integrate_taped(const MlpParams& p, const Points& z0, int n_steps, FlowTape& tape);

// Discrete adjoint of RK4. ybar is dL/dy(1). When energy_coef != 0 the term
// energy_coef * sum_k h (|k1|^2 + 2|k2|^2 + 2|k3|^2 + |k4|^2) / 6 is added
// to L. Gradient through the state is cut every chunk_len steps.
void rk4_adjoint(const MlpParams& p, const FlowTape& tape, const Points& ybar, double energy_coef,
                 int chunk_len, MlpParams& grads);

// Soft-constraint term of the training loss. Implementations must be
// differentiable in the network parameters.
class Penalty {
public:
    virtual ~Penalty() = default;
    virtual std::string name() const = 0;
    virtual PenaltyValue evaluate(const MlpParams& p, const Points& latent) const = 0;
};

class NfzPenalty : public Penalty {
public:
    NfzPenalty(std::vector<Disc> discs, int rk4_steps);
    std::string name() const override { return "nfz"; }
    PenaltyValue evaluate(const MlpParams& p, const Points& latent) const override;

private:
    std::vector<Disc> discs_;
    int steps_;
};

class AccelerationPenalty : public Penalty {
public:
    AccelerationPenalty(double fd_step, int rk4_steps);
    std::string name() const override { return "acc"; }
    PenaltyValue evaluate(const MlpParams& p, const Points& latent) const override;

private:
    double h_;
    int steps_;
};

class EnergyPenalty : public Penalty {
public:
    EnergyPenalty(int rk4_steps, int chunk_len);
    std::string name() const override { return "energy"; }
    PenaltyValue evaluate(const MlpParams& p, const Points& latent) const override;

private:
    int steps_;
    int chunk_;
};

// E[sum_d max(0, r_d - |G(z) - c_d|)^2]
PenaltyValue nfz_penalty(const MlpParams& p, const Points& latent, const std::vector<Disc>& discs,
                         int rk4_steps);
// E[|H_G(z)|_F^2] by finite differences of step fd_step.
PenaltyValue acc_penalty(const MlpParams& p, const Points& latent, double fd_step, int rk4_steps);
// E[int_0^1 |v(s, y_s)|^2 ds] along the RK4 path.
PenaltyValue energy_penalty(const MlpParams& p, const Points& latent, int rk4_steps, int chunk_len);

class PointMap;
double nfz_penalty_value(const PointMap& map, const Points& latent, const std::vector<Disc>& discs);
double acc_penalty_value(const PointMap& map, const Points& latent, double fd_step);

struct CfmLoss {
    double loss = 0.0;
    MlpParams grads;
};

// Straight-interpolant regression on paired samples with s ~ U[0,1] per pair.
CfmLoss cfm_batch_loss(const MlpParams& p, const Points& source, const Points& target,
                       const std::vector<std::pair<int, int>>& pairs, std::uint64_t rng_seed);

// Thrown when the loss turns non-finite; carries the last finite parameters.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& msg, MlpParams last_good, int epoch)
        : NumericError(msg), last_good(std::move(last_good)), epoch(epoch) {}
    MlpParams last_good;
    int epoch;
};

struct TrainResult {
    MlpParams params;
    TrainLog log;
};

using TrainProgress = std::function<void(int epoch, const TrainLog& log)>;

TrainResult train(const TrainConfig& config, const TargetSpec& target,
                  const TrainProgress& progress = {});

// sqrt of the median CFM loss over the last 5% of epochs (at least 20 logged).
double epsilon_v_from_log(const TrainLog& log);

}  // namespace ergoflow
