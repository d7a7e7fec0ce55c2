#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "ergoflow/cfm.hpp"
#include "ergoflow/fleet.hpp"
#include "ergoflow/flow.hpp"
#include "ergoflow/io.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/metrics.hpp"
#include "ergoflow/rng.hpp"
#include "ergoflow/targets.hpp"

namespace ergoflow::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

// Provenance record written next to every command's outputs.
struct RunManifest {
    std::string command;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<fs::path> artifacts;
    Clock::time_point start = Clock::now();

    void add(const fs::path& p) { artifacts.push_back(p); }

    void write(const fs::path& out_dir) const {
        json files = json::array();
        for (const auto& p : artifacts)
            files.push_back({{"path", fs::relative(p, out_dir).generic_string()}, {"hash", file_hash(p)}});
        const json j = {{"command", command},
                        {"config", config},
                        {"config_hash", config_hash(config)},
                        {"seed", seed},
                        {"artifacts", files},
                        {"tool_version", kToolVersion},
                        {"wall_clock_s", std::chrono::duration<double>(Clock::now() - start).count()}};
        write_text_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
    }
};

fs::path write_json(const fs::path& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
    return path;
}

// "exp1" / "exp2" name a built-in benchmark; anything else is a JSON file.
json target_json_from_arg(const std::string& arg) {
    if (arg == "exp1" || arg == "exp2") return {{"kind", arg}};
    if (!fs::exists(arg)) throw ConfigError("target file not found: " + arg);
    return read_json_file(arg);
}

// Trained map plus the settings it was trained under.
struct LoadedModel {
    Checkpoint ck;
    TrainConfig train;
    json target_json;
    std::shared_ptr<FlowMap> flow;
    std::shared_ptr<LookupTable> lut;

    const PointMap& map() const {
        if (lut) return *lut;
        return *flow;
    }
};

LoadedModel load_model(const std::string& path, int rk4_steps, int lut_resolution, std::uint64_t seed) {
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
    LoadedModel m;
    m.ck = load_checkpoint(path);
    m.train = m.ck.config.contains("train") ? train_config_from_json(m.ck.config["train"]) : TrainConfig{};
    m.target_json = m.ck.config.value("target", json(nullptr));
    if (rk4_steps < 1) throw ConfigError("field 'steps' must be positive");
    m.flow = std::make_shared<FlowMap>(m.ck.params, rk4_steps);
    if (lut_resolution > 0)
        m.lut = std::make_shared<LookupTable>(
            lookup_table(*m.flow, lut_resolution, m.train.delta, {}, 1000, 1e-2, derive_seed(seed, "lut-probe")));
    return m;
}

TargetSpec resolve_target(const LoadedModel& m, const std::string& flag) {
    if (!flag.empty()) return target_from_json(target_json_from_arg(flag));
    if (m.target_json.is_null()) throw ConfigError("missing required field 'target'");
    return target_from_json(m.target_json);
}

bool annular_support(const TargetSpec& t) {
    if (auto* g = std::get_if<GaussianMixture>(&t.variant()))
        return g->support_clip && g->support_clip->r_min > 0.0;
    return false;
}

std::vector<Region> half_plane_regions() {
    return {[](const Vec2& x) { return x.y() < 0.0; }, [](const Vec2& x) { return x.y() >= 0.0; }};
}

// ---------------------------------------------------------------- eval core

struct EvalOptions {
    int n_iid = 20000;
    int n_w2 = 3000;
    int w2_seeds = 3;
    int grid_size = 50;
    int n_lipschitz = 2048;
    int n_hessian = 512;
    int fourier_modes = 10;
    double eps = 1.0;
    double alpha = 0.05;
    double c_top = 1.0;
};

MetricsReport evaluate(const LoadedModel& m, const TargetSpec& target, const Trajectory& traj,
                       const std::optional<Trajectory>& latent, std::uint64_t seed, const EvalOptions& o) {
    if (traj.size() == 0) throw ConfigError("trajectory is empty");
    traj.validate();
    const double delta = m.train.delta;
    const FlowMap& G = *m.flow;
    MetricsReport r;

    const GridDensity target_grid = density_grid(target, o.grid_size);
    const Points z = uniform_annulus_sample(derive_seed(seed, "eval-iid"), delta, o.n_iid);
    r.rho_iid = pearson_corr(grid_histogram(G.apply(z), o.grid_size), target_grid);
    r.rho_traj = pearson_corr(grid_histogram(traj, o.grid_size), target_grid);
    r.fourier_metric = fourier_ergodic_metric(traj, target_grid, o.fourier_modes);
    r.energy_proxy = energy_proxy(traj);

    if (std::holds_alternative<BinaryHalfDisc>(target.variant())) {
        const auto& b = std::get<BinaryHalfDisc>(target.variant());
        const double lo = b.ratio_low_over_high / (1.0 + b.ratio_low_over_high);
        const std::vector<double> want{lo, 1.0 - lo};
        const auto got = region_fractions(traj, half_plane_regions());
        r.l1_allocation = l1_allocation(got, want);
        r.jain = jains_index({got[0] / want[0], got[1] / want[1]});
    }
    if (!m.train.nfz_discs.empty()) r.nfz = nfz_metrics(traj, m.train.nfz_discs);

    const auto w2 = w2_hat(G, target, delta, o.n_w2, o.w2_seeds, derive_seed(seed, "eval-w2"));
    r.w2_hat = w2.mean;
    r.w2_std = w2.std;
    r.L_hat = map_lipschitz_hat(G, delta, o.n_lipschitz, 1e-3, derive_seed(seed, "eval-lhat"));
    r.Lv_hat = velocity_lipschitz_hat(G.field(), delta, target, derive_seed(seed, "eval-lv"));
    r.Lv_net = lv_net(m.ck.params);
    r.M_H_hat = hessian_norm_hat(G, delta, o.n_hessian, 1e-2, derive_seed(seed, "eval-mh"));
    r.final_cfm_loss = m.ck.final_cfm_loss;
    if (m.ck.eps_v > 0.0 || m.ck.final_cfm_loss) r.eps_v = m.ck.eps_v;

    if (latent) {
        r.acc_ratio = acc_ratio(traj, *latent);
        r.acc_bound = bound_check_acceleration(traj, *latent, *r.L_hat, *r.M_H_hat);
    }

    r.eta_top = eta_top_estimate(delta, o.c_top, annular_support(target));
    if (r.eps_v) {
        const auto fl = end_to_end_floor(1.0, *r.Lv_hat, *r.eps_v, *r.eta_top, o.eps);
        r.floor = fl.floor;
        double B = 0.0;
        for (Eigen::Index i = 0; i < traj.points.cols(); ++i) B = std::max(B, std::abs(traj.points(0, i)));
        const auto sc = sample_complexity(o.eps, B, o.alpha, fl.floor);
        if (sc.feasible)
            r.sample_complexity_K = sc.K;
        else
            r.notes += "requested eps does not exceed the floor; ";
    }
    r.notes += "fourier_metric uses a cosine basis with (1+|k|^2)^-1.5 weights";
    return r;
}

void add_eval_flags(CLI::App* cmd, EvalOptions& o) {
    cmd->add_option("--n-iid", o.n_iid, "i.i.d. pushforward samples for rho_iid");
    cmd->add_option("--n-w2", o.n_w2, "samples per side for W2");
    cmd->add_option("--w2-seeds", o.w2_seeds, "W2 repetitions");
    cmd->add_option("--grid-size", o.grid_size, "histogram grid size");
    cmd->add_option("--n-lipschitz", o.n_lipschitz, "samples for the map Lipschitz estimate");
    cmd->add_option("--n-hessian", o.n_hessian, "samples for the Hessian norm estimate");
    cmd->add_option("--eps", o.eps, "target accuracy for the sample complexity");
    cmd->add_option("--alpha", o.alpha, "confidence level for the sample complexity");
    cmd->add_option("--c-top", o.c_top, "topology residual constant");
}

// ---------------------------------------------------------------- commands

struct TrainArgs {
    std::string config;
    std::string target;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, batch_size, sinkhorn_iters, rk4_steps_train, penalty_sample_count;
    std::optional<double> lr_base, eps_sink, delta, lambda_nfz, lambda_acc, lambda_energy;
    std::string pairing;
};

void add_train_overrides(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--epochs", a.epochs);
    cmd->add_option("--batch-size", a.batch_size);
    cmd->add_option("--lr-base", a.lr_base);
    cmd->add_option("--eps-sink", a.eps_sink);
    cmd->add_option("--sinkhorn-iters", a.sinkhorn_iters);
    cmd->add_option("--delta", a.delta);
    cmd->add_option("--lambda-nfz", a.lambda_nfz);
    cmd->add_option("--lambda-acc", a.lambda_acc);
    cmd->add_option("--lambda-energy", a.lambda_energy);
    cmd->add_option("--rk4-steps-train", a.rk4_steps_train);
    cmd->add_option("--penalty-sample-count", a.penalty_sample_count);
    cmd->add_option("--pairing", a.pairing, "categorical, barycentric or permutation");
}

json apply_overrides(json j, const TrainArgs& a) {
    auto set = [&](const char* key, const auto& v) {
        if (v) j[key] = *v;
    };
    set("seed", a.seed);
    set("epochs", a.epochs);
    set("batch_size", a.batch_size);
    set("lr_base", a.lr_base);
    set("eps_sink", a.eps_sink);
    set("sinkhorn_iters", a.sinkhorn_iters);
    set("delta", a.delta);
    set("lambda_nfz", a.lambda_nfz);
    set("lambda_acc", a.lambda_acc);
    set("lambda_energy", a.lambda_energy);
    set("rk4_steps_train", a.rk4_steps_train);
    set("penalty_sample_count", a.penalty_sample_count);
    if (!a.pairing.empty()) j["pairing"] = a.pairing;
    return j;
}

Checkpoint to_checkpoint(const TrainResult& res, const json& config) {
    Checkpoint ck;
    ck.params = res.params;
    ck.config = config;
    ck.epochs = res.log.epochs;
    if (!res.log.cfm_loss.empty()) ck.final_cfm_loss = res.log.cfm_loss.back();
    ck.eps_v = res.log.eps_v;
    return ck;
}

// Trains one configuration into out_dir; returns the checkpoint path.
fs::path train_into(const json& train_json, const json& target_json, const fs::path& out_dir,
                    RunManifest& manifest, std::ostream& out) {
    const TrainConfig cfg = train_config_from_json(train_json);
    const TargetSpec target = target_from_json(target_json);
    const json config = {{"train", train_config_to_json(cfg)}, {"target", target_json}};
    fs::create_directories(out_dir);
    const int report_every = std::max(1, cfg.epochs / 10);
    TrainResult res;
    try {
        res = train(cfg, target, [&](int epoch, const TrainLog& log) {
            if ((epoch + 1) % report_every == 0)
                out << "epoch " << epoch + 1 << "/" << cfg.epochs << " cfm " << log.cfm_loss.back() << "\n";
        });
    } catch (const TrainingDiverged& e) {
        Checkpoint ck;
        ck.params = e.last_good;
        ck.config = config;
        ck.epochs = e.epoch;
        manifest.add(write_json(out_dir / "checkpoint_last_good.json", checkpoint_to_json(ck)));
        throw;
    }
    const fs::path ck_path = out_dir / "checkpoint.json";
    save_checkpoint(ck_path, to_checkpoint(res, config));
    manifest.add(ck_path);
    manifest.add(write_json(out_dir / "train_log.json", train_log_to_json(res.log)));
    out << "final cfm loss " << res.log.cfm_loss.back() << " eps_v " << res.log.eps_v << "\n";
    return ck_path;
}

json load_train_json(const TrainArgs& a, json* target_json) {
    if (!fs::exists(a.config)) throw ConfigError("config file not found: " + a.config);
    json j = apply_overrides(read_json_file(a.config), a);
    if (!a.target.empty())
        *target_json = target_json_from_arg(a.target);
    else if (j.contains("target"))
        *target_json = j["target"];
    else
        throw ConfigError("missing required field 'target'");
    return j;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "train";
    json target_json;
    const json j = load_train_json(a, &target_json);
    const TrainConfig cfg = train_config_from_json(j);
    manifest.seed = cfg.seed;
    manifest.config = {{"train", train_config_to_json(cfg)}, {"target", target_json}};
    const fs::path dir = a.out_dir;
    try {
        train_into(j, target_json, dir, manifest, out);
    } catch (...) {
        manifest.write(dir);
        throw;
    }
    manifest.write(dir);
    return kExitOk;
}

struct SynthArgs {
    std::string checkpoint;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int k_cycles = 300;
    int n_points = 200;
    double dt = 1.0;
    int steps = 50;
    int lut = 0;
    std::optional<double> delta;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "synth";
    manifest.seed = a.seed;
    LoadedModel m = load_model(a.checkpoint, a.steps, a.lut, a.seed);
    const double delta = a.delta.value_or(m.train.delta);
    manifest.config = {{"checkpoint", file_hash(a.checkpoint)}, {"k_cycles", a.k_cycles}, {"n_points", a.n_points},
                       {"dt", a.dt},  {"steps", a.steps}, {"lut", a.lut}, {"delta", delta}};
    const Trajectory latent =
        generate_trajectory(derive_seed(a.seed, "synth"), delta, a.k_cycles, a.n_points, a.dt).flatten();
    const Trajectory traj = pushforward_trajectory(m.map(), latent);
    const fs::path dir = a.out_dir;
    write_trajectory_csv(dir / "latent.csv", latent);
    write_trajectory_csv(dir / "trajectory.csv", traj);
    manifest.add(dir / "latent.csv");
    manifest.add(dir / "trajectory.csv");
    manifest.write(dir);
    out << "wrote " << traj.size() << " samples to " << (dir / "trajectory.csv").string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint, target, traj, latent;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int steps = 50;
    EvalOptions opts;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "eval";
    manifest.seed = a.seed;
    if (!fs::exists(a.traj)) throw ConfigError("trajectory not found: " + a.traj);
    LoadedModel m = load_model(a.checkpoint, a.steps, 0, a.seed);
    const TargetSpec target = resolve_target(m, a.target);
    const Trajectory traj = read_trajectory_csv(a.traj);
    std::optional<Trajectory> latent;
    if (!a.latent.empty()) {
        if (!fs::exists(a.latent)) throw ConfigError("latent trajectory not found: " + a.latent);
        latent = read_trajectory_csv(a.latent);
    }
    manifest.config = {{"checkpoint", file_hash(a.checkpoint)}, {"trajectory", file_hash(a.traj)},
                       {"target", a.target.empty() ? m.target_json : target_json_from_arg(a.target)}};
    const MetricsReport r = evaluate(m, target, traj, latent, a.seed, a.opts);
    const fs::path dir = a.out_dir;
    manifest.add(write_json(dir / "metrics.json", metrics_to_json(r)));
    manifest.write(dir);
    out << metrics_to_json(r).dump(2) << "\n";
    return kExitOk;
}

struct ConvergenceArgs {
    std::string checkpoint;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int steps = 50;
    int lut = 256;
    ConvergenceOptions opts;
};

int cmd_convergence(const ConvergenceArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "convergence";
    manifest.seed = a.seed;
    LoadedModel m = load_model(a.checkpoint, a.steps, a.lut, a.seed);
    manifest.config = {{"checkpoint", file_hash(a.checkpoint)}, {"Ks", a.opts.Ks},
                       {"seeds_per_K", a.opts.seeds_per_K}, {"n_points_per_leg", a.opts.n_points_per_leg},
                       {"lut", a.lut}};
    const ConvergenceResult res = convergence_study(m.map(), m.train.delta, a.seed, a.opts);
    std::ostringstream csv;
    csv << std::setprecision(17) << "K,seed,rmse\n";
    for (std::size_t i = 0; i < res.Ks.size(); ++i)
        for (std::size_t s = 0; s < res.rmse[i].size(); ++s) csv << res.Ks[i] << ',' << s << ',' << res.rmse[i][s] << '\n';
    const fs::path dir = a.out_dir;
    write_text_atomic(dir / "convergence.csv", csv.str());
    manifest.add(dir / "convergence.csv");
    manifest.add(write_json(dir / "convergence.json", {{"Ks", res.Ks},
                                                        {"mean_rmse", res.mean_rmse},
                                                        {"std_error", res.std_error},
                                                        {"slope", res.slope}}));
    manifest.write(dir);
    out << "slope " << res.slope << "\n";
    return kExitOk;
}

struct SweepArgs {
    TrainArgs train;
    int k_cycles = 300;
    int n_points = 200;
    EvalOptions opts;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "sweep";
    json target_json;
    const json base = load_train_json(a.train, &target_json);
    if (!base.contains("sweep") || !base["sweep"].is_array() || base["sweep"].empty())
        throw ConfigError("missing required field 'sweep'");
    const TrainConfig base_cfg = train_config_from_json(base);
    manifest.seed = base_cfg.seed;
    manifest.config = {{"train", train_config_to_json(base_cfg)}, {"target", target_json}, {"sweep", base["sweep"]}};
    const fs::path dir = a.train.out_dir;
    json summary = json::array();
    for (std::size_t i = 0; i < base["sweep"].size(); ++i) {
        const json& point = base["sweep"][i];
        json j = base;
        for (const auto& [k, v] : point.items()) j[k] = v;
        // Each variant trains from its own seed.
        j["seed"] = derive_seed(base_cfg.seed, "sweep", i);
        const fs::path sub = dir / ("point_" + std::to_string(i));
        out << "sweep point " << i << ": " << point.dump() << "\n";
        const fs::path ck = train_into(j, target_json, sub, manifest, out);
        LoadedModel m = load_model(ck.string(), 50, 0, base_cfg.seed);
        const TargetSpec target = target_from_json(target_json);
        const Trajectory latent =
            generate_trajectory(derive_seed(base_cfg.seed, "synth"), m.train.delta, a.k_cycles, a.n_points).flatten();
        const Trajectory traj = pushforward_trajectory(m.map(), latent);
        const MetricsReport r = evaluate(m, target, traj, latent, base_cfg.seed, a.opts);
        manifest.add(write_json(sub / "metrics.json", metrics_to_json(r)));
        summary.push_back({{"point", point}, {"metrics", metrics_to_json(r)}});
    }
    manifest.add(write_json(dir / "sweep.json", summary));
    manifest.write(dir);
    return kExitOk;
}

struct IngestArgs {
    std::string grid;
    std::string out_dir = "out";
    double sigma = 1.5;
    double floor = 1e-12;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "ingest";
    if (!fs::exists(a.grid)) throw ConfigError("grid file not found: " + a.grid);
    const RawGrid raw = read_grid_file(a.grid);
    manifest.config = {{"grid", file_hash(a.grid)}, {"sigma", a.sigma}, {"floor", a.floor}};
    GriddedDensity g = ingest_grid(raw.values, a.sigma, a.floor, raw.bbox);
    g.meters_per_unit = raw.meters_per_unit;
    json j = gridded_to_json(g);
    j["kind"] = "gridded";
    const fs::path dir = a.out_dir;
    manifest.add(write_json(dir / "density.json", j));
    manifest.write(dir);
    out << "ingested " << g.height << "x" << g.width << " grid\n";
    return kExitOk;
}

struct FleetArgs {
    std::string checkpoint;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int steps = 50;
    int lut = 256;
    int agent_k = 300;
    int n_agents = 4;
    PooledRateOptions opts;
};

int cmd_fleet(const FleetArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "fleet";
    manifest.seed = a.seed;
    LoadedModel m = load_model(a.checkpoint, a.steps, a.lut, a.seed);
    manifest.config = {{"checkpoint", file_hash(a.checkpoint)}, {"Ns", a.opts.Ns},    {"K", a.opts.K},
                       {"seeds", a.opts.seeds},                  {"agent_k", a.agent_k}, {"n_agents", a.n_agents},
                       {"lut", a.lut}};
    const double delta = m.train.delta;
    const PooledRateResult pr = pooled_rate_check(m.map(), delta, a.seed, a.opts);
    const FleetRun run = simulate_fleet(m.map(), a.n_agents, a.agent_k, a.opts.n_points, delta,
                                        derive_seed(a.seed, "fleet-agents"), a.opts.fleet);
    std::ostringstream csv;
    csv << std::setprecision(17) << "N,mean_metric,reference\n";
    for (std::size_t i = 0; i < pr.Ns.size(); ++i)
        csv << pr.Ns[i] << ',' << pr.mean_metric[i] << ',' << pr.reference[i] << '\n';
    const fs::path dir = a.out_dir;
    write_text_atomic(dir / "pooled_rate.csv", csv.str());
    manifest.add(dir / "pooled_rate.csv");
    manifest.add(write_json(dir / "fleet.json", {{"Ns", pr.Ns},
                                                  {"metric", pr.metric},
                                                  {"mean_metric", pr.mean_metric},
                                                  {"reference", pr.reference},
                                                  {"slope", pr.slope},
                                                  {"ratio_first_last", pr.ratio_first_last},
                                                  {"agent_min_correlation", min_pairwise_agent_correlation(run)}}));
    manifest.write(dir);
    out << "slope " << pr.slope << " ratio " << pr.ratio_first_last << "\n";
    return kExitOk;
}

struct DistillArgs {
    std::string checkpoint;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int steps = 50;
    int resolution = 256;
    int n_probe = 1000;
    double tolerance = 1e-2;
};

int cmd_distill(const DistillArgs& a, std::ostream& out) {
    RunManifest manifest;
    manifest.command = "distill";
    manifest.seed = a.seed;
    LoadedModel m = load_model(a.checkpoint, a.steps, 0, a.seed);
    manifest.config = {{"checkpoint", file_hash(a.checkpoint)}, {"resolution", a.resolution},
                       {"n_probe", a.n_probe},                   {"tolerance", a.tolerance}};
    const LookupTable lut =
        lookup_table(*m.flow, a.resolution, m.train.delta, {}, a.n_probe, a.tolerance, derive_seed(a.seed, "lut-probe"));
    const fs::path dir = a.out_dir;
    manifest.add(write_json(dir / "lut.json", lookup_table_to_json(lut)));
    manifest.write(dir);
    out << "probe max error " << lut.probe_max_error << (lut.probe_ok ? " (ok)" : " (above tolerance)") << "\n";
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ergodic coverage trajectories from flow-matched pushforward maps", "ergoflow"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a velocity field from a JSON config");
    train_cmd->add_option("--config", train_args.config, "training config JSON")->required();
    train_cmd->add_option("--target", train_args.target, "exp1, exp2 or a target JSON file");
    train_cmd->add_option("--out-dir", train_args.out_dir);
    train_cmd->add_option("--seed", train_args.seed);
    add_train_overrides(train_cmd, train_args);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "push a latent trajectory through a trained map");
    synth_cmd->add_option("--checkpoint", synth_args.checkpoint)->required();
    synth_cmd->add_option("--k-cycles", synth_args.k_cycles);
    synth_cmd->add_option("--n-points", synth_args.n_points, "samples per leg");
    synth_cmd->add_option("--seed", synth_args.seed);
    synth_cmd->add_option("--dt", synth_args.dt);
    synth_cmd->add_option("--steps", synth_args.steps, "RK4 steps");
    synth_cmd->add_option("--lut", synth_args.lut, "lookup-table resolution (0 integrates directly)");
    synth_cmd->add_option("--delta", synth_args.delta);
    synth_cmd->add_option("--out-dir", synth_args.out_dir);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "compute the metrics report");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval_cmd->add_option("--traj", eval_args.traj, "trajectory CSV")->required();
    eval_cmd->add_option("--latent", eval_args.latent, "latent trajectory CSV for acceleration metrics");
    eval_cmd->add_option("--target", eval_args.target);
    eval_cmd->add_option("--seed", eval_args.seed);
    eval_cmd->add_option("--steps", eval_args.steps);
    eval_cmd->add_option("--out-dir", eval_args.out_dir);
    add_eval_flags(eval_cmd, eval_args.opts);

    ConvergenceArgs conv_args;
    auto* conv_cmd = app.add_subcommand("convergence", "grid-RMSE against K study");
    conv_cmd->add_option("--checkpoint", conv_args.checkpoint)->required();
    conv_cmd->add_option("--seed", conv_args.seed);
    conv_cmd->add_option("--ks", conv_args.opts.Ks);
    conv_cmd->add_option("--seeds-per-k", conv_args.opts.seeds_per_K);
    conv_cmd->add_option("--n-points", conv_args.opts.n_points_per_leg);
    conv_cmd->add_option("--n-reference", conv_args.opts.n_reference);
    conv_cmd->add_option("--grid-size", conv_args.opts.grid_size);
    conv_cmd->add_option("--steps", conv_args.steps);
    conv_cmd->add_option("--lut", conv_args.lut);
    conv_cmd->add_option("--out-dir", conv_args.out_dir);

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate every penalty-weight point");
    sweep_cmd->add_option("--config", sweep_args.train.config)->required();
    sweep_cmd->add_option("--target", sweep_args.train.target);
    sweep_cmd->add_option("--out-dir", sweep_args.train.out_dir);
    sweep_cmd->add_option("--seed", sweep_args.train.seed);
    sweep_cmd->add_option("--k-cycles", sweep_args.k_cycles);
    sweep_cmd->add_option("--n-points", sweep_args.n_points);
    add_train_overrides(sweep_cmd, sweep_args.train);
    add_eval_flags(sweep_cmd, sweep_args.opts);

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "turn a demand grid into a target density");
    ingest_cmd->add_option("--grid", ingest_args.grid, "CSV or JSON grid file")->required();
    ingest_cmd->add_option("--sigma", ingest_args.sigma, "blur width in cells");
    ingest_cmd->add_option("--floor", ingest_args.floor);
    ingest_cmd->add_option("--out-dir", ingest_args.out_dir);

    FleetArgs fleet_args;
    auto* fleet_cmd = app.add_subcommand("fleet", "independent agents sharing one map");
    fleet_cmd->add_option("--checkpoint", fleet_args.checkpoint)->required();
    fleet_cmd->add_option("--seed", fleet_args.seed);
    fleet_cmd->add_option("--k-cycles", fleet_args.opts.K, "cycles per agent in the pooled study");
    fleet_cmd->add_option("--agents", fleet_args.opts.Ns, "fleet sizes");
    fleet_cmd->add_option("--seeds", fleet_args.opts.seeds);
    fleet_cmd->add_option("--n-points", fleet_args.opts.n_points);
    fleet_cmd->add_option("--agent-k", fleet_args.agent_k, "cycles for the per-agent agreement check");
    fleet_cmd->add_option("--n-agents", fleet_args.n_agents, "agents in the agreement check");
    fleet_cmd->add_option("--steps", fleet_args.steps);
    fleet_cmd->add_option("--lut", fleet_args.lut);
    fleet_cmd->add_option("--out-dir", fleet_args.out_dir);

    DistillArgs distill_args;
    auto* distill_cmd = app.add_subcommand("distill", "precompute a bilinear lookup table");
    distill_cmd->add_option("--checkpoint", distill_args.checkpoint)->required();
    distill_cmd->add_option("--resolution", distill_args.resolution);
    distill_cmd->add_option("--n-probe", distill_args.n_probe);
    distill_cmd->add_option("--tolerance", distill_args.tolerance);
    distill_cmd->add_option("--seed", distill_args.seed);
    distill_cmd->add_option("--steps", distill_args.steps);
    distill_cmd->add_option("--out-dir", distill_args.out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out);
        if (*synth_cmd) return cmd_synth(synth_args, out);
        if (*eval_cmd) return cmd_eval(eval_args, out);
        if (*conv_cmd) return cmd_convergence(conv_args, out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, out);
        if (*ingest_cmd) return cmd_ingest(ingest_args, out);
        if (*fleet_cmd) return cmd_fleet(fleet_args, out);
        if (*distill_cmd) return cmd_distill(distill_args, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitConfig;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"ergoflow"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ergoflow::cli
