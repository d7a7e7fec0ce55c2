// Acceptance suite: one PASS/FAIL line per criterion. Trained checkpoints and
// lookup tables are cached under --cache-dir keyed by config hash.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "ergoflow/cfm.hpp"
#include "ergoflow/fleet.hpp"
#include "ergoflow/flow.hpp"
#include "ergoflow/io.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/metrics.hpp"
#include "ergoflow/mlp.hpp"
#include "ergoflow/ot.hpp"
#include "ergoflow/rng.hpp"
#include "ergoflow/targets.hpp"

using namespace ergoflow;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << std::setw(2) << id << ' ' << title << ": " << o.detail
              << " [" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s]" << std::defaultfloat
              << std::endl;
    if (!o.pass) ++g_failures;
}

// Compact key=value formatting for detail strings.
class Detail {
public:
    template <class T>
    Detail& operator()(const std::string& key, const T& v) {
        os_ << (first_ ? "" : " ") << key << '=' << v;
        first_ = false;
        return *this;
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
    bool first_ = true;
};

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ---------------------------------------------------------------- models

constexpr int kInferenceSteps = 50;
constexpr int kLutResolution = 256;

struct Model {
    std::string name;
    TrainConfig cfg;
    json target_json;
    MlpParams params;
    double final_loss = 0.0;
    double eps_v = 0.0;
    double train_s = 0.0;
    std::shared_ptr<FlowMap> flow;
    std::shared_ptr<LookupTable> lut;

    TargetSpec target() const { return target_from_json(target_json); }
};

Model obtain(const fs::path& cache, const std::string& name, const json& train_json, const json& target_json) {
    Model m;
    m.name = name;
    m.cfg = train_config_from_json(train_json);
    m.target_json = target_json;
    const json config = {{"train", train_config_to_json(m.cfg)}, {"target", target_json}};
    const std::string stem = name + "-" + config_hash(config);
    const fs::path ck_path = cache / (stem + ".json"), meta_path = cache / (stem + ".meta.json");
    if (fs::exists(ck_path) && fs::exists(meta_path)) {
        const Checkpoint ck = load_checkpoint(ck_path);
        m.params = ck.params;
        m.final_loss = ck.final_cfm_loss.value_or(NAN);
        m.eps_v = ck.eps_v;
        m.train_s = read_json_file(meta_path).at("train_seconds").get<double>();
        progress(name + ": cached checkpoint " + ck_path.string());
    } else {
        progress(name + ": training " + std::to_string(m.cfg.epochs) + " epochs");
        const auto t0 = Clock::now();
        const int every = std::max(1, m.cfg.epochs / 10);
        const TrainResult res = train(m.cfg, m.target(), [&](int epoch, const TrainLog& log) {
            if ((epoch + 1) % every == 0)
                progress(name + ": epoch " + std::to_string(epoch + 1) + " cfm " + std::to_string(log.cfm_loss.back()));
        });
        m.train_s = seconds_since(t0);
        m.params = res.params;
        m.final_loss = res.log.cfm_loss.back();
        m.eps_v = res.log.eps_v;
        Checkpoint ck;
        ck.params = res.params;
        ck.config = config;
        ck.epochs = res.log.epochs;
        ck.final_cfm_loss = m.final_loss;
        ck.eps_v = m.eps_v;
        fs::create_directories(cache);
        save_checkpoint(ck_path, ck);
        write_text_atomic(meta_path, json{{"train_seconds", m.train_s}}.dump() + "\n");
    }
    m.flow = std::make_shared<FlowMap>(m.params, kInferenceSteps);
    return m;
}

const LookupTable& lut_of(Model& m, const fs::path& cache) {
    if (m.lut) return *m.lut;
    const fs::path p = cache / (m.name + "-" + config_hash(checkpoint_to_json({m.params, {}, {}, 0, 0.0})) + ".lut" +
                                std::to_string(kLutResolution) + ".json");
    if (fs::exists(p)) {
        m.lut = std::make_shared<LookupTable>(lookup_table_from_json(read_json_file(p)));
    } else {
        progress(m.name + ": distilling lookup table");
        m.lut = std::make_shared<LookupTable>(lookup_table(*m.flow, kLutResolution, m.cfg.delta));
        write_text_atomic(p, lookup_table_to_json(*m.lut).dump() + "\n");
    }
    return *m.lut;
}

// Per-map diagnostics shared by several criteria.
struct MapStats {
    double L_hat = 0.0, M_H = 0.0, Lv_hat = 0.0, Lv_net = 0.0, pair_expansion = 0.0;
    double acc_ratio = 0.0;
    AccelerationBound bound;
};

constexpr int kAccCycles = 20;
constexpr int kAccPoints = 1000;

MapStats map_stats(const Model& m) {
    progress(m.name + ": map diagnostics");
    MapStats s;
    const double delta = m.cfg.delta;
    s.L_hat = map_lipschitz_hat(*m.flow, delta, 2048, 1e-3, derive_seed(11, "lhat"));
    s.M_H = hessian_norm_hat(*m.flow, delta, 512, 1e-2, derive_seed(11, "mh"));
    s.Lv_hat = velocity_lipschitz_hat(m.flow->field(), delta, m.target(), derive_seed(11, "lv"));
    s.Lv_net = lv_net(m.params);
    // Finite-pair expansion of the flow map.
    Rng rng(derive_seed(11, "pairs"));
    const int n = 2000;
    const Points a = uniform_annulus_sample(derive_seed(11, "pair-a"), delta, n);
    Points b(2, n);
    for (int i = 0; i < n; ++i) {
        Vec2 d(rng.normal(), rng.normal());
        b.col(i) = a.col(i) + d * ((1e-3 + 0.2 * rng.uniform()) / d.norm());
    }
    const Points ga = m.flow->apply(a), gb = m.flow->apply(b);
    for (int i = 0; i < n; ++i)
        s.pair_expansion = std::max(s.pair_expansion, (ga.col(i) - gb.col(i)).norm() / (a.col(i) - b.col(i)).norm());
    const Trajectory z =
        generate_trajectory(derive_seed(11, "acc"), delta, kAccCycles, kAccPoints, 1.0, SampleGrid::Graded).flatten();
    const Trajectory x = pushforward_trajectory(*m.flow, z);
    s.acc_ratio = acc_ratio(x, z);
    s.bound = bound_check_acceleration(x, z, s.L_hat, s.M_H);
    return s;
}

// ---------------------------------------------------------------- helpers

FunctionMap smooth_map(std::uint64_t seed) {
    Rng rng(seed, "smooth-map");
    Mat2 A;
    A << rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5);
    const Vec2 b(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
    const Vec2 w(rng.uniform(-3, 3), rng.uniform(-3, 3)), u(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const double amp = rng.uniform(0.05, 0.3);
    return FunctionMap([=](const Vec2& z) {
        return Vec2(A * z + b + amp * Vec2(std::sin(w.dot(z)), std::cos(u.dot(z))));
    });
}

Points random_points(std::uint64_t seed, int n, double scale = 1.0) {
    Rng rng(seed);
    Points p(2, n);
    for (int i = 0; i < n; ++i) p.col(i) = Vec2(rng.uniform(-scale, scale), rng.uniform(-scale, scale));
    return p;
}

// Largest per-parameter relative error against central differences; entries
// below 1e-3 of the largest gradient magnitude are judged against that floor.
double fd_error(MlpParams p, const Eigen::VectorXd& g, const std::function<double(const MlpParams&)>& f, double h) {
    const Eigen::VectorXd theta = p.flatten();
    const double floor = 1e-3 * g.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd t = theta;
        t(i) = theta(i) + h;
        p.assign_flat(t);
        const double fp = f(p);
        t(i) = theta(i) - h;
        p.assign_flat(t);
        const double fm = f(p);
        const double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(g(i) - fd) / std::max({std::abs(g(i)), std::abs(fd), floor}));
    }
    return worst;
}

double brute_force_w2(const Points& a, const Points& b) {
    const int n = static_cast<int>(a.cols());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += (a.col(i) - b.col(perm[i])).squaredNorm();
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / n);
}

Eigen::MatrixXd direct_blur(const Eigen::MatrixXd& g, double sigma) {
    const int r = static_cast<int>(std::ceil(3 * sigma));
    const int H = static_cast<int>(g.rows()), W = static_cast<int>(g.cols());
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    double norm1 = 0.0;
    for (int d = -r; d <= r; ++d) norm1 += std::exp(-0.5 * d * d / (sigma * sigma));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(H, W);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double acc = 0.0;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj)
                    acc += std::exp(-0.5 * (di * di + dj * dj) / (sigma * sigma)) * g(reflect(i + di, H), reflect(j + dj, W));
            out(i, j) = acc / (norm1 * norm1);
        }
    return out;
}

json preset(const std::string& name) { return read_json_file(fs::path(ERGOFLOW_PRESET_DIR) / (name + ".json")); }

}  // namespace

int main(int argc, char** argv) {
    fs::path cache = "acceptance_cache";
    bool strict = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cache-dir" && i + 1 < argc)
            cache = argv[++i];
        else if (a == "--strict")
            strict = true;
        else {
            std::cerr << "usage: acceptance [--cache-dir DIR] [--strict]\n";
            return 2;
        }
    }
    fs::create_directories(cache);
    const auto t_start = Clock::now();

    report(1, "latent uniformity", [] {
        const auto t0 = Clock::now();
        const auto traj = generate_trajectory(2024, 0.05, 2000, 200);
        const auto u = occupancy_uniformity(traj, 20, 20);
        const double ks = radial_ks_statistic(traj);
        const double secs = seconds_since(t0);
        return Outcome{u.p_value > 0.01 && ks < 0.01 && secs < 10.0,
                       Detail()("chi2", u.chi2)("dof", u.dof)("p", u.p_value)("ks", ks)("seconds", secs).str()};
    });

    report(2, "closed-form latent moments", [] {
        bool ok = true;
        Detail d;
        for (double delta : {0.05, 0.1, 0.3}) {
            const auto num = numeric_energy(generate_trajectory(11, delta, 20, 2000, 1.0, SampleGrid::Graded));
            const auto exact = latent_moments_closed_form(delta, 20);
            const double e_err = std::abs(num.E_acc / exact.E_acc - 1), p_err = std::abs(num.Phi4 / exact.Phi4 - 1);
            const double want = 2 * delta * delta / (1 + delta * delta);
            const double r_err = std::abs(num.Phi4 / num.E_acc / want - 1);
            ok = ok && e_err < 0.01 && p_err < 0.01 && r_err < 0.02;
            d("delta", delta)("E_rel", e_err)("Phi4_rel", p_err)("ratio_rel", r_err);
        }
        return Outcome{ok, d.str()};
    });

    report(3, "gradient correctness", [] {
        double net = 0.0, nfz = 0.0, acc = 0.0, energy = 0.0;
        const std::vector<Disc> discs{{Vec2(0.3, -0.2), 0.5}, {Vec2(-0.4, 0.4), 0.4}};
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto p = MlpParams::init({2, 8, Activation::SiLU}, 1000 + seed);
            RegressionBatch batch;
            Rng rng(seed, "batch");
            batch.s.resize(16);
            for (int i = 0; i < 16; ++i) batch.s(i) = rng.uniform();
            batch.y = random_points(derive_seed(seed, "y"), 16);
            batch.u = random_points(derive_seed(seed, "u"), 16, 2.0);
            net = std::max(net, fd_error(p, loss_and_grad(p, batch).grads.flatten(),
                                         [&](const MlpParams& q) { return loss_and_grad(q, batch).loss; }, 1e-5));
            const auto small = MlpParams::init({2, 6, Activation::SiLU}, 500 + seed);
            const Points z = uniform_annulus_sample(seed, 0.05, 6);
            const NfzPenalty pn(discs, 4);
            const AccelerationPenalty pa(1e-2, 4);
            const EnergyPenalty pe(4, 4);
            nfz = std::max(nfz, fd_error(small, pn.evaluate(small, z).grads.flatten(),
                                         [&](const MlpParams& q) { return pn.evaluate(q, z).value; }, 1e-6));
            acc = std::max(acc, fd_error(small, pa.evaluate(small, z).grads.flatten(),
                                         [&](const MlpParams& q) { return pa.evaluate(q, z).value; }, 1e-4));
            energy = std::max(energy, fd_error(small, pe.evaluate(small, z).grads.flatten(),
                                               [&](const MlpParams& q) { return pe.evaluate(q, z).value; }, 1e-6));
        }
        return Outcome{net < 1e-4 && nfz < 1e-3 && acc < 1e-3 && energy < 1e-3,
                       Detail()("net", net)("nfz", nfz)("acc", acc)("energy", energy).str()};
    });

    report(4, "W2 oracle and Sinkhorn marginals", [] {
        Rng rng(77);
        int exact = 0;
        double worst = 0.0;
        for (int inst = 0; inst < 100; ++inst) {
            const int n = 1 + static_cast<int>(rng.bits() % 8);
            const Points a = random_points(rng.bits(), n), b = random_points(rng.bits(), n);
            const double diff = std::abs(exact_w2(a, b) - brute_force_w2(a, b));
            worst = std::max(worst, diff);
            exact += diff <= 1e-12;
        }
        double marg = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto plan = sinkhorn_plan(random_points(seed, 64), random_points(seed + 100, 64), 0.05, 50);
            marg = std::max({marg, plan.row_residual(), plan.col_residual()});
        }
        return Outcome{exact == 100 && marg < 1e-6,
                       Detail()("matched", std::to_string(exact) + "/100")("max_diff", worst)("marginal_residual", marg).str()};
    });

    // Trained models.
    std::vector<Model> models;
    try {
        const json e1 = preset("exp1");
        models.push_back(obtain(cache, "exp1", e1, e1.at("target")));
        const json e2 = preset("exp2");
        models.push_back(obtain(cache, "exp2", e2, e2.at("target")));
        const json e3 = preset("exp3");
        const char* names[] = {"exp3a", "exp3b", "exp3c"};
        for (std::size_t i = 0; i < e3.at("sweep").size(); ++i) {
            json j = e3;
            for (const auto& [k, v] : e3["sweep"][i].items()) j[k] = v;
            j["seed"] = derive_seed(e3.at("seed").get<std::uint64_t>(), "sweep", i);
            models.push_back(obtain(cache, names[i], j, e3.at("target")));
        }
    } catch (const std::exception& e) {
        std::cerr << "training failed: " << e.what() << "\n";
    }
    auto find = [&](const std::string& name) -> Model* {
        for (auto& m : models)
            if (m.name == name) return &m;
        return nullptr;
    };
    std::vector<std::pair<std::string, MapStats>> stats;
    for (const auto& m : models) {
        try {
            stats.emplace_back(m.name, map_stats(m));
        } catch (const std::exception& e) {
            std::cerr << m.name << ": diagnostics failed: " << e.what() << "\n";
        }
    }
    auto stat = [&](const std::string& name) -> const MapStats& {
        for (const auto& [n, s] : stats)
            if (n == name) return s;
        throw std::runtime_error("no diagnostics for " + name);
    };
    auto need = [&](const std::string& name) -> Model& {
        Model* m = find(name);
        if (!m) throw std::runtime_error("model " + name + " unavailable");
        return *m;
    };

    report(5, "Exp. 1 reproduction", [&] {
        Model& m = need("exp1");
        const MapStats& s = stat("exp1");
        const TargetSpec target = m.target();
        const Points z = uniform_annulus_sample(derive_seed(5, "iid"), m.cfg.delta, 20000);
        const double rho = pearson_corr(grid_histogram(m.flow->apply(z)), density_grid(target));
        const auto w2 = w2_hat(*m.flow, target, m.cfg.delta, 3000, 3, derive_seed(5, "w2"));
        const double floor_check = std::exp(s.Lv_hat) * m.eps_v;
        return Outcome{m.train_s <= 900 && rho >= 0.85 && m.final_loss <= 0.01 && w2.mean <= 0.15 && floor_check >= w2.mean,
                       Detail()("train_s", m.train_s)("rho_iid", rho)("final_cfm", m.final_loss)("w2", w2.mean)(
                           "w2_std", w2.std)("eps_v", m.eps_v)("Lv_hat", s.Lv_hat)("exp(Lv_hat)*eps_v", floor_check)
                           .str()};
    });

    report(6, "Exp. 2 allocation", [&] {
        Model& m = need("exp2");
        const auto& half = std::get<BinaryHalfDisc>(m.target().variant());
        const double want = half.ratio_low_over_high / (1 + half.ratio_low_over_high);
        const Trajectory x = pushforward_trajectory(
            lut_of(m, cache), generate_trajectory(derive_seed(6, "split"), m.cfg.delta, 20000, 50).flatten());
        const auto f = region_fractions(x, {[](const Vec2& p) { return p.y() < 0.0; }});
        const double pp = 100 * std::abs(f[0] - want);
        const double ratio = stat("exp2").acc_ratio;
        return Outcome{pp <= 1.0 && ratio < 1.0,
                       Detail()("low_fraction", f[0])("split_error_pp", pp)("acc_ratio", ratio).str()};
    });

    report(7, "Exp. 3 Pareto ordering", [&] {
        double frac[3];
        const char* names[] = {"exp3a", "exp3b", "exp3c"};
        for (int i = 0; i < 3; ++i) {
            Model& m = need(names[i]);
            const Trajectory x = pushforward_trajectory(
                lut_of(m, cache), generate_trajectory(derive_seed(7, "nfz"), m.cfg.delta, 5000, 100).flatten());
            frac[i] = nfz_metrics(x, m.cfg.nfz_discs.empty() ? need("exp3b").cfg.nfz_discs : m.cfg.nfz_discs).frac_inside;
        }
        const double ra = stat("exp3a").acc_ratio, rc = stat("exp3c").acc_ratio;
        const double reduction = frac[1] > 0 ? frac[0] / frac[1] : INFINITY;
        return Outcome{reduction >= 3.0 && rc < 1.1 && rc < ra,
                       Detail()("nfz_unconstrained", frac[0])("nfz_lambda50", frac[1])("nfz_lambda50_acc", frac[2])(
                           "reduction", reduction)("acc_ratio_unconstrained", ra)("acc_ratio_lambda50_acc", rc)
                           .str()};
    });

    report(8, "convergence rate", [&] {
        Model& m = need("exp1");
        const LookupTable& lut = lut_of(m, cache);
        const auto t0 = Clock::now();
        const auto r = convergence_study(lut, m.cfg.delta, derive_seed(8, "convergence"));
        const double secs = seconds_since(t0);
        std::ostringstream curve;
        for (std::size_t i = 0; i < r.Ks.size(); ++i) curve << (i ? "," : "") << r.Ks[i] << ':' << r.mean_rmse[i];
        return Outcome{r.slope >= -0.60 && r.slope <= -0.40 && secs < 300,
                       Detail()("slope", r.slope)("rmse", curve.str())("seconds", secs).str()};
    });

    report(9, "Hoeffding coverage", [&] {
        Model& m = need("exp1");
        const double L = stat("exp1").L_hat;
        const auto h = hoeffding_study(lut_of(m, cache), m.cfg.delta, 50, 200, 0.1, L, derive_seed(9, "hoeffding"));
        return Outcome{h.exceed_fraction <= 0.1 && h.var_cycle <= 1.1 * h.var_envelope,
                       Detail()("exceed", h.exceed_fraction)("eps_stat", h.eps_stat)("B_phi", h.B_phi)(
                           "var_cycle", h.var_cycle)("envelope", h.var_envelope)("L_hat", L)
                           .str()};
    });

    report(10, "Lipschitz bracket", [&] {
        bool ok = stats.size() == 5;
        Detail d;
        for (const auto& [name, s] : stats) {
            ok = ok && s.Lv_hat <= s.Lv_net && s.pair_expansion <= std::exp(s.Lv_net) && s.L_hat <= std::exp(s.Lv_net) &&
                 s.Lv_hat >= 1.0 && s.Lv_hat <= 6.0;
            d(name + ".Lv_hat", s.Lv_hat)(name + ".Lv_net", s.Lv_net)(name + ".expansion", s.pair_expansion);
        }
        return Outcome{ok, d.str()};
    });

    report(11, "acceleration bound", [&] {
        bool ok = stats.size() == 5;
        Detail d;
        for (const auto& [name, s] : stats) {
            ok = ok && s.bound.holds;
            d(name + ".lhs/rhs", s.bound.lhs / s.bound.rhs);
        }
        const double delta = 0.05;
        const auto z = generate_trajectory(derive_seed(11, "synthetic"), delta, 30, 1000, 1.0, SampleGrid::Graded).flatten();
        int held = 0;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto G = smooth_map(seed);
            const double L = map_lipschitz_hat(G, delta, 4096, 1e-4, seed);
            const double M = hessian_norm_hat(G, delta, 2048, 1e-3, seed);
            const auto b = bound_check_acceleration(pushforward_trajectory(G, z), z, L, M);
            held += b.holds;
            worst = std::max(worst, b.lhs / b.rhs);
        }
        Mat2 A;
        A << 0.8, 0.3, -0.2, 1.1;
        const FunctionMap affine([&](const Vec2& p) { return Vec2(A * p + Vec2(0.1, 0.2)); });
        const auto ba = bound_check_acceleration(pushforward_trajectory(affine, z), z,
                                                 Eigen::JacobiSVD<Mat2>(A).singularValues()(0), 0.0);
        ok = ok && held == 20 && ba.holds;
        d("synthetic_held", std::to_string(held) + "/20")("synthetic_worst_lhs/rhs", worst)("affine_lhs/rhs",
                                                                                          ba.lhs / ba.rhs);
        return Outcome{ok, d.str()};
    });

    report(12, "fleet pooling", [&] {
        Model& m = need("exp1");
        const LookupTable& lut = lut_of(m, cache);
        const auto r = pooled_rate_check(lut, m.cfg.delta, derive_seed(12, "pooled"));
        bool decreasing = true;
        for (std::size_t i = 1; i < r.mean_metric.size(); ++i) decreasing = decreasing && r.mean_metric[i] < r.mean_metric[i - 1];
        const auto run = simulate_fleet(lut, 4, 300, 200, m.cfg.delta, derive_seed(12, "agents"));
        const double rho = min_pairwise_agent_correlation(run);
        return Outcome{decreasing && r.ratio_first_last >= 2.0 && r.ratio_first_last <= 6.0 && rho > 0.9,
                       Detail()("decreasing", decreasing)("ratio_1_20", r.ratio_first_last)("slope", r.slope)(
                           "min_agent_rho", rho)
                           .str()};
    });

    report(13, "RK4 order and lookup table", [&] {
        Mat2 R;
        R << 0, -1, 1, 0;
        const auto field = std::make_shared<LinearField>(R);
        const Points z = random_points(2, 20);
        const Points exact = Mat2(R.exp()) * z;
        double lo = INFINITY, hi = 0.0;
        for (int n : {5, 10, 20}) {
            const double e1 = (integrate(FlowMap(field, n), z) - exact).colwise().norm().maxCoeff();
            const double e2 = (integrate(FlowMap(field, 2 * n), z) - exact).colwise().norm().maxCoeff();
            lo = std::min(lo, e1 / e2);
            hi = std::max(hi, e1 / e2);
        }
        Model& m = need("exp1");
        const double probe = lut_of(m, cache).probe_max_error;
        return Outcome{lo >= 12 && hi <= 20 && probe < 1e-2,
                       Detail()("factor_min", lo)("factor_max", hi)("lut_probe_error", probe).str()};
    });

    report(14, "ingestion", [] {
        const auto uni = ingest_grid(Eigen::MatrixXd::Constant(20, 30, 7.0), 1.5, 1e-12);
        const double fixed = (uni.values.array() - 0.25).abs().maxCoeff();
        Eigen::MatrixXd hot = Eigen::MatrixXd::Zero(60, 60);
        hot(17, 42) = 1.0;
        hot(0, 3) = 0.5;
        const double blur = (gaussian_blur(hot, 1.5) - direct_blur(hot, 1.5)).cwiseAbs().maxCoeff();
        Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(50, 50);
        raw(10, 10) = 5.0;
        raw(40, 20) = 1.0;
        const auto g = ingest_grid(raw, 2.0, 1e-12);
        const TargetSpec t(g);
        const int n = 1000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) sum += t.density(Vec2(-1 + (j + 0.5) * 2.0 / n, -1 + (i + 0.5) * 2.0 / n));
        const double mass = sum * 4.0 / (double(n) * n);
        const double min_value = ingest_grid(raw, 0.0, 1e-12).values.minCoeff();
        return Outcome{fixed < 1e-12 && blur < 1e-9 && min_value > 0.0 && std::abs(mass - 1) < 1e-3,
                       Detail()("uniform_dev", fixed)("blur_vs_direct", blur)("min_after_floor", min_value)("mass", mass)
                           .str()};
    });

    std::cout << "acceptance: " << 14 - g_failures << "/14 passed in " << std::fixed << std::setprecision(0)
              << seconds_since(t_start) << " s" << std::endl;
    return strict && g_failures > 0 ? 1 : 0;
}
