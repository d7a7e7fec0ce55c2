#include "ergoflow/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ergoflow {

namespace fs = std::filesystem;

namespace {

template <class T>
T get_field(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + key + "' has the wrong type");
    }
}

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec2_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("field '" + what + "' must be a 2-vector");
    return {j[0].get<double>(), j[1].get<double>()};
}

json bbox_json(const BBox& b) { return json::array({b.xmin, b.xmax, b.ymin, b.ymax}); }

BBox bbox_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("field 'bbox' must be [xmin, xmax, ymin, ymax]");
    BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(b.xmax > b.xmin && b.ymax > b.ymin)) throw ConfigError("field 'bbox' has no extent");
    return b;
}

json matrix_rows(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    return flat;
}

Eigen::MatrixXd matrix_from_rows(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
        throw ConfigError("field '" + what + "' has the wrong number of entries");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[static_cast<std::size_t>(i * cols + k)].get<double>();
    return m;
}

std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------- files

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a(ss.str()));
}

// ---------------------------------------------------------------- net

json net_config_to_json(const NetConfig& c) {
    return {{"depth", c.depth},
            {"hidden_dim", c.hidden_dim},
            {"activation", c.activation == Activation::SiLU ? "silu" : "identity"}};
}

NetConfig net_config_from_json(const json& j) {
    NetConfig c;
    c.depth = get_or(j, "depth", c.depth);
    c.hidden_dim = get_or(j, "hidden_dim", c.hidden_dim);
    const auto act = get_or<std::string>(j, "activation", "silu");
    if (act == "silu")
        c.activation = Activation::SiLU;
    else if (act == "identity")
        c.activation = Activation::Identity;
    else
        throw ConfigError("field 'activation' must be 'silu' or 'identity'");
    if (c.depth < 1 || c.hidden_dim < 1) throw ConfigError("field 'depth'/'hidden_dim' must be positive");
    return c;
}

json checkpoint_to_json(const Checkpoint& ck) {
    json layers = json::array();
    for (std::size_t l = 0; l < ck.params.weights.size(); ++l) {
        const auto& W = ck.params.weights[l];
        layers.push_back({{"rows", W.rows()},
                          {"cols", W.cols()},
                          {"weight", matrix_rows(W)},
                          {"bias", std::vector<double>(ck.params.biases[l].data(),
                                                       ck.params.biases[l].data() + ck.params.biases[l].size())}});
    }
    json j = {{"format", "ergoflow-checkpoint/1"},
              {"net", net_config_to_json(ck.params.config)},
              {"layers", layers},
              {"config", ck.config},
              {"train_log_tail", {{"epochs", ck.epochs}, {"eps_v", ck.eps_v}}}};
    j["train_log_tail"]["final_cfm_loss"] = ck.final_cfm_loss ? json(*ck.final_cfm_loss) : json(nullptr);
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    if (get_or<std::string>(j, "format", "") != "ergoflow-checkpoint/1")
        throw ConfigError("not an ergoflow checkpoint (bad 'format')");
    Checkpoint ck;
    const NetConfig cfg = net_config_from_json(get_field<json>(j, "net"));
    ck.params = MlpParams::zeros(cfg);
    const json layers = get_field<json>(j, "layers");
    if (!layers.is_array() || static_cast<int>(layers.size()) != cfg.n_layers())
        throw ConfigError("field 'layers' does not match the net depth");
    for (int l = 0; l < cfg.n_layers(); ++l) {
        const json& L = layers[static_cast<std::size_t>(l)];
        const auto rows = get_field<Eigen::Index>(L, "rows"), cols = get_field<Eigen::Index>(L, "cols");
        if (rows != ck.params.weights[l].rows() || cols != ck.params.weights[l].cols())
            throw ConfigError("layer " + std::to_string(l) + " has an unexpected shape");
        ck.params.weights[l] = matrix_from_rows(get_field<json>(L, "weight"), rows, cols, "weight");
        const auto b = get_field<std::vector<double>>(L, "bias");
        if (static_cast<Eigen::Index>(b.size()) != rows) throw ConfigError("layer bias has the wrong length");
        ck.params.biases[l] = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    }
    if (!ck.params.all_finite()) throw ConfigError("checkpoint contains non-finite weights");
    ck.config = get_or<json>(j, "config", json::object());
    const json tail = get_or<json>(j, "train_log_tail", json::object());
    ck.epochs = get_or(tail, "epochs", 0);
    ck.eps_v = get_or(tail, "eps_v", 0.0);
    if (tail.contains("final_cfm_loss") && !tail["final_cfm_loss"].is_null())
        ck.final_cfm_loss = tail["final_cfm_loss"].get<double>();
    return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    write_text_atomic(path, checkpoint_to_json(ck).dump());
}

Checkpoint load_checkpoint(const fs::path& path) { return checkpoint_from_json(read_json_file(path)); }

// ---------------------------------------------------------------- train config

namespace {

const char* pairing_name(Pairing p) {
    switch (p) {
        case Pairing::Categorical: return "categorical";
        case Pairing::Barycentric: return "barycentric";
        case Pairing::Permutation: return "permutation";
    }
    return "categorical";
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
    json discs = json::array();
    for (const auto& d : c.nfz_discs) discs.push_back({{"center", vec2_json(d.center)}, {"radius", d.radius}});
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr_base", c.lr_base},
            {"eps_sink", c.eps_sink},
            {"sinkhorn_iters", c.sinkhorn_iters},
            {"seed", c.seed},
            {"delta", c.delta},
            {"lambda_nfz", c.lambda_nfz},
            {"lambda_acc", c.lambda_acc},
            {"lambda_energy", c.lambda_energy},
            {"nfz_discs", discs},
            {"rk4_steps_train", c.rk4_steps_train},
            {"penalty_sample_count", c.penalty_sample_count},
            {"acc_sample_count", c.acc_sample_count},
            {"fd_step", c.fd_step},
            {"energy_chunk_len", c.energy_chunk_len},
            {"pairing", pairing_name(c.pairing)},
            {"net", net_config_to_json(c.net)}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    TrainConfig c;
    c.epochs = get_field<int>(j, "epochs");
    c.batch_size = get_field<int>(j, "batch_size");
    c.lr_base = get_field<double>(j, "lr_base");
    c.eps_sink = get_field<double>(j, "eps_sink");
    c.sinkhorn_iters = get_field<int>(j, "sinkhorn_iters");
    c.seed = get_field<std::uint64_t>(j, "seed");
    c.delta = get_field<double>(j, "delta");
    c.lambda_nfz = get_or(j, "lambda_nfz", c.lambda_nfz);
    c.lambda_acc = get_or(j, "lambda_acc", c.lambda_acc);
    c.lambda_energy = get_or(j, "lambda_energy", c.lambda_energy);
    if (j.contains("nfz_discs")) {
        for (const auto& d : j.at("nfz_discs"))
            c.nfz_discs.push_back({vec2_from(get_field<json>(d, "center"), "center"), get_field<double>(d, "radius")});
    }
    c.rk4_steps_train = get_or(j, "rk4_steps_train", c.rk4_steps_train);
    c.penalty_sample_count = get_or(j, "penalty_sample_count", c.penalty_sample_count);
    c.acc_sample_count = get_or(j, "acc_sample_count", c.acc_sample_count);
    c.fd_step = get_or(j, "fd_step", c.fd_step);
    c.energy_chunk_len = get_or(j, "energy_chunk_len", c.energy_chunk_len);
    const auto pairing = get_or<std::string>(j, "pairing", "categorical");
    if (pairing == "categorical")
        c.pairing = Pairing::Categorical;
    else if (pairing == "barycentric")
        c.pairing = Pairing::Barycentric;
    else if (pairing == "permutation")
        c.pairing = Pairing::Permutation;
    else
        throw ConfigError("field 'pairing' must be 'categorical', 'barycentric' or 'permutation'");
    if (j.contains("net")) c.net = net_config_from_json(j.at("net"));
    c.validate();
    return c;
}

json train_log_to_json(const TrainLog& l) {
    return {{"cfm_loss", l.cfm_loss}, {"nfz", l.nfz},       {"acc", l.acc},
            {"energy", l.energy},     {"total", l.total},   {"lr", l.lr},
            {"eps_v", l.eps_v},       {"sinkhorn_raw_residual", l.sinkhorn_raw_residual},
            {"sinkhorn_gap", l.sinkhorn_gap}, {"wall_clock_s", l.wall_clock_s}, {"epochs", l.epochs}};
}

TrainLog train_log_from_json(const json& j) {
    TrainLog l;
    l.cfm_loss = get_field<std::vector<double>>(j, "cfm_loss");
    l.nfz = get_or<std::vector<double>>(j, "nfz", {});
    l.acc = get_or<std::vector<double>>(j, "acc", {});
    l.energy = get_or<std::vector<double>>(j, "energy", {});
    l.total = get_or<std::vector<double>>(j, "total", {});
    l.lr = get_or<std::vector<double>>(j, "lr", {});
    l.eps_v = get_or(j, "eps_v", 0.0);
    l.sinkhorn_raw_residual = get_or(j, "sinkhorn_raw_residual", 0.0);
    l.sinkhorn_gap = get_or(j, "sinkhorn_gap", 0.0);
    l.wall_clock_s = get_or(j, "wall_clock_s", 0.0);
    l.epochs = get_or(j, "epochs", static_cast<int>(l.cfm_loss.size()));
    return l;
}

// ---------------------------------------------------------------- targets

json gridded_to_json(const GriddedDensity& g) {
    json j = {{"height", g.height}, {"width", g.width}, {"bbox", bbox_json(g.bbox)}, {"values", matrix_rows(g.values)}};
    if (g.meters_per_unit) j["meters_per_unit"] = *g.meters_per_unit;
    return j;
}

GriddedDensity gridded_from_json(const json& j) {
    GriddedDensity g;
    g.height = get_field<int>(j, "height");
    g.width = get_field<int>(j, "width");
    g.bbox = j.contains("bbox") ? bbox_from(j.at("bbox")) : BBox{};
    g.values = matrix_from_rows(get_field<json>(j, "values"), g.height, g.width, "values");
    if (j.contains("meters_per_unit")) g.meters_per_unit = j.at("meters_per_unit").get<double>();
    return g;
}

json target_to_json(const TargetSpec& t) {
    if (auto* g = std::get_if<GaussianMixture>(&t.variant())) {
        json means = json::array(), covs = json::array();
        for (const auto& m : g->means) means.push_back(vec2_json(m));
        for (const auto& c : g->covariances) covs.push_back({c(0, 0), c(0, 1), c(1, 0), c(1, 1)});
        json j = {{"kind", "gaussian_mixture"}, {"weights", g->weights}, {"means", means}, {"covariances", covs}};
        if (g->support_clip) j["support_clip"] = {{"r_min", g->support_clip->r_min}, {"r_max", g->support_clip->r_max}};
        return j;
    }
    if (auto* b = std::get_if<BinaryHalfDisc>(&t.variant()))
        return {{"kind", "binary_half_disc"}, {"ratio_low_over_high", b->ratio_low_over_high}};
    json j = gridded_to_json(std::get<GriddedDensity>(t.variant()));
    j["kind"] = "gridded";
    return j;
}

TargetSpec target_from_json(const json& j) {
    const auto kind = get_field<std::string>(j, "kind");
    try {
        if (kind == "exp1") return exp1_target(get_or(j, "delta", 0.01));
        if (kind == "exp2") return exp2_target();
        if (kind == "binary_half_disc") return TargetSpec(BinaryHalfDisc{get_field<double>(j, "ratio_low_over_high")});
        if (kind == "gridded") return TargetSpec(gridded_from_json(j));
        if (kind == "gaussian_mixture") {
            GaussianMixture g;
            g.weights = get_field<std::vector<double>>(j, "weights");
            for (const auto& m : get_field<json>(j, "means")) g.means.push_back(vec2_from(m, "means"));
            for (const auto& c : get_field<json>(j, "covariances")) {
                if (!c.is_array() || c.size() != 4) throw ConfigError("field 'covariances' entries need 4 numbers");
                Mat2 m;
                m << c[0].get<double>(), c[1].get<double>(), c[2].get<double>(), c[3].get<double>();
                g.covariances.push_back(m);
            }
            if (j.contains("support_clip")) {
                const auto& s = j.at("support_clip");
                g.support_clip = SupportClip{get_field<double>(s, "r_min"), get_field<double>(s, "r_max")};
            }
            return TargetSpec(g);
        }
    } catch (const DomainError& e) {
        throw ConfigError(std::string("invalid target: ") + e.what());
    }
    throw ConfigError("field 'kind' has unknown target kind '" + kind + "'");
}

RawGrid read_grid_file(const fs::path& path) {
    RawGrid g;
    if (path.extension() == ".json") {
        const json j = read_json_file(path);
        const int h = get_field<int>(j, "height"), w = get_field<int>(j, "width");
        g.values = matrix_from_rows(get_field<json>(j, "values"), h, w, "values");
        if (j.contains("bbox")) g.bbox = bbox_from(j.at("bbox"));
        if (j.contains("meters_per_unit")) g.meters_per_unit = j.at("meters_per_unit").get<double>();
        return g;
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("non-numeric grid cell '" + cell + "' in " + path.string());
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError("ragged grid rows in " + path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("empty grid file " + path.string());
    g.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return g;
}

// ---------------------------------------------------------------- trajectories

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
    std::ostringstream os;
    os << std::setprecision(17) << "t,x,y,cycle_index,leg\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        os << traj.t[k] << ',' << traj.points(0, c) << ',' << traj.points(1, c) << ',' << traj.cycle[k] << ','
           << traj.leg[k] << '\n';
    }
    write_text_atomic(path, os.str());
}

Trajectory read_trajectory_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,x,y,cycle_index,leg", 0) != 0)
        throw ConfigError("trajectory CSV needs the header t,x,y,cycle_index,leg");
    std::vector<double> t, x, y;
    Trajectory traj;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[5];
        for (auto& s : f)
            if (!std::getline(ss, s, ',')) throw ConfigError("short row in " + path.string());
        try {
            t.push_back(std::stod(f[0]));
            x.push_back(std::stod(f[1]));
            y.push_back(std::stod(f[2]));
            traj.cycle.push_back(std::stoi(f[3]));
            traj.leg.push_back(std::stoi(f[4]));
        } catch (const std::exception&) {
            throw ConfigError("malformed row in " + path.string());
        }
    }
    traj.t = t;
    traj.points.resize(2, static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) {
        traj.points(0, static_cast<Eigen::Index>(k)) = x[k];
        traj.points(1, static_cast<Eigen::Index>(k)) = y[k];
    }
    traj.source_id = path.filename().string();
    return traj;
}

// ---------------------------------------------------------------- metrics

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const std::string& key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

json metrics_to_json(const MetricsReport& r) {
    json j = {{"rho_iid", opt(r.rho_iid)},
              {"rho_traj", opt(r.rho_traj)},
              {"l1_allocation", opt(r.l1_allocation)},
              {"jain", opt(r.jain)},
              {"acc_ratio", opt(r.acc_ratio)},
              {"energy_proxy", opt(r.energy_proxy)},
              {"w2_hat", opt(r.w2_hat)},
              {"w2_std", opt(r.w2_std)},
              {"L_hat", opt(r.L_hat)},
              {"Lv_hat", opt(r.Lv_hat)},
              {"Lv_net", opt(r.Lv_net)},
              {"M_H_hat", opt(r.M_H_hat)},
              {"eps_v", opt(r.eps_v)},
              {"eta_top", opt(r.eta_top)},
              {"floor", opt(r.floor)},
              {"sample_complexity_K", opt(r.sample_complexity_K)},
              {"slope", opt(r.slope)},
              {"fourier_metric", opt(r.fourier_metric)},
              {"final_cfm_loss", opt(r.final_cfm_loss)},
              {"notes", r.notes}};
    j["nfz"] = r.nfz ? json{{"frac_inside", r.nfz->frac_inside},
                            {"max_depth", r.nfz->max_depth},
                            {"n_incursions", r.nfz->n_incursions},
                            {"dwell", r.nfz->dwell}}
                     : json(nullptr);
    j["acc_bound"] = r.acc_bound ? json{{"lhs", r.acc_bound->lhs}, {"rhs", r.acc_bound->rhs}, {"holds", r.acc_bound->holds}}
                                 : json(nullptr);
    return j;
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport r;
    r.rho_iid = opt_from<double>(j, "rho_iid");
    r.rho_traj = opt_from<double>(j, "rho_traj");
    r.l1_allocation = opt_from<double>(j, "l1_allocation");
    r.jain = opt_from<double>(j, "jain");
    r.acc_ratio = opt_from<double>(j, "acc_ratio");
    r.energy_proxy = opt_from<double>(j, "energy_proxy");
    r.w2_hat = opt_from<double>(j, "w2_hat");
    r.w2_std = opt_from<double>(j, "w2_std");
    r.L_hat = opt_from<double>(j, "L_hat");
    r.Lv_hat = opt_from<double>(j, "Lv_hat");
    r.Lv_net = opt_from<double>(j, "Lv_net");
    r.M_H_hat = opt_from<double>(j, "M_H_hat");
    r.eps_v = opt_from<double>(j, "eps_v");
    r.eta_top = opt_from<double>(j, "eta_top");
    r.floor = opt_from<double>(j, "floor");
    r.sample_complexity_K = opt_from<long long>(j, "sample_complexity_K");
    r.slope = opt_from<double>(j, "slope");
    r.fourier_metric = opt_from<double>(j, "fourier_metric");
    r.final_cfm_loss = opt_from<double>(j, "final_cfm_loss");
    r.notes = get_or<std::string>(j, "notes", "");
    if (j.contains("nfz") && !j["nfz"].is_null()) {
        const auto& n = j["nfz"];
        r.nfz = NfzMetrics{n.at("frac_inside").get<double>(), n.at("max_depth").get<double>(),
                           n.at("n_incursions").get<int>(), n.at("dwell").get<double>()};
    }
    if (j.contains("acc_bound") && !j["acc_bound"].is_null()) {
        const auto& a = j["acc_bound"];
        r.acc_bound = AccelerationBound{a.at("lhs").get<double>(), a.at("rhs").get<double>(), a.at("holds").get<bool>()};
    }
    return r;
}

json lookup_table_to_json(const LookupTable& lut) {
    return {{"resolution", lut.resolution()},
            {"bbox", bbox_json(lut.bbox())},
            {"gx", matrix_rows(lut.gx())},
            {"gy", matrix_rows(lut.gy())},
            {"probe_max_error", lut.probe_max_error},
            {"probe_tolerance", lut.probe_tolerance},
            {"probe_ok", lut.probe_ok}};
}

LookupTable lookup_table_from_json(const json& j) {
    const int R = get_field<int>(j, "resolution");
    LookupTable lut(R, bbox_from(get_field<json>(j, "bbox")), matrix_from_rows(get_field<json>(j, "gx"), R, R, "gx"),
                    matrix_from_rows(get_field<json>(j, "gy"), R, R, "gy"));
    lut.probe_max_error = get_or(j, "probe_max_error", 0.0);
    lut.probe_tolerance = get_or(j, "probe_tolerance", 1e-2);
    lut.probe_ok = get_or(j, "probe_ok", true);
    return lut;
}

}  // namespace ergoflow
