#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "ergoflow/io.hpp"
#include "ergoflow/mlp.hpp"

using namespace ergoflow;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "ergoflow_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json tiny_config() {
    return {{"epochs", 3},        {"batch_size", 16}, {"lr_base", 0.002}, {"eps_sink", 0.05},
            {"sinkhorn_iters", 20}, {"seed", 4},        {"delta", 0.05},
            {"net", {{"depth", 2}, {"hidden_dim", 8}, {"activation", "silu"}}},
            {"target", {{"kind", "exp2"}}}};
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

fs::path identity_checkpoint(const fs::path& dir) {
    Checkpoint ck;
    ck.params = MlpParams::zeros({2, 4, Activation::SiLU});
    ck.config = {{"target", {{"kind", "exp1"}}}};
    const fs::path p = dir / "identity.json";
    save_checkpoint(p, ck);
    return p;
}

}  // namespace

TEST_CASE("presets parse and carry the benchmark settings") {
    const fs::path dir = ERGOFLOW_PRESET_DIR;
    for (const char* name : {"exp1.json", "exp2.json", "exp3.json"}) {
        const json j = read_json_file(dir / name);
        const TrainConfig c = train_config_from_json(j);
        CHECK(c.lr_base == 0.002);
        CHECK(c.batch_size == 1024);
        CHECK(c.eps_sink == 0.05);
        CHECK(j.contains("target"));
    }
    const json e3 = read_json_file(dir / "exp3.json");
    REQUIRE(e3["sweep"].size() == 3);
    CHECK(e3["sweep"][1]["lambda_nfz"] == 50);
    CHECK(e3["sweep"][2]["lambda_acc"] == 0.1);

    json j = read_json_file(dir / "exp1.json");
    for (const char* mode : {"categorical", "barycentric", "permutation"}) {
        j["pairing"] = mode;
        CHECK(train_config_to_json(train_config_from_json(j))["pairing"] == mode);
    }
    j["pairing"] = "nearest";
    CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
}

TEST_CASE("train writes checkpoint, log and manifest deterministically") {
    const fs::path dir = scratch("train");
    const fs::path cfg = write_config(dir, tiny_config());
    const auto a = run({"train", "--config", cfg.string(), "--out-dir", (dir / "a").string()});
    REQUIRE(a.code == 0);
    const auto b = run({"train", "--config", cfg.string(), "--out-dir", (dir / "b").string()});
    REQUIRE(b.code == 0);
    CHECK(a.out.find("final cfm loss") != std::string::npos);
    CHECK(file_hash(dir / "a" / "checkpoint.json") == file_hash(dir / "b" / "checkpoint.json"));
    const json m = read_json_file(dir / "a" / "manifest.json");
    CHECK(m["command"] == "train");
    CHECK(m["artifacts"].size() == 2);
    CHECK(m["config_hash"] == config_hash(m["config"]));
    for (const auto& art : m["artifacts"]) CHECK(art["hash"] == file_hash(dir / "a" / art["path"].get<std::string>()));

    const auto c = run({"train", "--config", cfg.string(), "--seed", "5", "--out-dir", (dir / "c").string()});
    REQUIRE(c.code == 0);
    CHECK(file_hash(dir / "a" / "checkpoint.json") != file_hash(dir / "c" / "checkpoint.json"));
}

TEST_CASE("configuration errors exit with code 2 and name the field") {
    const fs::path dir = scratch("errors");
    json j = tiny_config();
    j.erase("lr_base");
    const auto r = run({"train", "--config", write_config(dir, j).string(), "--out-dir", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("lr_base") != std::string::npos);

    j = tiny_config();
    j.erase("target");
    const auto t = run({"train", "--config", write_config(dir, j).string(), "--out-dir", dir.string()});
    CHECK(t.code == 2);
    CHECK(t.err.find("target") != std::string::npos);

    CHECK(run({"train"}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"synth", "--checkpoint", (dir / "missing.json").string()}).code == 2);
    std::ofstream(dir / "corrupt.json") << "{ not json";
    CHECK(run({"synth", "--checkpoint", (dir / "corrupt.json").string()}).code == 2);
}

TEST_CASE("synth with an identity map reproduces the latent path") {
    const fs::path dir = scratch("synth");
    const fs::path ck = identity_checkpoint(dir);
    const auto r = run({"synth", "--checkpoint", ck.string(), "--k-cycles", "1", "--n-points", "30", "--delta", "0.1",
                        "--seed", "7", "--steps", "5", "--out-dir", (dir / "a").string()});
    REQUIRE(r.code == 0);
    const auto latent = read_trajectory_csv(dir / "a" / "latent.csv");
    const auto traj = read_trajectory_csv(dir / "a" / "trajectory.csv");
    CHECK(traj.points == latent.points);
    CHECK(traj.t == latent.t);
    CHECK(traj.size() == 60);

    run({"synth", "--checkpoint", ck.string(), "--k-cycles", "3", "--n-points", "30", "--seed", "7", "--steps", "5",
         "--out-dir", (dir / "b").string()});
    run({"synth", "--checkpoint", ck.string(), "--k-cycles", "3", "--n-points", "30", "--seed", "7", "--steps", "5",
         "--out-dir", (dir / "c").string()});
    CHECK(file_hash(dir / "b" / "trajectory.csv") == file_hash(dir / "c" / "trajectory.csv"));
}

TEST_CASE("eval reports the full metric set") {
    const fs::path dir = scratch("eval");
    const fs::path cfg = write_config(dir, tiny_config());
    REQUIRE(run({"train", "--config", cfg.string(), "--out-dir", dir.string()}).code == 0);
    const std::string ck = (dir / "checkpoint.json").string();
    REQUIRE(run({"synth", "--checkpoint", ck, "--k-cycles", "20", "--n-points", "50", "--steps", "10", "--out-dir",
                 dir.string()})
                .code == 0);
    const auto r = run({"eval", "--checkpoint", ck, "--traj", (dir / "trajectory.csv").string(), "--latent",
                        (dir / "latent.csv").string(), "--steps", "10", "--n-iid", "2000", "--n-w2", "200",
                        "--n-lipschitz", "128", "--n-hessian", "64", "--out-dir", dir.string()});
    REQUIRE(r.code == 0);
    const json j = read_json_file(dir / "metrics.json");
    for (const char* key : {"rho_iid", "w2_hat", "L_hat", "Lv_hat", "Lv_net", "M_H_hat", "eps_v", "floor",
                            "acc_ratio", "l1_allocation", "jain", "final_cfm_loss"}) {
        CAPTURE(key);
        CHECK_FALSE(j.at(key).is_null());
    }
    CHECK(j["Lv_hat"].get<double>() <= j["Lv_net"].get<double>());
    const auto back = metrics_from_json(j);
    CHECK(metrics_to_json(back) == j);

    std::ofstream(dir / "empty.csv") << "t,x,y,cycle_index,leg\n";
    CHECK(run({"eval", "--checkpoint", ck, "--traj", (dir / "empty.csv").string(), "--out-dir", dir.string()}).code == 2);
}

TEST_CASE("ingest of a uniform grid yields the uniform density") {
    const fs::path dir = scratch("ingest");
    {
        std::ofstream f(dir / "grid.csv");
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 10; ++j) f << (j ? "," : "") << 3.5;
            f << "\n";
        }
    }
    REQUIRE(run({"ingest", "--grid", (dir / "grid.csv").string(), "--out-dir", dir.string()}).code == 0);
    const auto t = target_from_json(read_json_file(dir / "density.json"));
    const auto& g = std::get<GriddedDensity>(t.variant());
    CHECK((g.values.array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("sweep, convergence, fleet and distill wrappers") {
    const fs::path dir = scratch("wrappers");
    json j = tiny_config();
    j["target"] = {{"kind", "exp1"}};
    j["nfz_discs"] = {{{"center", {0.5, -0.5}}, {"radius", 0.2}}};
    j["rk4_steps_train"] = 2;
    j["energy_chunk_len"] = 2;
    j["penalty_sample_count"] = 8;
    j["acc_sample_count"] = 4;
    j["sweep"] = {{{"lambda_nfz", 0}, {"lambda_acc", 0}}, {{"lambda_nfz", 50}, {"lambda_acc", 0}}};
    const auto s = run({"sweep", "--config", write_config(dir, j).string(), "--k-cycles", "5", "--n-points", "20",
                        "--n-iid", "1000", "--n-w2", "100", "--n-lipschitz", "64", "--n-hessian", "32", "--out-dir",
                        (dir / "sweep").string()});
    INFO(s.err);
    REQUIRE(s.code == 0);
    const json summary = read_json_file(dir / "sweep" / "sweep.json");
    CHECK(summary.size() == 2);
    CHECK(fs::exists(dir / "sweep" / "point_1" / "metrics.json"));
    CHECK_FALSE(summary[0]["metrics"]["nfz"].is_null());

    const std::string ck = (dir / "sweep" / "point_0" / "checkpoint.json").string();
    REQUIRE(run({"convergence", "--checkpoint", ck, "--seeds-per-k", "2", "--n-points", "20", "--n-reference", "2000",
                 "--lut", "64", "--out-dir", (dir / "conv").string()})
                .code == 0);
    std::ifstream csv(dir / "conv" / "convergence.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "K,seed,rmse");
    CHECK(read_json_file(dir / "conv" / "convergence.json")["Ks"] == json({5, 10, 20, 50, 100}));

    REQUIRE(run({"fleet", "--checkpoint", ck, "--agents", "1", "2", "--seeds", "2", "--k-cycles", "5", "--n-points",
                 "20", "--agent-k", "10", "--n-agents", "2", "--lut", "64", "--out-dir", (dir / "fleet").string()})
                .code == 0);
    CHECK(read_json_file(dir / "fleet" / "fleet.json")["mean_metric"].size() == 2);

    REQUIRE(run({"distill", "--checkpoint", ck, "--resolution", "32", "--n-probe", "50", "--out-dir",
                 (dir / "lut").string()})
                .code == 0);
    const auto lut = lookup_table_from_json(read_json_file(dir / "lut" / "lut.json"));
    CHECK(lut.resolution() == 32);
}
