#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "ergoflow/cfm.hpp"
#include "ergoflow/flow.hpp"
#include "ergoflow/metrics.hpp"
#include "ergoflow/mlp.hpp"
#include "ergoflow/targets.hpp"
#include "ergoflow/trajectory.hpp"

namespace ergoflow {

using json = nlohmann::json;

// ---- checkpoints

struct Checkpoint {
    MlpParams params;
    json config = json::object();
    std::optional<double> final_cfm_loss;
    int epochs = 0;
    double eps_v = 0.0;
};

json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

json net_config_to_json(const NetConfig& c);
NetConfig net_config_from_json(const json& j);

// ---- training config and log

json train_config_to_json(const TrainConfig& c);
// Required keys: epochs, batch_size, lr_base, eps_sink, sinkhorn_iters, seed,
// delta. Missing or mistyped fields raise ConfigError naming the field.
TrainConfig train_config_from_json(const json& j);

json train_log_to_json(const TrainLog& log);
TrainLog train_log_from_json(const json& j);

// ---- targets

json target_to_json(const TargetSpec& t);
// Kinds: gaussian_mixture, binary_half_disc, gridded (inline values), exp1, exp2.
TargetSpec target_from_json(const json& j);

json gridded_to_json(const GriddedDensity& g);
GriddedDensity gridded_from_json(const json& j);

struct RawGrid {
    Eigen::MatrixXd values;
    BBox bbox;
    std::optional<double> meters_per_unit;
};
// CSV of H rows x W columns, or JSON {height, width, bbox, values}.
RawGrid read_grid_file(const std::filesystem::path& path);

// ---- trajectories

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

// ---- metrics

json metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const json& j);

json lookup_table_to_json(const LookupTable& lut);
LookupTable lookup_table_from_json(const json& j);

// ---- misc

std::string config_hash(const json& j);
std::string file_hash(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ergoflow
