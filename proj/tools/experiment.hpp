#pragma once

// Experiment configuration and the subcommands of the command-line driver.

#include <specalign/dataset.hpp>
#include <specalign/metrics.hpp>
#include <specalign/net.hpp>
#include <specalign/trainer.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace specalign::cli {

// Full default configuration. Every key a config file may set appears here;
// null marks an optional value.
nlohmann::json default_config();

// Merges `patch` into `base`. Keys absent from `base` and type changes other
// than null <-> value raise ConfigError naming the dotted key.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix = "");

// Applies one `dotted.key=value` override. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

// Reads a JSON config file (ParseError on malformed JSON) and merges it into
// the defaults.
nlohmann::json load_config(const std::filesystem::path& path);

struct Experiment {
  nlohmann::json raw;
  std::filesystem::path out;
  Seed seed = 0;
};

// Validated view of a merged config.
Experiment make_experiment(nlohmann::json cfg);

struct LoadedData {
  Dataset all;
  Split split;
  Dataset train;
  Dataset test;
};

// The dataset named by dataset.csv, else <out>/dataset.csv when present,
// else a toy generated from the dataset block. The split comes from the
// manifest next to the CSV when present, else a seeded partition.
LoadedData load_data(const Experiment& ex);

Dataset generate_dataset(const Experiment& ex);
Split make_split(const Experiment& ex, const Dataset& ds);

// dims 0 means the dataset's class count. `validate` runs the training
// cross-field checks against the dataset size.
TrainConfig train_config(const Experiment& ex, const Dataset& ds, bool validate = true);
JointConfig joint_config(const Experiment& ex);
MlpSpec feature_spec(const Experiment& ex, Eigen::Index input_dim);
MlpSpec spectral_spec(const Experiment& ex);

// All metrics of a trained model on `part`. d_G compares the model output on
// the first metrics.heldout_nodes ids of `part` with the analytic embedding
// of that subgraph; `frame`, when given, supplies the anchor RMSE.
MetricsReport evaluate_model(const Experiment& ex, const MlpParams& model, const Dataset& all,
                             const Dataset& train, const Dataset& part, const AnchorFrame* frame);

std::string frame_json(const AnchorFrame& frame);
AnchorFrame frame_from_json(const std::string& text);

int cmd_generate(const Experiment& ex);
int cmd_train(const Experiment& ex);
int cmd_analytic(const Experiment& ex);
int cmd_eval(const Experiment& ex, const std::filesystem::path& checkpoint, const std::string& split);
int cmd_feature_change(const Experiment& ex, bool ablate);

}  // namespace specalign::cli
