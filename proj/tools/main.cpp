// specalign: experiment driver.
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or numeric failure.

#include "experiment.hpp"

#include <specalign/errors.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace specalign;

  CLI::App app{"Learn graph-Laplacian eigenspaces from anchor-aligned batches"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<Seed> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool ablate = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed (overrides `seed`)");
  app.add_option("--out", out, "Output directory (overrides `out`)");
  app.add_option("--set", overrides, "Override a dotted config key, e.g. --set train.iterations=0");
  app.add_flag("--ablate", ablate, "feature-change: also run with feature-update alignment disabled");

  auto* generate = app.add_subcommand("generate", "Write a toy dataset CSV and its split manifest");
  auto* train = app.add_subcommand("train", "Train the spectral network; write checkpoint, history and report");
  auto* analytic = app.add_subcommand("analytic", "Analytic embedding of a node subset, with clustering metrics");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  auto* feature = app.add_subcommand("feature-change", "Joint feature and spectral training");
  std::string checkpoint;
  std::string split = "test";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.json)");
  eval->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  for (auto* sub : {generate, train, analytic, eval, feature}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  cli::Experiment ex;
  try {
    nlohmann::json cfg = config_path.empty() ? cli::default_config() : cli::load_config(config_path);
    for (const auto& o : overrides) cli::apply_override(cfg, o);
    if (seed) cfg["seed"] = *seed;
    if (!out.empty()) cfg["out"] = out;
    ex = cli::make_experiment(std::move(cfg));
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*generate) return cli::cmd_generate(ex);
    if (*train) return cli::cmd_train(ex);
    if (*analytic) return cli::cmd_analytic(ex);
    if (*eval) return cli::cmd_eval(ex, checkpoint, split);
    return cli::cmd_feature_change(ex, ablate);
  } catch (const TrainingError& e) {
    std::cerr << "training aborted at iteration " << e.iteration() << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const SizeError& e) {
    std::cerr << "size error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
