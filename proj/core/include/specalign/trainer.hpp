#pragma once

#include "specalign/align.hpp"
#include "specalign/dataset.hpp"
#include "specalign/graph.hpp"
#include "specalign/metrics.hpp"
#include "specalign/net.hpp"
#include "specalign/spectral.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace specalign {

struct TrainConfig {
  Eigen::Index dims = 2;         // K
  Eigen::Index batch_size = 256;  // m
  Eigen::Index anchors = 9;       // l
  long iterations = 1000;
  double lr = 1e-3;
  GraphConfig graph;
  bool skip_trivial = true;
  double diffusion_time = 0.0;
  std::optional<RansacConfig> ransac;
  bool stratified_anchors = true;
  int hidden_width = 256;
  int depth = 5;
  Seed seed = 0;
  long eval_every = 0;  // 0 disables periodic validation
  int connectivity_retries = 5;
  // Alignment RMSE above this fraction of the frame's RMS row norm is flagged.
  double residual_warning = 0.25;
  // The reference frame is the reference embedding times this factor; 0
  // means sqrt(m), which gives the frame columns unit mean square.
  double frame_scale = 0.0;

  double effective_frame_scale() const;
  EmbeddingKind embedding_kind() const {
    return {graph.laplacian_kind, skip_trivial, diffusion_time};
  }
  // Cross-field checks against a dataset of `n` nodes.
  void validate(Eigen::Index n) const;
};

// The reference set and the anchor coordinates frozen from its embedding.
struct ReferenceSet {
  AnchorFrame frame;
  IndexSet node_ids;  // anchors first, then the m - l extension samples
  Embedding embedding;
};

ReferenceSet init_reference(const Dataset& ds, const TrainConfig& cfg);

// Graph + embedding over the given nodes of `features` (rows aligned with ids).
Embedding embed_nodes(const Matrix& features, const IndexSet& ids, const TrainConfig& cfg);

struct IterationRecord {
  long iteration = 0;  // 1-based
  double loss = 0.0;
  double align_rmse = 0.0;
  bool residual_flagged = false;
  std::optional<ClusteringScores> validation;
};

struct TrainState {
  MlpParams model;
  ReferenceSet reference;
  std::vector<IterationRecord> history;
};

// Batch-aligned training: every iteration draws a batch containing the
// anchors, embeds it analytically, registers it onto the frozen frame and
// takes one MSE gradient step. `validation`, when given and labeled, is
// clustered every eval_every iterations.
TrainState train(const Dataset& ds, const TrainConfig& cfg, const Dataset* validation = nullptr);

// Out-of-sample extension: a single forward pass.
Matrix infer(const MlpParams& model, const Matrix& x);

// One JSON object per line: {"iter", "loss", "align_rmse", "nmi"?, "acc"?}.
void write_history_jsonl(const std::vector<IterationRecord>& history, const std::filesystem::path& path);

struct JointConfig {
  Eigen::Index dims = 2;
  Eigen::Index batch_size = 256;
  Eigen::Index anchors = 30;
  long feature_iterations = 1500;
  // Feature-only steps (counted in feature_iterations) before the reference
  // set is embedded and spectral steps begin.
  long warmup_iterations = 0;
  long spectral_period = 10;
  double margin = 1.0;
  double feature_lr = 1e-3;
  double spectral_lr = 1e-3;
  Eigen::Index pairs_per_step = 256;
  GraphConfig graph;
  bool skip_trivial = true;
  std::optional<RansacConfig> ransac;
  // false replaces T_G by the identity (ablation).
  bool align_feature_updates = true;
  long eval_every = 10;  // in spectral steps; 0 disables
  double frame_scale = 0.0;  // as in TrainConfig
  Seed seed = 0;

  TrainConfig batch_config() const;
};

struct JointRecord {
  long iteration = 0;  // feature iteration at which the spectral step ran
  long spectral_step = 0;
  double contrastive_loss = 0.0;
  double spectral_loss = 0.0;
  double align_rmse = 0.0;
  double tg_rmse = 0.0;
  double tg_deviation = 0.0;  // |T_G - [I|0]|_F
  std::optional<ClusteringScores> analytic;
  std::optional<ClusteringScores> train_output;
  std::optional<ClusteringScores> validation_output;
};

struct JointResult {
  MlpParams feature_model;
  MlpParams spectral_model;
  AnchorFrame frame;  // rolling frame after the last spectral step
  std::vector<JointRecord> history;

  // Mean spectral loss over the last `fraction` of spectral steps.
  double final_spectral_loss(double fraction = 0.1) const;
};

// Contrastive feature learning with a spectral model trained on its output.
// Every spectral_period feature steps the reference set is re-embedded under
// the current features, aligned to the previous anchor coordinates (T_G),
// and one batch-aligned spectral step is taken. `ds` must be labeled.
JointResult train_joint(const Dataset& ds, const MlpSpec& feature_spec, const MlpSpec& spectral_spec,
                        const JointConfig& cfg, const Dataset* validation = nullptr);

// CSV of the joint history, one row per spectral step.
void write_joint_history_csv(const std::vector<JointRecord>& history, const std::filesystem::path& path);

}  // namespace specalign
