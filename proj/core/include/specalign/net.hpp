#pragma once

#include "specalign/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace specalign {

// Fully connected network d -> h1 -> ... -> K with ReLU between layers and a
// linear output.
struct MlpSpec {
  std::vector<int> widths;
  Seed seed = 0;

  void validate() const;
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
};

// `depth` linear layers, hidden ones of width `hidden`.
MlpSpec make_mlp_spec(int input, int hidden, int output, int depth, Seed seed);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

struct AdamState {
  Gradients first;
  Gradients second;
  long step = 0;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<Layer> layers;
  AdamState adam;
};

// He-normal weights (variance 2 / fan_in), zero biases, zeroed moments.
MlpParams init_mlp(const MlpSpec& spec);

// Activations kept for the backward pass. inputs[l] is what layer l consumed;
// pre[l] its pre-activation.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  Matrix output;
};

// Rows of x are samples.
ForwardCache forward(const MlpParams& p, const Matrix& x);
Matrix predict(const MlpParams& p, const Matrix& x);

// Parameter gradients given dLoss/dOutput.
Gradients backward(const MlpParams& p, const ForwardCache& cache, const Matrix& grad_output);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

// (1/m) sum_i |y_i - target_i|^2 and its gradient 2 (Y - target) / m.
LossGrad mse_loss_grad(const Matrix& y, const Matrix& target);

struct PairLossGrad {
  double loss = 0.0;
  Matrix grad_first;
  Matrix grad_second;
};

// Mean over row pairs of |zi - zj|^2 (same label) or max(0, margin - |zi - zj|)^2
// (different label). Subgradient 0 at the hinge and at zero distance.
PairLossGrad contrastive_loss_grad(const Matrix& first, const Matrix& second,
                                   const std::vector<bool>& same_label, double margin);

// Mean softmax cross-entropy of logits (rows) against integer labels.
LossGrad cross_entropy_loss_grad(const Matrix& logits, const std::vector<int>& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected adaptive-moment update. Throws TrainingError on a
// non-finite gradient or parameter.
void adam_step(MlpParams& p, const Gradients& g, const AdamConfig& cfg);

// Checkpoint: spec plus flattened arrays (row-major weights), shortest
// round-trip decimal formatting so reload is bit-exact.
std::string checkpoint_json(const MlpParams& p);
MlpParams checkpoint_from_json(const std::string& text);
void save_checkpoint(const MlpParams& p, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace specalign
