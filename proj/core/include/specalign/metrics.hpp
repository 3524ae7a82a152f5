#pragma once

#include "specalign/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace specalign {

// Squared projection distance K - sum cos^2(theta_i) between the column
// spans of two n x K matrices. Inputs need not be orthonormal.
double grassmann_distance(const Matrix& y1, const Matrix& y2);

// |Y^T Y - I|_F^2 after scaling every column of Y to unit length.
double orthogonality_defect(const Matrix& y);

struct KMeansConfig {
  int clusters = 2;
  int restarts = 10;
  int max_iterations = 300;
  Seed seed = 0;
};

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;    // clusters x dim
  double inertia = 0.0;  // within-cluster sum of squares
};

// Lloyd iterations with k-means++ seeding, best of `restarts` by inertia
// (ties keep the lowest restart). Empty clusters are reseeded from the point
// farthest from its center.
KMeansResult kmeans(const Matrix& points, const KMeansConfig& cfg);

// Minimum-cost perfect assignment; result[row] = column.
std::vector<int> kuhn_munkres(const Matrix& cost);

// I(c, c') / max(H(c), H(c')), natural logs; 1 when both entropies vanish.
double nmi(const std::vector<int>& truth, const std::vector<int>& pred);

// Fraction matched under the best one-to-one relabeling of pred.
double clustering_accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

struct ProbeConfig {
  int steps = 500;
  double lr = 0.05;
  // z-score the embedding with training-split statistics before the probe.
  bool standardize = true;
  Seed seed = 0;
};

// Trains a single linear layer with softmax cross-entropy on the training
// embedding and returns plain accuracy on the test embedding.
double linear_probe_accuracy(const Matrix& train_emb, const std::vector<int>& train_labels,
                             const Matrix& test_emb, const std::vector<int>& test_labels,
                             const ProbeConfig& cfg = {});

struct MetricsReport {
  std::optional<double> grassmann;
  std::optional<double> orth_defect;
  std::optional<double> nmi;
  std::optional<double> acc;
  std::optional<double> probe_accuracy;
  std::optional<double> anchor_rmse;
  Eigen::Index dims = 0;
  Eigen::Index count = 0;
  Seed seed = 0;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  // Fixed-order, human-readable table.
  std::string to_table() const;
};

// NMI and ACC of k-means on `coords` against `labels`.
struct ClusteringScores {
  double nmi = 0.0;
  double acc = 0.0;
};
ClusteringScores cluster_and_score(const Matrix& coords, const std::vector<int>& labels, int clusters,
                                   Seed seed, int restarts = 10);

}  // namespace specalign
