#pragma once

#include "specalign/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace specalign {

// A feature table with optional class labels. Rows are nodes; ids map each
// row back to its index in the originating table so subsets stay traceable.
class Dataset {
 public:
  Dataset() = default;

  // Validates the invariants: n >= 2, d >= 1, finite entries, unique ids,
  // labels (when given) in [0, C) with every class populated.
  Dataset(Matrix features, std::optional<std::vector<int>> labels, IndexSet ids);

  // ids default to 0..n-1.
  Dataset(Matrix features, std::optional<std::vector<int>> labels);

  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  const Matrix& features() const { return features_; }
  const IndexSet& ids() const { return ids_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  int class_count() const { return class_count_; }

  // Row position of a dataset id, or -1.
  Eigen::Index row_of(NodeId id) const;

  // Feature rows for a list of ids (in the given order).
  Matrix rows(const IndexSet& ids) const;
  std::vector<int> labels_of(const IndexSet& ids) const;

  // Sub-dataset over the given ids, keeping the original ids. Labels are
  // kept verbatim; classes absent from the subset are allowed here.
  Dataset subset(const IndexSet& ids) const;

 private:
  void validate();

  Matrix features_;
  std::optional<std::vector<int>> labels_;
  IndexSet ids_;
  std::vector<Eigen::Index> row_lookup_;  // id -> row, dense over [0, max id]
  int class_count_ = 0;
};

enum class ToyKind { kThreeMoons, kTwoCircles, kGaussianBlobs };

ToyKind parse_toy_kind(std::string_view name);
std::string_view to_string(ToyKind kind);

struct ToyOptions {
  ToyKind kind = ToyKind::kThreeMoons;
  Eigen::Index n = 9000;
  double noise = 0.05;
  Seed seed = 0;
  int blob_count = 3;  // gaussian_blobs only
};

// Toy datasets with balanced classes (sizes differ by at most one).
//  three_moons:  unit half-circle arcs, alternately opening down/up, placed
//                as described at kMoonSpacing below.
//  two_circles:  concentric circles of radius 1 and 0.5.
//  gaussian_blobs: isotropic blobs with centers on a circle of radius 5.
// Noise is Gaussian with standard deviation `noise`, truncated at 3 sigma
// (radial for the circles, isotropic otherwise).
Dataset generate_toy(const ToyOptions& opts);

// Nominal class centers/radii, exposed for tests and diagnostics.
Matrix blob_centers(int blob_count);
inline constexpr double kOuterCircleRadius = 1.0;
inline constexpr double kInnerCircleRadius = 0.5;
// three_moons: arc c is centered at (kMoonSpacing * c, kMoonLift if c is odd).
inline constexpr double kMoonSpacing = 1.25;
inline constexpr double kMoonLift = 0.25;

// CSV: optional header line, a column named `label` marks integer labels.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

// Uniform (or per-class balanced) draw of l unique ids, sorted ascending.
IndexSet draw_anchors(const Dataset& ds, Eigen::Index count, Seed seed, bool stratified);

// anchors followed by (m - l) fresh ids drawn uniformly from the rest.
IndexSet draw_batch(const Dataset& ds, const IndexSet& anchors, Eigen::Index batch_size,
                    Seed seed);

struct Split {
  IndexSet train;
  IndexSet test;
};

// Seeded partition; test gets round(test_fraction * n) ids.
Split split_dataset(const Dataset& ds, double test_fraction, Seed seed);

}  // namespace specalign
