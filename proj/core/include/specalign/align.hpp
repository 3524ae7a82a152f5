#pragma once

#include "specalign/spectral.hpp"
#include "specalign/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace specalign {

// K x (K+1) affine map acting on homogeneous coordinates [phi, 1].
class AffineMap {
 public:
  // Throws DegenerateError if the linear block is (numerically) singular or
  // any entry is non-finite.
  explicit AffineMap(Matrix t);

  static AffineMap identity(Eigen::Index dims);

  Eigen::Index dim() const { return t_.rows(); }
  const Matrix& matrix() const { return t_; }
  auto linear() const { return t_.leftCols(t_.rows()); }
  auto offset() const { return t_.col(t_.rows()); }

  // Applies the map to every row of `coords`.
  Matrix apply(const Matrix& coords) const;

  // Frobenius distance to [I | 0].
  double deviation_from_identity() const;

  std::string to_json() const;
  static AffineMap from_json(const std::string& text);

 private:
  Matrix t_;
};

// outer(inner(x)).
AffineMap compose(const AffineMap& outer, const AffineMap& inner);

struct AffineFit {
  AffineMap map;
  double rmse = 0.0;  // sqrt(mean_i |dst_i - T [src_i, 1]|^2)
};

// Least-squares T minimizing sum_i |dst_i - T [src_i, 1]|^2 over anchor rows,
// via column-pivoted Householder QR of the homogeneous design matrix.
AffineFit fit_affine(const Matrix& src, const Matrix& dst);

struct RansacConfig {
  int iterations = 200;
  // Unset: 0.05 x RMS row norm of dst.
  std::optional<double> inlier_tol;
  // Unset: max(K + 1, ceil(l / 2)).
  std::optional<Eigen::Index> min_inliers;
  Seed seed = 0;
};

struct RansacFit {
  AffineFit fit;
  std::vector<bool> inliers;
};

// Fits minimal (K+1)-subsets, keeps the one with the largest consensus set
// (ties keep the earliest), then refits on that consensus set.
RansacFit fit_affine_ransac(const Matrix& src, const Matrix& dst, const RansacConfig& cfg);

// Transforms every row; ids and eigenvalues are carried over, `aligned` set.
Embedding apply_affine(const AffineMap& t, const Embedding& e);

// Frozen reference coordinates of the anchor set.
struct AnchorFrame {
  IndexSet anchor_ids;
  Matrix ref_coords;  // l x K, row i belongs to anchor_ids[i]

  // l >= K + 1, unique ids, matching sizes.
  void validate() const;
  Eigen::Index dim() const { return ref_coords.cols(); }
};

struct AlignedBatch {
  Embedding embedding;
  AffineFit fit;
  std::vector<bool> inliers;  // all true without RANSAC
};

// Registers the batch's anchor rows onto the frame and maps the whole batch.
AlignedBatch align_batch(const Embedding& batch, const AnchorFrame& frame,
                         const std::optional<RansacConfig>& ransac = std::nullopt);

struct FeatureUpdateAlignment {
  Embedding embedding;
  AffineFit fit;  // T_G
};

// Aligns an embedding computed on updated features to the anchor coordinates
// obtained under the previous features.
FeatureUpdateAlignment align_feature_update(const Matrix& prev_anchor_coords,
                                            const Embedding& updated,
                                            const IndexSet& anchor_ids);

}  // namespace specalign
