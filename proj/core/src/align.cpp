#include "specalign/align.hpp"

#include "specalign/errors.hpp"

#include <json.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

namespace specalign {

namespace {

constexpr double kMinAbsDeterminant = 1e-12;
// Relative pivot threshold for the rank decision in the QR solve.
constexpr double kRankTol = 1e-10;

Matrix homogeneous(const Matrix& coords) {
  Matrix h(coords.rows(), coords.cols() + 1);
  h.leftCols(coords.cols()) = coords;
  h.col(coords.cols()).setOnes();
  return h;
}

}  // namespace

AffineMap::AffineMap(Matrix t) : t_(std::move(t)) {
  if (t_.cols() != t_.rows() + 1)
    throw SizeError("affine map must be K x (K+1), got " + std::to_string(t_.rows()) + "x" +
                    std::to_string(t_.cols()));
  if (!t_.allFinite()) throw DegenerateError("affine map has non-finite entries");
  const double det = t_.leftCols(t_.rows()).determinant();
  if (!(std::abs(det) > kMinAbsDeterminant))
    throw DegenerateError("affine map linear block is singular (|det| = " +
                          std::to_string(std::abs(det)) + ")");
}

AffineMap AffineMap::identity(Eigen::Index dims) {
  Matrix t = Matrix::Zero(dims, dims + 1);
  t.leftCols(dims).setIdentity();
  return AffineMap(std::move(t));
}

Matrix AffineMap::apply(const Matrix& coords) const {
  if (coords.cols() != dim())
    throw SizeError("affine map of dimension " + std::to_string(dim()) +
                    " applied to coordinates of dimension " + std::to_string(coords.cols()));
  Matrix out = coords * linear().transpose();
  out.rowwise() += offset().transpose();
  return out;
}

double AffineMap::deviation_from_identity() const {
  return (t_ - identity(dim()).matrix()).norm();
}

std::string AffineMap::to_json() const {
  nlohmann::ordered_json j;
  j["dims"] = dim();
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < t_.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(t_.cols()));
    for (Eigen::Index c = 0; c < t_.cols(); ++c) row[static_cast<std::size_t>(c)] = t_(r, c);
    rows.push_back(row);
  }
  j["T"] = rows;
  return j.dump();
}

AffineMap AffineMap::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const auto k = j.at("dims").get<Eigen::Index>();
    Matrix t(k, k + 1);
    const auto& rows = j.at("T");
    if (static_cast<Eigen::Index>(rows.size()) != k) throw ParseError("affine map row count mismatch");
    for (Eigen::Index r = 0; r < k; ++r) {
      const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != k + 1)
        throw ParseError("affine map column count mismatch");
      for (Eigen::Index c = 0; c <= k; ++c) t(r, c) = row[static_cast<std::size_t>(c)];
    }
    return AffineMap(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("affine map JSON: ") + e.what());
  }
}

AffineMap compose(const AffineMap& outer, const AffineMap& inner) {
  if (outer.dim() != inner.dim()) throw SizeError("cannot compose affine maps of different dimension");
  const Eigen::Index k = outer.dim();
  Matrix t(k, k + 1);
  t.leftCols(k) = outer.linear() * inner.linear();
  t.col(k) = outer.linear() * inner.offset() + outer.offset();
  return AffineMap(std::move(t));
}

AffineFit fit_affine(const Matrix& src, const Matrix& dst) {
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw SizeError("fit_affine: source and target anchor coordinates differ in shape");
  const Eigen::Index l = src.rows(), k = src.cols();
  if (l < k + 1)
    throw SizeError("fit_affine needs at least K+1 = " + std::to_string(k + 1) + " anchors, got " +
                    std::to_string(l));
  const Matrix design = homogeneous(src);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(kRankTol);
  if (qr.rank() < k + 1)
    throw DegenerateError("anchor embedding is degenerate: homogeneous design has rank " +
                          std::to_string(qr.rank()) + " < " + std::to_string(k + 1));
  const Matrix x = qr.solve(dst);  // (K+1) x K
  AffineMap map(x.transpose());
  const double sq = (dst - map.apply(src)).squaredNorm();
  return {std::move(map), std::sqrt(sq / static_cast<double>(l))};
}

RansacFit fit_affine_ransac(const Matrix& src, const Matrix& dst, const RansacConfig& cfg) {
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw SizeError("fit_affine_ransac: source and target anchor coordinates differ in shape");
  if (cfg.iterations < 1) throw ConfigError("RANSAC iterations must be >= 1");
  const Eigen::Index l = src.rows(), k = src.cols();
  if (l < k + 1)
    throw SizeError("RANSAC needs at least K+1 = " + std::to_string(k + 1) + " anchors");
  const double tol = cfg.inlier_tol.value_or(
      0.05 * std::sqrt(dst.rowwise().squaredNorm().sum() / static_cast<double>(l)));
  if (!(tol > 0.0)) throw ConfigError("RANSAC inlier tolerance must be positive");
  const Eigen::Index min_inliers = cfg.min_inliers.value_or(
      std::max<Eigen::Index>(k + 1, (l + 1) / 2));
  if (min_inliers > l)
    throw RobustFitError("RANSAC min_inliers " + std::to_string(min_inliers) +
                         " exceeds anchor count " + std::to_string(l));

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(l));
  std::vector<bool> best_mask;
  Eigen::Index best_count = 0;
  Matrix sub_src(k + 1, k), sub_dst(k + 1, k);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i <= k; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, l - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
      sub_src.row(i) = src.row(idx[static_cast<std::size_t>(i)]);
      sub_dst.row(i) = dst.row(idx[static_cast<std::size_t>(i)]);
    }
    AffineMap candidate = AffineMap::identity(k);
    try {
      candidate = fit_affine(sub_src, sub_dst).map;
    } catch (const DegenerateError&) {
      continue;
    }
    const Vector err = (dst - candidate.apply(src)).rowwise().norm();
    std::vector<bool> mask(static_cast<std::size_t>(l));
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < l; ++i) {
      mask[static_cast<std::size_t>(i)] = err(i) < tol;
      count += mask[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    if (count > best_count) {
      best_count = count;
      best_mask = std::move(mask);
      if (best_count == l) break;
    }
  }

  if (best_count < min_inliers || best_count < k + 1)
    throw RobustFitError("RANSAC found no consensus set of size >= " + std::to_string(min_inliers) +
                         " (best " + std::to_string(best_count) + " of " + std::to_string(l) + ")");

  Matrix in_src(best_count, k), in_dst(best_count, k);
  for (Eigen::Index i = 0, r = 0; i < l; ++i)
    if (best_mask[static_cast<std::size_t>(i)]) {
      in_src.row(r) = src.row(i);
      in_dst.row(r) = dst.row(i);
      ++r;
    }
  return {fit_affine(in_src, in_dst), std::move(best_mask)};
}

Embedding apply_affine(const AffineMap& t, const Embedding& e) {
  Embedding out = e;
  out.coords = t.apply(e.coords);
  out.aligned = true;
  return out;
}

void AnchorFrame::validate() const {
  const auto l = static_cast<Eigen::Index>(anchor_ids.size());
  if (ref_coords.rows() != l) throw SizeError("anchor frame: coordinate rows do not match anchor count");
  if (l < ref_coords.cols() + 1)
    throw SizeError("anchor frame needs at least K+1 = " + std::to_string(ref_coords.cols() + 1) +
                    " anchors, got " + std::to_string(l));
  std::unordered_set<NodeId> seen(anchor_ids.begin(), anchor_ids.end());
  if (static_cast<Eigen::Index>(seen.size()) != l) throw PreconditionError("anchor frame has duplicate ids");
}

AlignedBatch align_batch(const Embedding& batch, const AnchorFrame& frame,
                         const std::optional<RansacConfig>& ransac) {
  frame.validate();
  if (batch.dim() != frame.dim())
    throw SizeError("batch embedding dimension " + std::to_string(batch.dim()) +
                    " differs from frame dimension " + std::to_string(frame.dim()));
  const Matrix anchors = batch.rows_of(frame.anchor_ids);
  if (ransac) {
    RansacFit r = fit_affine_ransac(anchors, frame.ref_coords, *ransac);
    Embedding aligned = apply_affine(r.fit.map, batch);
    return {std::move(aligned), std::move(r.fit), std::move(r.inliers)};
  }
  AffineFit fit = fit_affine(anchors, frame.ref_coords);
  Embedding aligned = apply_affine(fit.map, batch);
  return {std::move(aligned), std::move(fit), std::vector<bool>(frame.anchor_ids.size(), true)};
}

FeatureUpdateAlignment align_feature_update(const Matrix& prev_anchor_coords,
                                            const Embedding& updated,
                                            const IndexSet& anchor_ids) {
  const Matrix current = updated.rows_of(anchor_ids);
  AffineFit fit = fit_affine(current, prev_anchor_coords);
  Embedding aligned = apply_affine(fit.map, updated);
  return {std::move(aligned), std::move(fit)};
}

}  // namespace specalign
