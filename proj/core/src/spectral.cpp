#include "specalign/spectral.hpp"

#include "specalign/errors.hpp"

#include <json.hpp>

#include <lapacke.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <vector>

namespace specalign {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kResidualTol = 1e-8;

// Eigenpairs with ascending indices [first, first + count): Householder
// tridiagonalization, then LAPACK dstemr on the tridiagonal for the selected
// pairs only, then back-transformation of those vectors.
EigenPairs eig_range(const Matrix& a, Eigen::Index first, Eigen::Index count) {
  const auto n = static_cast<lapack_int>(a.rows());
  EigenPairs out{Vector(count), Matrix(a.rows(), count)};
  if (count == 0) return out;
  Eigen::Tridiagonalization<Matrix> tri(a);
  Vector diag = tri.diagonal();
  Vector sub = Vector::Zero(n);
  if (n > 1) sub.head(n - 1) = tri.subDiagonal();
  Matrix z(a.rows(), count);
  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(count));
  lapack_int found = 0;
  lapack_int tryrac = 1;
  const lapack_int info = LAPACKE_dstemr(
      LAPACK_COL_MAJOR, 'V', 'I', n, diag.data(), sub.data(), 0.0, 0.0, static_cast<lapack_int>(first + 1),
      static_cast<lapack_int>(first + count), &found, w.data(), z.data(), n, static_cast<lapack_int>(count),
      support.data(), &tryrac);
  if (info != 0 || found != count)
    throw NumericError("symmetric eigensolver failed on a " + std::to_string(n) + "x" + std::to_string(n) +
                       " matrix (LAPACK info " + std::to_string(info) + ", " + std::to_string(found) +
                       " of " + std::to_string(count) + " pairs)");
  for (Eigen::Index j = 0; j < count; ++j) out.values(j) = w[static_cast<std::size_t>(j)];
  out.vectors.noalias() = tri.matrixQ() * z;
  fix_signs(out.vectors);
  return out;
}

void check_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) throw PreconditionError("eigensolver input is not square");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol * std::max(1.0, a.cwiseAbs().maxCoeff()))
    throw PreconditionError("eigensolver input is not symmetric (max asymmetry " +
                            std::to_string(asym) + ")");
}

[[maybe_unused]] void check_residuals(const Matrix& a, const EigenPairs& p) {
  const double bound = kResidualTol * std::max(1.0, a.norm());
  for (Eigen::Index j = 0; j < p.values.size(); ++j) {
    const double r = (a * p.vectors.col(j) - p.values(j) * p.vectors.col(j)).norm();
    if (!(r < bound))
      throw NumericError("eigenpair " + std::to_string(j) + " residual " + std::to_string(r) +
                         " exceeds " + std::to_string(bound));
  }
}

}  // namespace

void fix_signs(Matrix& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double v = std::abs(vectors(i, j));
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

EigenPairs eig_symmetric(const Matrix& a) {
  check_symmetric(a);
  return eig_range(a, 0, a.rows());
}

EigenPairs eig_symmetric(const Matrix& a, Eigen::Index k) {
  check_symmetric(a);
  if (k < 0 || k > a.rows())
    throw SizeError("requested " + std::to_string(k) + " eigenpairs of a " +
                    std::to_string(a.rows()) + "x" + std::to_string(a.rows()) + " matrix");
  return eig_range(a, 0, k);
}

EigenPairs eig_symmetric_largest(const Matrix& a, Eigen::Index k) {
  check_symmetric(a);
  if (k < 0 || k > a.rows())
    throw SizeError("requested " + std::to_string(k) + " eigenpairs of a " +
                    std::to_string(a.rows()) + "x" + std::to_string(a.rows()) + " matrix");
  return eig_range(a, a.rows() - k, k);
}

Matrix Embedding::rows_of(const IndexSet& ids) const {
  std::unordered_map<NodeId, Eigen::Index> pos;
  pos.reserve(node_ids.size());
  for (std::size_t r = 0; r < node_ids.size(); ++r) pos.emplace(node_ids[r], static_cast<Eigen::Index>(r));
  Matrix out(static_cast<Eigen::Index>(ids.size()), dim());
  std::string missing;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = pos.find(ids[i]);
    if (it == pos.end()) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(ids[i]);
      continue;
    }
    out.row(static_cast<Eigen::Index>(i)) = coords.row(it->second);
  }
  if (!missing.empty()) throw PreconditionError("nodes not covered by the embedding: " + missing);
  return out;
}

Embedding embed(const Graph& g, Eigen::Index dims, const EmbeddingKind& kind, Eigen::Index cap) {
  const Eigen::Index m = g.size();
  if (m > cap)
    throw SizeError("embedding " + std::to_string(m) + " nodes exceeds the dense eigensolver cap of " +
                    std::to_string(cap) + "; use batched training for larger node sets");
  if (dims < 1) throw SizeError("embedding dimension must be positive");
  const bool skip = kind.laplacian == LaplacianKind::kRandomWalk || kind.skip_trivial;
  const Eigen::Index offset = skip ? 1 : 0;
  if (dims + offset > m)
    throw SizeError("embedding dimension " + std::to_string(dims) + (skip ? " (+1 trivial)" : "") +
                    " exceeds node count " + std::to_string(m));
  if (!(kind.diffusion_time >= 0.0) || !std::isfinite(kind.diffusion_time))
    throw ConfigError("diffusion time must be finite and non-negative");

  Embedding e;
  e.node_ids = g.node_ids;
  e.kind = kind;
  e.kind.skip_trivial = skip;
  const LaplacianResult lap = laplacian(g, kind.laplacian);

  if (kind.laplacian != LaplacianKind::kRandomWalk) {
    const EigenPairs p = eig_symmetric(lap.matrix, dims + offset);
#ifndef NDEBUG
    check_residuals(lap.matrix, p);
#endif
    e.coords = p.vectors.rightCols(dims);
    e.eigenvalues = p.values.tail(dims);
    return e;
  }

  const Matrix& s = *lap.symmetric_conjugate;
  const EigenPairs p = eig_symmetric_largest(s, dims + offset);
#ifndef NDEBUG
  check_residuals(s, p);
#endif
  const Vector inv_sqrt_deg = g.degrees.cwiseSqrt().cwiseInverse();
  e.coords.resize(m, dims);
  e.eigenvalues.resize(dims);
  for (Eigen::Index j = 0; j < dims; ++j) {
    // p is ascending; its last column is the trivial eigenvalue 1
    const Eigen::Index src = dims - 1 - j;
    const double gamma = p.values(src);
    double scale = 1.0;
    if (kind.diffusion_time != 0.0) {
      if (gamma < 0.0 && kind.diffusion_time != std::floor(kind.diffusion_time))
        throw NumericError("negative diffusion eigenvalue with non-integer diffusion time");
      scale = std::pow(gamma, kind.diffusion_time);
    }
    e.eigenvalues(j) = gamma;
    e.coords.col(j) = scale * inv_sqrt_deg.cwiseProduct(p.vectors.col(src));
  }
  return e;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

void write_embedding_csv(const Embedding& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  out << "node_id";
  for (Eigen::Index c = 0; c < e.dim(); ++c) out << ",phi" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < e.count(); ++r) {
    out << e.node_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < e.dim(); ++c) out << ',' << fmt(e.coords(r, c));
    out << '\n';
  }
}

std::string embedding_sidecar_json(const Embedding& e) {
  nlohmann::ordered_json j;
  j["laplacian_kind"] = std::string(to_string(e.kind.laplacian));
  j["skip_trivial"] = e.kind.skip_trivial;
  j["diffusion_time"] = e.kind.diffusion_time;
  j["aligned"] = e.aligned;
  j["count"] = e.count();
  j["dims"] = e.dim();
  j["eigenvalues"] = std::vector<double>(e.eigenvalues.data(), e.eigenvalues.data() + e.eigenvalues.size());
  return j.dump(2);
}

void write_embedding_sidecar(const Embedding& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  out << embedding_sidecar_json(e) << '\n';
}

}  // namespace specalign
