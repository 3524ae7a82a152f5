#pragma once

#include "specalign/graph.hpp"
#include "specalign/types.hpp"

#include <filesystem>
#include <string>

namespace specalign {

struct EigenPairs {
  Vector values;   // ascending
  Matrix vectors;  // one orthonormal eigenvector per column
};

// Dense symmetric eigendecomposition, returning the k smallest pairs.
// Each eigenvector is sign-normalized so that its largest-magnitude entry is
// positive (lowest index wins ties).
EigenPairs eig_symmetric(const Matrix& a, Eigen::Index k);

// All pairs, ascending.
EigenPairs eig_symmetric(const Matrix& a);

// The k largest pairs, still in ascending order.
EigenPairs eig_symmetric_largest(const Matrix& a, Eigen::Index k);

// Flips the sign of each column so that its largest-magnitude entry is positive.
void fix_signs(Matrix& vectors);

struct EmbeddingKind {
  LaplacianKind laplacian = LaplacianKind::kSymNormalized;
  bool skip_trivial = true;
  double diffusion_time = 0.0;  // random_walk only
};

// Per-node spectral coordinates of a node subset.
struct Embedding {
  Matrix coords;       // count x K
  Vector eigenvalues;  // ascending for Laplacians, descending diffusion eigenvalues for random_walk
  IndexSet node_ids;
  EmbeddingKind kind;
  bool aligned = false;

  Eigen::Index dim() const { return coords.cols(); }
  Eigen::Index count() const { return coords.rows(); }
  // Coordinates of the given nodes, in the given order. Throws
  // PreconditionError naming every id that is not covered.
  Matrix rows_of(const IndexSet& ids) const;
};

inline constexpr Eigen::Index kDefaultSpectralCap = 4096;

// Laplacian kinds: eigenvectors of the K smallest eigenvalues (after the
// first when skip_trivial). random_walk: diffusion map; the symmetric
// conjugate S is decomposed, the K largest non-trivial eigenvalues gamma are
// kept, and each coordinate column is D^-1/2 v scaled by gamma^t. The trivial
// eigenvector is always skipped for random_walk.
Embedding embed(const Graph& g, Eigen::Index dims, const EmbeddingKind& kind,
                Eigen::Index cap = kDefaultSpectralCap);

// CSV with node_id followed by one column per coordinate.
void write_embedding_csv(const Embedding& e, const std::filesystem::path& path);
// JSON sidecar with eigenvalues and kind.
void write_embedding_sidecar(const Embedding& e, const std::filesystem::path& path);
std::string embedding_sidecar_json(const Embedding& e);

}  // namespace specalign
