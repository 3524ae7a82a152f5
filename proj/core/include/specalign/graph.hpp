#pragma once

#include "specalign/types.hpp"

#include <Eigen/SparseCore>

#include <filesystem>
#include <optional>
#include <string_view>

namespace specalign {

enum class LaplacianKind { kUnnormalized, kSymNormalized, kRandomWalk };

LaplacianKind parse_laplacian_kind(std::string_view name);
std::string_view to_string(LaplacianKind kind);

struct GraphConfig {
  int k_neighbors = 10;
  // Gaussian kernel width. Unset means: median of the retained kNN edge
  // lengths of the graph being built.
  std::optional<double> sigma;
  LaplacianKind laplacian_kind = LaplacianKind::kSymNormalized;
  // When set, adds epsilon * I to W so that no node can be isolated.
  std::optional<double> self_loop_epsilon;

  void validate() const;
};

using SparseMatrix = Eigen::SparseMatrix<double>;

// Gaussian kNN affinity graph over a node subset.
struct Graph {
  SparseMatrix weights;  // symmetric, zero diagonal (unless self loops), entries in [0, 1]
  Vector degrees;        // row sums of weights, all > 0
  IndexSet node_ids;
  double sigma = 0.0;    // kernel width actually used

  Eigen::Index size() const { return degrees.size(); }
};

// Builds W[i,j] = exp(-|x_i - x_j|^2 / (2 sigma^2)) on the union-symmetrized
// kNN edge set. Rows of `features` correspond to `node_ids`. Neighbor ties
// are broken by lower row index.
Graph build_graph(const Matrix& features, const IndexSet& node_ids, const GraphConfig& cfg);

// Convenience overload with node ids 0..m-1.
Graph build_graph(const Matrix& features, const GraphConfig& cfg);

struct LaplacianResult {
  // unnormalized: D - W; sym_normalized: I - D^-1/2 W D^-1/2;
  // random_walk: P = W D^-1 (column stochastic).
  Matrix matrix;
  // random_walk only: S = D^-1/2 W D^-1/2, similar to P and symmetric.
  std::optional<Matrix> symmetric_conjugate;
};

LaplacianResult laplacian(const Graph& g, LaplacianKind kind);

// One `i,j,w` line per stored edge with i < j (row positions, not node ids).
void write_edge_list(const Graph& g, const std::filesystem::path& path);

}  // namespace specalign
