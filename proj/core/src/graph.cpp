#include "specalign/graph.hpp"

#include "specalign/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace specalign {

LaplacianKind parse_laplacian_kind(std::string_view name) {
  if (name == "unnormalized") return LaplacianKind::kUnnormalized;
  if (name == "sym_normalized") return LaplacianKind::kSymNormalized;
  if (name == "random_walk") return LaplacianKind::kRandomWalk;
  throw ConfigError("unknown laplacian kind '" + std::string(name) +
                    "' (expected unnormalized, sym_normalized or random_walk)");
}

std::string_view to_string(LaplacianKind kind) {
  switch (kind) {
    case LaplacianKind::kUnnormalized: return "unnormalized";
    case LaplacianKind::kSymNormalized: return "sym_normalized";
    case LaplacianKind::kRandomWalk: return "random_walk";
  }
  return "?";
}

void GraphConfig::validate() const {
  if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
  if (sigma && !(std::isfinite(*sigma) && *sigma > 0.0))
    throw ConfigError("fixed sigma must be finite and positive");
  if (self_loop_epsilon && !(std::isfinite(*self_loop_epsilon) && *self_loop_epsilon > 0.0))
    throw ConfigError("self_loop_epsilon must be finite and positive");
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

Graph build_graph(const Matrix& features, const IndexSet& node_ids, const GraphConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = features.rows();
  if (static_cast<Eigen::Index>(node_ids.size()) != m)
    throw SizeError("node_ids length does not match feature rows");
  if (m < cfg.k_neighbors + 1)
    throw SizeError("graph over " + std::to_string(m) + " nodes cannot have " +
                    std::to_string(cfg.k_neighbors) + " neighbors per node");
  if (!features.allFinite()) throw NumericError("graph features contain non-finite values");

  Matrix d2(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double v = (features.row(i) - features.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }

  // adjacency[i*m + j] marks the union-symmetrized kNN edge set.
  std::vector<char> adjacency(static_cast<std::size_t>(m * m), 0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  const auto k = static_cast<std::size_t>(cfg.k_neighbors);
  for (Eigen::Index i = 0; i < m; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::swap(order[static_cast<std::size_t>(i)], order.back());
    auto closer = [&](Eigen::Index a, Eigen::Index b) {
      const double da = d2(i, a), db = d2(i, b);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end() - 1, closer);
    for (std::size_t r = 0; r < k; ++r) {
      const Eigen::Index j = order[r];
      adjacency[static_cast<std::size_t>(i * m + j)] = 1;
      adjacency[static_cast<std::size_t>(j * m + i)] = 1;
    }
  }

  double sigma;
  if (cfg.sigma) {
    sigma = *cfg.sigma;
  } else {
    std::vector<double> lengths;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j)
        if (adjacency[static_cast<std::size_t>(i * m + j)]) lengths.push_back(std::sqrt(d2(i, j)));
    sigma = median(std::move(lengths));
    if (!(sigma > 0.0))
      throw DegenerateError("median kNN distance is zero (duplicate points); set a fixed sigma");
  }

  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(m) * k * 2);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      if (adjacency[static_cast<std::size_t>(i * m + j)]) {
        triplets.emplace_back(i, j, std::exp(-d2(i, j) * inv));
      }
  if (cfg.self_loop_epsilon)
    for (Eigen::Index i = 0; i < m; ++i) triplets.emplace_back(i, i, *cfg.self_loop_epsilon);

  Graph g;
  g.weights.resize(m, m);
  g.weights.setFromTriplets(triplets.begin(), triplets.end());
  g.weights.makeCompressed();
  g.node_ids = node_ids;
  g.sigma = sigma;
  g.degrees = Vector::Zero(m);
  for (Eigen::Index c = 0; c < g.weights.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(g.weights, c); it; ++it) g.degrees(it.row()) += it.value();
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(g.degrees(i) > 0.0))
      throw ConnectivityError("node " + std::to_string(node_ids[static_cast<std::size_t>(i)]) +
                                  " is isolated (zero degree) in the affinity graph",
                              node_ids[static_cast<std::size_t>(i)]);
  return g;
}

Graph build_graph(const Matrix& features, const GraphConfig& cfg) {
  IndexSet ids(static_cast<std::size_t>(features.rows()));
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return build_graph(features, ids, cfg);
}

LaplacianResult laplacian(const Graph& g, LaplacianKind kind) {
  const Eigen::Index m = g.size();
  if ((g.degrees.array() <= 0.0).any())
    throw NumericError("laplacian of a graph with a zero-degree node");
  const Matrix w = Matrix(g.weights);
  LaplacianResult out;
  switch (kind) {
    case LaplacianKind::kUnnormalized: {
      out.matrix = -w;
      // Diagonal written so that each row sums to zero in floating point
      // as closely as the off-diagonal sum allows.
      for (Eigen::Index i = 0; i < m; ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < m; ++j)
          if (j != i) off += w(i, j);
        out.matrix(i, i) = off;
      }
      break;
    }
    case LaplacianKind::kSymNormalized: {
      const Vector s = g.degrees.cwiseSqrt().cwiseInverse();
      Matrix conj = s.asDiagonal() * w * s.asDiagonal();
      conj = (0.5 * (conj + conj.transpose())).eval();
      out.matrix = Matrix::Identity(m, m) - conj;
      break;
    }
    case LaplacianKind::kRandomWalk: {
      const Vector s = g.degrees.cwiseSqrt().cwiseInverse();
      out.matrix = w * g.degrees.cwiseInverse().asDiagonal();
      Matrix conj = s.asDiagonal() * w * s.asDiagonal();
      out.symmetric_conjugate = (0.5 * (conj + conj.transpose())).eval();
      break;
    }
  }
  return out;
}

void write_edge_list(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  char buf[64];
  for (Eigen::Index c = 0; c < g.weights.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(g.weights, c); it; ++it)
      if (it.row() < it.col()) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, it.value());
        (void)ec;
        out << it.row() << ',' << it.col() << ',' << std::string_view(buf, ptr - buf) << '\n';
      }
}

}  // namespace specalign
