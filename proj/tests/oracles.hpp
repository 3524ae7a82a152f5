#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Cyclic Jacobi rotations; eigenvalues ascending.
inline Vector jacobi_eigenvalues(Matrix a, int sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
      }
  }
  Vector d = a.diagonal();
  std::sort(d.data(), d.data() + d.size());
  return d;
}

// O(m^2) Gaussian kNN graph with union symmetrization, ties by lower index,
// written with full sorts and explicit loops.
inline Matrix brute_force_knn_weights(const Matrix& x, int k, double sigma) {
  const Eigen::Index m = x.rows();
  Matrix w = Matrix::Zero(m, m);
  std::vector<std::vector<char>> keep(m, std::vector<char>(m, 0));
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<std::pair<double, Eigen::Index>> cand;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      double d = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      cand.emplace_back(d, j);
    }
    std::sort(cand.begin(), cand.end());
    for (int r = 0; r < k; ++r) {
      keep[i][cand[r].second] = 1;
      keep[cand[r].second][i] = 1;
    }
  }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (keep[i][j]) {
        double d = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
        w(i, j) = std::exp(-d / (2.0 * sigma * sigma));
      }
  return w;
}

// Minimum-cost assignment by enumerating all permutations.
inline std::vector<int> brute_force_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double assignment_cost(const Matrix& cost, const std::vector<int>& a) {
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) c += cost(static_cast<Eigen::Index>(i), a[i]);
  return c;
}

// Clustering accuracy by trying every relabeling of the predicted clusters.
inline double brute_force_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  const int c = std::max(*std::max_element(truth.begin(), truth.end()),
                         *std::max_element(pred.begin(), pred.end())) + 1;
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[pred[i]] == truth[i] ? 1 : 0;
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

// |P1 - P2|_F^2 / 2 with P = Y (Y^T Y)^-1 Y^T.
inline double projector_distance(const Matrix& y1, const Matrix& y2) {
  const Matrix p1 = y1 * (y1.transpose() * y1).inverse() * y1.transpose();
  const Matrix p2 = y2 * (y2.transpose() * y2).inverse() * y2.transpose();
  return 0.5 * (p1 - p2).squaredNorm();
}

// Central difference of f at x along every coordinate of `param`.
template <typename F>
Matrix central_difference(Matrix& param, F&& f, double h = 1e-5) {
  Matrix g(param.rows(), param.cols());
  for (Eigen::Index r = 0; r < param.rows(); ++r)
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double keep = param(r, c);
      param(r, c) = keep + h;
      const double up = f();
      param(r, c) = keep - h;
      const double down = f();
      param(r, c) = keep;
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

inline Matrix random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = d(rng);
  return 0.5 * (a + a.transpose());
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = d(rng);
  return a;
}

}  // namespace oracle
