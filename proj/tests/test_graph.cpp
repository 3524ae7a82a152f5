#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

#include <specalign/dataset.hpp>
#include <specalign/errors.hpp>
#include <specalign/graph.hpp>
#include <specalign/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace specalign;

namespace {

Matrix dense(const Graph& g) { return Matrix(g.weights); }

Matrix blob_points(Eigen::Index m, Seed seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_matrix(m, 2, rng);
}

Vector sorted_eigenvalues(const Matrix& a) {
  Vector v = Eigen::SelfAdjointEigenSolver<Matrix>(a, Eigen::EigenvaluesOnly).eigenvalues();
  std::sort(v.data(), v.data() + v.size());
  return v;
}

}  // namespace

TEST_CASE("two points at distance sigma*sqrt(2)") {
  Matrix x(2, 1);
  x << 0.0, std::sqrt(2.0) * 0.7;
  GraphConfig cfg;
  cfg.k_neighbors = 1;
  cfg.sigma = 0.7;
  const Graph g = build_graph(x, cfg);
  CHECK(dense(g)(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(dense(g)(1, 0) == dense(g)(0, 1));
  CHECK(g.sigma == 0.7);
}

TEST_CASE("identical points have unit affinity") {
  Matrix x(3, 2);
  x << 1, 1, 1, 1, 4, 4;
  GraphConfig cfg;
  cfg.k_neighbors = 1;
  cfg.sigma = 1.0;
  const Graph g = build_graph(x, cfg);
  CHECK(dense(g)(0, 1) == 1.0);
}

TEST_CASE("kNN graph matches the pairwise oracle") {
  for (Seed s = 1; s <= 5; ++s) {
    const Matrix x = blob_points(30, s);
    GraphConfig cfg;
    cfg.k_neighbors = 5;
    const Graph g = build_graph(x, cfg);
    const Matrix expect = oracle::brute_force_knn_weights(x, 5, g.sigma);
    CHECK((dense(g) - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("median sigma is the median retained edge length") {
  const Matrix x = blob_points(40, 9);
  GraphConfig cfg;
  cfg.k_neighbors = 4;
  const Graph g = build_graph(x, cfg);
  const Matrix w = oracle::brute_force_knn_weights(x, 4, 1.0);
  std::vector<double> lengths;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = i + 1; j < w.cols(); ++j)
      if (w(i, j) > 0) lengths.push_back((x.row(i) - x.row(j)).norm());
  std::sort(lengths.begin(), lengths.end());
  const std::size_t mid = lengths.size() / 2;
  const double expect =
      lengths.size() % 2 ? lengths[mid] : 0.5 * (lengths[mid - 1] + lengths[mid]);
  CHECK(g.sigma == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("graph invariants") {
  const Matrix x = blob_points(60, 3);
  GraphConfig cfg;
  cfg.k_neighbors = 6;
  const Graph g = build_graph(x, cfg);
  const Matrix w = dense(g);
  CHECK(w == w.transpose());
  CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.maxCoeff() <= 1.0);
  CHECK((w.rowwise().sum() - g.degrees).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g.degrees.minCoeff() > 0.0);
}

TEST_CASE("graph construction errors") {
  Matrix dup = Matrix::Zero(4, 2);
  GraphConfig cfg;
  cfg.k_neighbors = 2;
  CHECK_THROWS_AS(build_graph(dup, cfg), DegenerateError);
  cfg.k_neighbors = 3;
  CHECK_THROWS_AS(build_graph(blob_points(3, 1), cfg), SizeError);

  // One far node: with a tiny fixed sigma its weights underflow to zero.
  Matrix x(4, 1);
  x << 0.0, 0.1, 0.2, 1000.0;
  GraphConfig tight;
  tight.k_neighbors = 1;
  tight.sigma = 0.05;
  try {
    build_graph(x, IndexSet{10, 11, 12, 13}, tight);
    FAIL("expected a connectivity error");
  } catch (const ConnectivityError& e) {
    CHECK(e.node() == 13);
  }
  tight.self_loop_epsilon = 1e-6;
  CHECK_NOTHROW(build_graph(x, IndexSet{10, 11, 12, 13}, tight));

  GraphConfig bad;
  bad.k_neighbors = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.k_neighbors = 1;
  bad.sigma = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_laplacian_kind("normalized"), ConfigError);
}

TEST_CASE("path graph Laplacian") {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  GraphConfig cfg;
  cfg.k_neighbors = 1;
  // Huge sigma makes every kernel value 1 to double precision.
  cfg.sigma = 1e9;
  const Graph g = build_graph(x, cfg);
  Matrix expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((laplacian(g, LaplacianKind::kUnnormalized).matrix - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Laplacian identities on random graphs") {
  for (Seed s = 1; s <= 10; ++s) {
    GraphConfig cfg;
    cfg.k_neighbors = 3;
    const Graph g = build_graph(blob_points(10 + static_cast<Eigen::Index>(s), s), cfg);
    const Matrix l = laplacian(g, LaplacianKind::kUnnormalized).matrix;
    const Vector ones = Vector::Ones(g.size());
    CHECK((l * ones).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ones.transpose() * l).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(oracle::jacobi_eigenvalues(l)(0) >= -1e-10);

    const Matrix ln = laplacian(g, LaplacianKind::kSymNormalized).matrix;
    const Vector lnv = oracle::jacobi_eigenvalues(ln);
    CHECK(lnv(0) >= -1e-10);
    CHECK(lnv(lnv.size() - 1) <= 2.0 + 1e-10);
    const Vector sqrt_d = g.degrees.cwiseSqrt();
    CHECK((ln * sqrt_d).norm() < 1e-8);

    const LaplacianResult rw = laplacian(g, LaplacianKind::kRandomWalk);
    REQUIRE(rw.symmetric_conjugate.has_value());
    CHECK((rw.matrix.colwise().sum().transpose() - ones).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((*rw.symmetric_conjugate - (Matrix::Identity(g.size(), g.size()) - ln)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("P and L_N spectra are reflections") {
  GraphConfig cfg;
  cfg.k_neighbors = 3;
  const Graph g = build_graph(blob_points(10, 21), cfg);
  const Vector ln = oracle::jacobi_eigenvalues(laplacian(g, LaplacianKind::kSymNormalized).matrix);
  // P is not symmetric; its spectrum is read off an independent general solve.
  const Matrix p = laplacian(g, LaplacianKind::kRandomWalk).matrix;
  Eigen::EigenSolver<Matrix> es(p, false);
  Vector pv = es.eigenvalues().real();
  CHECK(es.eigenvalues().imag().cwiseAbs().maxCoeff() < 1e-10);
  std::sort(pv.data(), pv.data() + pv.size());
  Vector reflected = (Vector::Ones(ln.size()) - ln).reverse();
  CHECK((pv - reflected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sorted_eigenvalues(laplacian(g, LaplacianKind::kSymNormalized).matrix) - ln)
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("edge list dump") {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  GraphConfig cfg;
  cfg.k_neighbors = 1;
  cfg.sigma = 1.0;
  const Graph g = build_graph(x, cfg);
  testing_support::TempDir dir("edges");
  write_edge_list(g, dir / "w.txt");
  std::istringstream in(testing_support::slurp(dir / "w.txt"));
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    int i, j;
    char c1, c2;
    double w;
    std::istringstream ls(line);
    ls >> i >> c1 >> j >> c2 >> w;
    CHECK(i < j);
    CHECK(w == doctest::Approx(std::exp(-0.5)));
    ++count;
  }
  CHECK(count == 2);
}
