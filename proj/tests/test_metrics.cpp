#include "doctest.h"
#include "oracles.hpp"

#include <specalign/dataset.hpp>
#include <specalign/errors.hpp>
#include <specalign/graph.hpp>
#include <specalign/metrics.hpp>
#include <specalign/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace specalign;

namespace {

std::vector<int> random_labels(std::size_t n, int c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, c - 1);
  std::vector<int> out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

std::vector<int> relabel(const std::vector<int>& v, const std::vector<int>& perm) {
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = perm[static_cast<std::size_t>(v[i])];
  return out;
}

// Mutual information over max entropy, written directly from joint counts.
double nmi_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (auto [k, p] : pa) ha -= p * std::log(p);
  for (auto [k, p] : pb) hb -= p * std::log(p);
  for (auto [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  if (ha == 0.0 && hb == 0.0) return 1.0;
  return mi / std::max(ha, hb);
}

double inertia_of(const Matrix& x, const std::vector<int>& labels, int c) {
  Matrix centers = Matrix::Zero(c, x.cols());
  Vector counts = Vector::Zero(c);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    centers.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
    counts(labels[static_cast<std::size_t>(i)]) += 1.0;
  }
  double s = 0.0;
  for (int k = 0; k < c; ++k)
    if (counts(k) > 0) centers.row(k) /= counts(k);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

}  // namespace

TEST_CASE("grassmann distance basics") {
  std::mt19937_64 rng(1);
  const Matrix y = oracle::random_matrix(20, 3, rng);
  CHECK(grassmann_distance(y, y) == doctest::Approx(0.0).epsilon(1e-12));
  const Matrix r = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(3, 3, rng)).householderQ();
  CHECK(std::abs(grassmann_distance(y, y * r)) < 1e-10);
  CHECK(std::abs(grassmann_distance(y, y * oracle::random_matrix(3, 3, rng))) < 1e-10);

  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(6, 6, rng)).householderQ();
  CHECK(grassmann_distance(q.leftCols(3), q.rightCols(3)) == doctest::Approx(3.0));
}

TEST_CASE("grassmann distance matches the projector oracle") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = oracle::random_matrix(30, 3, rng);
    const Matrix b = oracle::random_matrix(30, 3, rng);
    const double d = grassmann_distance(a, b);
    CHECK(d == doctest::Approx(oracle::projector_distance(a, b)).epsilon(1e-9));
    CHECK(d == doctest::Approx(grassmann_distance(b, a)).epsilon(1e-12));
    CHECK(d >= 0.0);
    CHECK(d <= 3.0);
  }
}

TEST_CASE("grassmann distance errors") {
  Matrix y = Matrix::Zero(10, 2);
  y(0, 0) = 1.0;
  CHECK_THROWS_AS(grassmann_distance(y, y), DegenerateError);
  CHECK_THROWS_AS(grassmann_distance(Matrix::Identity(4, 2), Matrix::Identity(4, 3)), SizeError);
}

TEST_CASE("orthogonality defect") {
  std::mt19937_64 rng(3);
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(10, 10, rng)).householderQ();
  CHECK(orthogonality_defect(q.leftCols(4)) < 1e-20);
  CHECK(orthogonality_defect(5.0 * q.leftCols(4)) < 1e-20);
  Matrix twin(3, 2);
  twin << 1, 1, 0, 0, 0, 0;
  CHECK(orthogonality_defect(twin) == doctest::Approx(2.0));
  Matrix zero_col = Matrix::Identity(3, 2);
  zero_col.col(1).setZero();
  CHECK_THROWS_AS(orthogonality_defect(zero_col), DegenerateError);

  const Dataset ds = generate_toy({ToyKind::kGaussianBlobs, 60, 2.5, 3});
  GraphConfig cfg;
  cfg.k_neighbors = 8;
  const Embedding e = embed(build_graph(ds.features(), cfg), 3, {LaplacianKind::kSymNormalized, true, 0.0});
  CHECK(orthogonality_defect(e.coords) < 1e-8);
}

TEST_CASE("kmeans recovers separated blobs") {
  const Dataset ds = generate_toy({ToyKind::kGaussianBlobs, 300, 0.3, 4});
  const KMeansResult r = kmeans(ds.features(), {3, 10, 300, 1});
  CHECK(clustering_accuracy(ds.labels(), r.labels) == 1.0);
  CHECK(r.centers.rows() == 3);
  CHECK(r.inertia == doctest::Approx(inertia_of(ds.features(), r.labels, 3)));
}

TEST_CASE("kmeans with one cluster per point") {
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(7, 2, rng);
  const KMeansResult r = kmeans(x, {7, 3, 100, 2});
  CHECK(r.inertia == doctest::Approx(0.0));
  std::vector<int> sorted = r.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("kmeans beats random assignments") {
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(60, 2, rng);
  const KMeansResult r = kmeans(x, {3, 10, 300, 3});
  double best_random = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    auto lab = random_labels(60, 3, rng);
    best_random = std::min(best_random, inertia_of(x, lab, 3));
  }
  CHECK(r.inertia <= best_random);
}

TEST_CASE("kmeans is seeded and validates input") {
  std::mt19937_64 rng(7);
  const Matrix x = oracle::random_matrix(50, 3, rng);
  CHECK(kmeans(x, {4, 5, 100, 9}).labels == kmeans(x, {4, 5, 100, 9}).labels);
  CHECK_THROWS_AS(kmeans(x, {51, 1, 10, 1}), SizeError);
  CHECK_THROWS_AS(kmeans(x, {0, 1, 10, 1}), ConfigError);
}

TEST_CASE("kuhn_munkres small cases") {
  Matrix cost = Matrix::Ones(4, 4) - Matrix::Identity(4, 4);
  CHECK(kuhn_munkres(cost) == std::vector<int>{0, 1, 2, 3});

  std::mt19937_64 rng(8);
  const Matrix c = oracle::random_matrix(4, 4, rng);
  const auto a = kuhn_munkres(c);
  CHECK(oracle::assignment_cost(c, a) == doctest::Approx(oracle::assignment_cost(c, oracle::brute_force_assignment(c))));
  Matrix shifted = c;
  shifted.row(2).array() += 7.5;
  CHECK(kuhn_munkres(shifted) == a);

  CHECK_THROWS_AS(kuhn_munkres(Matrix::Zero(2, 3)), PreconditionError);
}

TEST_CASE("kuhn_munkres equals brute force") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(0, 5);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + t % 7;
    Matrix c = oracle::random_matrix(n, n, rng);
    // Integer costs produce ties, which the optimum must still respect.
    if (t % 2) c = c.unaryExpr([&](double) { return static_cast<double>(small(rng)); });
    const auto a = kuhn_munkres(c);
    std::vector<int> seen = a;
    std::sort(seen.begin(), seen.end());
    std::vector<int> ident(static_cast<std::size_t>(n));
    std::iota(ident.begin(), ident.end(), 0);
    CHECK(seen == ident);
    CHECK(oracle::assignment_cost(c, a) ==
          doctest::Approx(oracle::assignment_cost(c, oracle::brute_force_assignment(c))).epsilon(1e-12));
  }
}

TEST_CASE("nmi examples") {
  const std::vector<int> t{0, 0, 1, 1, 2, 2};
  CHECK(nmi(t, t) == doctest::Approx(1.0));
  CHECK(nmi(t, {2, 2, 0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(nmi({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(0.0));
  CHECK(nmi({3, 3, 3}, {1, 1, 1}) == 1.0);
  CHECK_THROWS_AS(nmi({0, 1}, {0}), SizeError);
  CHECK_THROWS_AS(nmi({}, {}), SizeError);
}

TEST_CASE("nmi matches the joint-count oracle") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_labels(40, 2 + t % 4, rng);
    const auto b = random_labels(40, 2 + t % 3, rng);
    const double v = nmi(a, b);
    CHECK(v == doctest::Approx(nmi_oracle(a, b)).epsilon(1e-12));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("accuracy examples") {
  CHECK(clustering_accuracy({0, 0, 1, 1}, {1, 1, 0, 1}) == 0.75);
  CHECK(clustering_accuracy({0, 1, 2, 2}, {2, 0, 1, 1}) == 1.0);
  CHECK_THROWS_AS(clustering_accuracy({0, 1}, {0}), SizeError);
}

TEST_CASE("accuracy equals exhaustive search") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto truth = random_labels(50, 3, rng);
    const auto pred = random_labels(50, 3, rng);
    CHECK(clustering_accuracy(truth, pred) == doctest::Approx(oracle::brute_force_accuracy(truth, pred)));
  }
  // More predicted clusters than classes pads the cost matrix.
  const auto truth = random_labels(30, 2, rng);
  const auto pred = random_labels(30, 4, rng);
  CHECK(clustering_accuracy(truth, pred) == doctest::Approx(oracle::brute_force_accuracy(truth, pred)));
}

TEST_CASE("scores are permutation invariant and bounded below") {
  std::mt19937_64 rng(12);
  const auto truth = random_labels(80, 4, rng);
  const auto pred = random_labels(80, 4, rng);
  std::vector<int> perm{2, 0, 3, 1};
  CHECK(nmi(truth, relabel(pred, perm)) == doctest::Approx(nmi(truth, pred)));
  CHECK(nmi(relabel(truth, perm), pred) == doctest::Approx(nmi(truth, pred)));
  CHECK(clustering_accuracy(truth, relabel(pred, perm)) == doctest::Approx(clustering_accuracy(truth, pred)));

  std::vector<int> counts(4, 0);
  for (int c : truth) ++counts[static_cast<std::size_t>(c)];
  const double majority = *std::max_element(counts.begin(), counts.end()) / 80.0;
  CHECK(clustering_accuracy(truth, std::vector<int>(80, 0)) >= majority - 1e-12);
}

TEST_CASE("linear probe") {
  std::mt19937_64 rng(13);
  Matrix train(200, 2), test(100, 2);
  std::vector<int> ytr(200), yte(100);
  std::normal_distribution<double> d(0.0, 0.3);
  auto fill = [&](Matrix& x, std::vector<int>& y) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      y[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
      x(i, 0) = (i % 2 ? 2.0 : -2.0) + d(rng);
      x(i, 1) = d(rng);
    }
  };
  fill(train, ytr);
  fill(test, yte);
  CHECK(linear_probe_accuracy(train, ytr, test, yte) == 1.0);

  double mean = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<int> shuffled_tr = ytr, shuffled_te = yte;
    std::shuffle(shuffled_tr.begin(), shuffled_tr.end(), rng);
    std::shuffle(shuffled_te.begin(), shuffled_te.end(), rng);
    mean += linear_probe_accuracy(train, shuffled_tr, test, shuffled_te, {500, 0.05, true, static_cast<Seed>(t)});
  }
  mean /= 10.0;
  CHECK(std::abs(mean - 0.5) <= 0.1);
  CHECK_THROWS_AS(linear_probe_accuracy(train, ytr, Matrix::Zero(3, 3), {0, 1, 0}), SizeError);
}

TEST_CASE("probe on the analytic moons embedding") {
  const Dataset ds = generate_toy({ToyKind::kThreeMoons, 900, 0.05, 14});
  GraphConfig cfg;
  cfg.k_neighbors = 30;
  const Embedding e = embed(build_graph(ds.features(), cfg), 2, {LaplacianKind::kSymNormalized, true, 0.0});
  const Split s = split_dataset(ds, 0.3, 1);
  Matrix tr(static_cast<Eigen::Index>(s.train.size()), 2), te(static_cast<Eigen::Index>(s.test.size()), 2);
  for (std::size_t i = 0; i < s.train.size(); ++i) tr.row(static_cast<Eigen::Index>(i)) = e.coords.row(s.train[i]);
  for (std::size_t i = 0; i < s.test.size(); ++i) te.row(static_cast<Eigen::Index>(i)) = e.coords.row(s.test[i]);
  CHECK(linear_probe_accuracy(tr, ds.labels_of(s.train), te, ds.labels_of(s.test)) >= 0.98);
}

TEST_CASE("report JSON and table") {
  MetricsReport r;
  r.grassmann = 0.125;
  r.nmi = 1.0;
  r.dims = 3;
  r.count = 10;
  r.seed = 4;
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(back.grassmann == r.grassmann);
  CHECK(!back.acc.has_value());
  CHECK(back.dims == 3);
  CHECK(back.to_json() == r.to_json());
  const std::string table = r.to_table();
  CHECK(table.find("grassmann") < table.find("orth_defect"));
  CHECK(table.find("nmi") < table.find("acc"));
  CHECK_THROWS_AS(MetricsReport::from_json("["), ParseError);
}

TEST_CASE("cluster_and_score on separated blobs") {
  const Dataset ds = generate_toy({ToyKind::kGaussianBlobs, 150, 0.3, 15});
  const ClusteringScores s = cluster_and_score(ds.features(), ds.labels(), 3, 1);
  CHECK(s.nmi == doctest::Approx(1.0));
  CHECK(s.acc == 1.0);
}
