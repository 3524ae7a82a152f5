#include "specalign/metrics.hpp"

#include "specalign/errors.hpp"
#include "specalign/net.hpp"

#include <json.hpp>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace specalign {

namespace {

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::ColPivHouseholderQR<Matrix> qr(y);
  qr.setThreshold(1e-12);
  if (qr.rank() < y.cols())
    throw DegenerateError("subspace basis is rank deficient (rank " + std::to_string(qr.rank()) +
                          " < " + std::to_string(y.cols()) + ")");
  // Column pivoting only permutes the basis, the span of Q's leading columns
  // equals the span of y.
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

}  // namespace

double grassmann_distance(const Matrix& y1, const Matrix& y2) {
  if (y1.rows() != y2.rows() || y1.cols() != y2.cols())
    throw SizeError("grassmann distance needs equally shaped inputs");
  if (y1.rows() < y1.cols()) throw SizeError("grassmann distance needs n >= K");
  const Matrix q1 = orthonormal_basis(y1);
  const Matrix q2 = orthonormal_basis(y2);
  const Vector s = Eigen::JacobiSVD<Matrix>(q1.transpose() * q2).singularValues();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double c = std::clamp(s(i), 0.0, 1.0);
    sum += c * c;
  }
  return std::max(0.0, static_cast<double>(y1.cols()) - sum);
}

double orthogonality_defect(const Matrix& y) {
  if (y.rows() < y.cols()) throw SizeError("orthogonality defect needs n >= K");
  const Vector norms = y.colwise().norm().transpose();
  for (Eigen::Index c = 0; c < norms.size(); ++c)
    if (!(norms(c) > 0.0)) throw DegenerateError("orthogonality defect of a zero column");
  const Matrix scaled = y * norms.cwiseInverse().asDiagonal();
  return (scaled.transpose() * scaled - Matrix::Identity(y.cols(), y.cols())).squaredNorm();
}

namespace {

KMeansResult lloyd(const Matrix& x, int k, int max_iterations, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  // k-means++ seeding
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = x.row(first(rng));
  Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r < 0.0) break;
      }
      while (d2(pick) == 0.0 && pick > 0) --pick;
    } else {
      pick = first(rng);
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  Vector best_d(n);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      best_d(i) = best;
      if (labels[static_cast<std::size_t>(i)] != arg) {
        labels[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Eigen::Index far;
      best_d.maxCoeff(&far);
      centers.row(c) = x.row(far);
      labels[static_cast<std::size_t>(far)] = c;
      best_d(far) = 0.0;
      reseeded = true;
    }
    if (!changed && !reseeded && it > 0) break;
  }

  KMeansResult r{std::move(labels), std::move(centers), 0.0};
  for (Eigen::Index i = 0; i < n; ++i)
    r.inertia += (x.row(i) - r.centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return r;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, const KMeansConfig& cfg) {
  if (cfg.clusters < 1) throw ConfigError("k-means needs at least one cluster");
  if (points.rows() < cfg.clusters)
    throw SizeError("k-means with " + std::to_string(cfg.clusters) + " clusters on " +
                    std::to_string(points.rows()) + " points");
  if (cfg.restarts < 1) throw ConfigError("k-means restarts must be >= 1");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    KMeansResult cand = lloyd(points, cfg.clusters, cfg.max_iterations, rng);
    if (cand.inertia < best.inertia) best = std::move(cand);
  }
  return best;
}

std::vector<int> kuhn_munkres(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw PreconditionError("assignment cost matrix must be square");
  if (!cost.allFinite()) throw PreconditionError("assignment cost matrix must be finite");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  // Shortest augmenting path with row/column potentials, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

namespace {

void check_label_vectors(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw SizeError("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  if (a.empty()) throw SizeError("label vectors are empty");
  for (int x : a)
    if (x < 0) throw PreconditionError("labels must be non-negative");
  for (int x : b)
    if (x < 0) throw PreconditionError("labels must be non-negative");
}

int label_count(const std::vector<int>& v) { return *std::max_element(v.begin(), v.end()) + 1; }

}  // namespace

double nmi(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_label_vectors(truth, pred);
  const int ca = label_count(truth), cb = label_count(pred);
  const double n = static_cast<double>(truth.size());
  Matrix joint = Matrix::Zero(ca, cb);
  for (std::size_t i = 0; i < truth.size(); ++i) joint(truth[i], pred[i]) += 1.0;
  const Vector pa = joint.rowwise().sum() / n;
  const Vector pb = joint.colwise().sum().transpose() / n;
  auto entropy = [](const Vector& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (int a = 0; a < ca; ++a)
    for (int b = 0; b < cb; ++b) {
      const double pab = joint(a, b) / n;
      if (pab > 0.0) mi += pab * std::log(pab / (pa(a) * pb(b)));
    }
  return std::clamp(mi / std::max(ha, hb), 0.0, 1.0);
}

double clustering_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_label_vectors(truth, pred);
  const int c = std::max(label_count(truth), label_count(pred));
  Matrix counts = Matrix::Zero(c, c);  // rows: predicted cluster, cols: true class
  for (std::size_t i = 0; i < truth.size(); ++i) counts(pred[i], truth[i]) += 1.0;
  const std::vector<int> map = kuhn_munkres(-counts);
  double matched = 0.0;
  for (int r = 0; r < c; ++r) matched += counts(r, map[static_cast<std::size_t>(r)]);
  return matched / static_cast<double>(truth.size());
}

double linear_probe_accuracy(const Matrix& train_emb, const std::vector<int>& train_labels,
                             const Matrix& test_emb, const std::vector<int>& test_labels,
                             const ProbeConfig& cfg) {
  if (train_emb.cols() != test_emb.cols()) throw SizeError("probe: train/test dimensions differ");
  if (static_cast<Eigen::Index>(train_labels.size()) != train_emb.rows() ||
      static_cast<Eigen::Index>(test_labels.size()) != test_emb.rows())
    throw SizeError("probe: label counts do not match rows");
  if (train_labels.empty() || test_labels.empty()) throw SizeError("probe: empty split");
  const int classes = std::max(label_count(train_labels), label_count(test_labels));

  Matrix train = train_emb, test = test_emb;
  if (cfg.standardize) {
    const Eigen::RowVectorXd mean = train.colwise().mean();
    Eigen::RowVectorXd sd =
        ((train.rowwise() - mean).cwiseAbs2().colwise().sum() / static_cast<double>(train.rows()))
            .cwiseSqrt();
    for (Eigen::Index c = 0; c < sd.size(); ++c)
      if (!(sd(c) > 0.0)) sd(c) = 1.0;
    train = (train.rowwise() - mean).array().rowwise() / sd.array();
    test = (test.rowwise() - mean).array().rowwise() / sd.array();
  }

  MlpParams probe = init_mlp(MlpSpec{{static_cast<int>(train.cols()), classes}, cfg.seed});
  const AdamConfig adam{cfg.lr};
  for (int s = 0; s < cfg.steps; ++s) {
    const ForwardCache fc = forward(probe, train);
    const LossGrad lg = cross_entropy_loss_grad(fc.output, train_labels);
    adam_step(probe, backward(probe, fc, lg.grad), adam);
  }
  const Matrix logits = predict(probe, test);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    if (arg == test_labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

ClusteringScores cluster_and_score(const Matrix& coords, const std::vector<int>& labels, int clusters,
                                   Seed seed, int restarts) {
  const KMeansResult km = kmeans(coords, KMeansConfig{clusters, restarts, 300, seed});
  return {nmi(labels, km.labels), clustering_accuracy(labels, km.labels)};
}

namespace {

using Json = nlohmann::ordered_json;

void put(Json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::optional<double> get(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string MetricsReport::to_json() const {
  Json j;
  put(j, "grassmann", grassmann);
  put(j, "orth_defect", orth_defect);
  put(j, "nmi", nmi);
  put(j, "acc", acc);
  put(j, "probe_accuracy", probe_accuracy);
  put(j, "anchor_rmse", anchor_rmse);
  j["dims"] = dims;
  j["count"] = count;
  j["seed"] = seed;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    MetricsReport r;
    r.grassmann = get(j, "grassmann");
    r.orth_defect = get(j, "orth_defect");
    r.nmi = get(j, "nmi");
    r.acc = get(j, "acc");
    r.probe_accuracy = get(j, "probe_accuracy");
    r.anchor_rmse = get(j, "anchor_rmse");
    r.dims = j.value("dims", Eigen::Index{0});
    r.count = j.value("count", Eigen::Index{0});
    r.seed = j.value("seed", Seed{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics report JSON: ") + e.what());
  }
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  auto row = [&](const char* name, const std::optional<double>& v) {
    char buf[96];
    if (v)
      std::snprintf(buf, sizeof buf, "%-16s %12.6f\n", name, *v);
    else
      std::snprintf(buf, sizeof buf, "%-16s %12s\n", name, "-");
    out << buf;
  };
  row("grassmann", grassmann);
  row("orth_defect", orth_defect);
  row("nmi", nmi);
  row("acc", acc);
  row("probe_accuracy", probe_accuracy);
  row("anchor_rmse", anchor_rmse);
  out << "dims " << dims << ", count " << count << ", seed " << seed << '\n';
  return out.str();
}

}  // namespace specalign
