#include "specalign/dataset.hpp"

#include "specalign/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace specalign {

Seed derive_seed(Seed parent, std::uint64_t tag) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

}  // namespace

Dataset::Dataset(Matrix features, std::optional<std::vector<int>> labels, IndexSet ids)
    : features_(std::move(features)), labels_(std::move(labels)), ids_(std::move(ids)) {
  validate();
}

Dataset::Dataset(Matrix features, std::optional<std::vector<int>> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  ids_.resize(static_cast<std::size_t>(features_.rows()));
  for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = static_cast<NodeId>(i);
  validate();
}

void Dataset::validate() {
  const Eigen::Index n = features_.rows();
  if (n < 2) throw SizeError("dataset needs at least 2 rows, got " + std::to_string(n));
  if (features_.cols() < 1) throw SizeError("dataset needs at least 1 feature column");
  if (!features_.allFinite()) throw NumericError("dataset features contain non-finite values");
  if (static_cast<Eigen::Index>(ids_.size()) != n)
    throw SizeError("dataset ids length does not match row count");

  NodeId max_id = -1;
  for (NodeId id : ids_) {
    if (id < 0) throw PreconditionError("dataset ids must be non-negative");
    max_id = std::max(max_id, id);
  }
  row_lookup_.assign(static_cast<std::size_t>(max_id + 1), -1);
  for (Eigen::Index r = 0; r < n; ++r) {
    auto& slot = row_lookup_[static_cast<std::size_t>(ids_[r])];
    if (slot != -1) throw PreconditionError("duplicate dataset id " + std::to_string(ids_[r]));
    slot = r;
  }

  if (labels_) {
    if (static_cast<Eigen::Index>(labels_->size()) != n)
      throw SizeError("label count does not match row count");
    int max_label = -1;
    for (int c : *labels_) {
      if (c < 0) throw PreconditionError("labels must be non-negative");
      max_label = std::max(max_label, c);
    }
    class_count_ = max_label + 1;
    std::vector<int> counts(static_cast<std::size_t>(class_count_), 0);
    for (int c : *labels_) ++counts[static_cast<std::size_t>(c)];
    for (int c = 0; c < class_count_; ++c)
      if (counts[static_cast<std::size_t>(c)] == 0)
        throw PreconditionError("label class " + std::to_string(c) + " is empty");
  }
}

const std::vector<int>& Dataset::labels() const {
  if (!labels_) throw PreconditionError("dataset has no labels");
  return *labels_;
}

Eigen::Index Dataset::row_of(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= row_lookup_.size()) return -1;
  return row_lookup_[static_cast<std::size_t>(id)];
}

Matrix Dataset::rows(const IndexSet& ids) const {
  Matrix out(static_cast<Eigen::Index>(ids.size()), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Eigen::Index r = row_of(ids[i]);
    if (r < 0) throw PreconditionError("unknown dataset id " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = features_.row(r);
  }
  return out;
}

std::vector<int> Dataset::labels_of(const IndexSet& ids) const {
  const auto& all = labels();
  std::vector<int> out;
  out.reserve(ids.size());
  for (NodeId id : ids) {
    const Eigen::Index r = row_of(id);
    if (r < 0) throw PreconditionError("unknown dataset id " + std::to_string(id));
    out.push_back(all[static_cast<std::size_t>(r)]);
  }
  return out;
}

Dataset Dataset::subset(const IndexSet& ids) const {
  Dataset out;
  out.features_ = rows(ids);
  out.ids_ = ids;
  if (labels_) out.labels_ = labels_of(ids);
  if (out.features_.rows() < 2) throw SizeError("subset needs at least 2 rows");
  NodeId max_id = *std::max_element(ids.begin(), ids.end());
  out.row_lookup_.assign(static_cast<std::size_t>(max_id + 1), -1);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto& slot = out.row_lookup_[static_cast<std::size_t>(ids[r])];
    if (slot != -1) throw PreconditionError("duplicate id in subset " + std::to_string(ids[r]));
    slot = static_cast<Eigen::Index>(r);
  }
  out.class_count_ = class_count_;
  return out;
}

ToyKind parse_toy_kind(std::string_view name) {
  if (name == "three_moons") return ToyKind::kThreeMoons;
  if (name == "two_circles") return ToyKind::kTwoCircles;
  if (name == "gaussian_blobs") return ToyKind::kGaussianBlobs;
  throw ConfigError("unknown toy dataset kind '" + std::string(name) +
                    "' (expected three_moons, two_circles or gaussian_blobs)");
}

std::string_view to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::kThreeMoons: return "three_moons";
    case ToyKind::kTwoCircles: return "two_circles";
    case ToyKind::kGaussianBlobs: return "gaussian_blobs";
  }
  return "?";
}

Matrix blob_centers(int blob_count) {
  Matrix c(blob_count, 2);
  for (int k = 0; k < blob_count; ++k) {
    const double a = 2.0 * std::numbers::pi * k / blob_count;
    c(k, 0) = 5.0 * std::cos(a);
    c(k, 1) = 5.0 * std::sin(a);
  }
  return c;
}

namespace {

double truncated_normal(std::mt19937_64& rng, double sd) {
  if (sd == 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, 1.0);
  double z;
  do {
    z = dist(rng);
  } while (std::abs(z) > 3.0);
  return z * sd;
}

}  // namespace

Dataset generate_toy(const ToyOptions& opts) {
  int classes = 0;
  switch (opts.kind) {
    case ToyKind::kThreeMoons: classes = 3; break;
    case ToyKind::kTwoCircles: classes = 2; break;
    case ToyKind::kGaussianBlobs: classes = opts.blob_count; break;
  }
  if (classes < 1) throw ConfigError("blob count must be positive");
  if (!std::isfinite(opts.noise) || opts.noise < 0.0)
    throw ConfigError("noise must be finite and non-negative");
  if (opts.n < classes)
    throw SizeError("toy dataset needs n >= " + std::to_string(classes) + ", got " +
                    std::to_string(opts.n));

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Matrix centers = blob_centers(classes);

  Matrix x(opts.n, 2);
  std::vector<int> labels(static_cast<std::size_t>(opts.n));
  for (Eigen::Index i = 0; i < opts.n; ++i) {
    // Balanced: class sizes differ by at most one.
    const int c = static_cast<int>(i % classes);
    labels[static_cast<std::size_t>(i)] = c;
    switch (opts.kind) {
      case ToyKind::kThreeMoons: {
        const double t = std::numbers::pi * unit(rng);
        const double sign = (c % 2 == 0) ? 1.0 : -1.0;
        x(i, 0) = kMoonSpacing * c + sign * std::cos(t);
        x(i, 1) = (c % 2 == 0 ? 0.0 : kMoonLift) + sign * std::sin(t);
        x(i, 0) += truncated_normal(rng, opts.noise);
        x(i, 1) += truncated_normal(rng, opts.noise);
        break;
      }
      case ToyKind::kTwoCircles: {
        const double t = 2.0 * std::numbers::pi * unit(rng);
        const double r =
            (c == 0 ? kOuterCircleRadius : kInnerCircleRadius) + truncated_normal(rng, opts.noise);
        x(i, 0) = r * std::cos(t);
        x(i, 1) = r * std::sin(t);
        break;
      }
      case ToyKind::kGaussianBlobs: {
        x(i, 0) = centers(c, 0) + truncated_normal(rng, opts.noise);
        x(i, 1) = centers(c, 1) + truncated_normal(rng, opts.noise);
        break;
      }
    }
  }
  return Dataset(std::move(x), std::move(labels));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int label_col = -1;
  std::size_t width = 0;
  bool first = true;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    for (auto& f : fields) f = trim(f);
    if (first) {
      first = false;
      double probe;
      if (!parse_number(fields.front(), probe)) {
        // Header line.
        for (std::size_t c = 0; c < fields.size(); ++c)
          if (fields[c] == "label") label_col = static_cast<int>(c);
        if (label_col >= 0 && label_col != static_cast<int>(fields.size()) - 1)
          throw ParseError(path.string() + ":" + std::to_string(line_no) +
                           ": label column must be last");
        width = fields.size();
        continue;
      }
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " columns, found " + std::to_string(fields.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v;
      if (!parse_number(fields[c], v))
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ":" +
                         std::to_string(c + 1) + ": non-numeric cell '" + fields[c] + "'");
      if (static_cast<int>(c) == label_col) {
        if (v != std::floor(v) || v < 0)
          throw ParseError(path.string() + ":" + std::to_string(line_no) + ":" +
                           std::to_string(c + 1) + ": label must be a non-negative integer");
        labels.push_back(static_cast<int>(v));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");

  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  std::optional<std::vector<int>> lab;
  if (label_col >= 0) lab = std::move(labels);
  return Dataset(std::move(x), std::move(lab));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  for (Eigen::Index c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << "x" << c;
  if (ds.has_labels()) out << ",label";
  out << '\n';
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim(); ++c)
      out << (c ? "," : "") << format_double(ds.features()(r, c));
    if (ds.has_labels()) out << ',' << ds.labels()[static_cast<std::size_t>(r)];
    out << '\n';
  }
  if (!out) throw Error(path.string() + ": write failed");
}

namespace {

// Partial Fisher-Yates: first k entries of `pool` become a uniform sample.
void sample_front(IndexSet& pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

}  // namespace

IndexSet draw_anchors(const Dataset& ds, Eigen::Index count, Seed seed, bool stratified) {
  if (count < 1) throw SizeError("anchor count must be positive");
  if (count > ds.size())
    throw SizeError("anchor count " + std::to_string(count) + " exceeds dataset size " +
                    std::to_string(ds.size()));
  std::mt19937_64 rng(seed);
  IndexSet out;
  if (!stratified) {
    IndexSet pool = ds.ids();
    sample_front(pool, static_cast<std::size_t>(count), rng);
    out.assign(pool.begin(), pool.begin() + count);
  } else {
    if (!ds.has_labels()) throw PreconditionError("stratified anchor draw requires labels");
    const int classes = ds.class_count();
    std::vector<IndexSet> by_class(static_cast<std::size_t>(classes));
    for (Eigen::Index r = 0; r < ds.size(); ++r)
      by_class[static_cast<std::size_t>(ds.labels()[static_cast<std::size_t>(r)])].push_back(
          ds.ids()[static_cast<std::size_t>(r)]);
    // Quotas differ by at most one; the extra slots go to randomly chosen
    // classes so that no class is systematically favoured.
    std::vector<Eigen::Index> quota(static_cast<std::size_t>(classes), count / classes);
    std::vector<int> order(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) order[static_cast<std::size_t>(c)] = c;
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index e = 0; e < count % classes; ++e) ++quota[static_cast<std::size_t>(order[e])];
    for (int c = 0; c < classes; ++c) {
      auto& pool = by_class[static_cast<std::size_t>(c)];
      const auto q = static_cast<std::size_t>(quota[static_cast<std::size_t>(c)]);
      if (q > pool.size())
        throw SizeError("class " + std::to_string(c) + " has fewer members than its anchor quota");
      sample_front(pool, q, rng);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

IndexSet draw_batch(const Dataset& ds, const IndexSet& anchors, Eigen::Index batch_size,
                    Seed seed) {
  const auto l = static_cast<Eigen::Index>(anchors.size());
  if (batch_size < l) throw SizeError("batch size smaller than anchor count");
  if (batch_size > ds.size())
    throw SizeError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                    std::to_string(ds.size()));
  std::vector<char> taken(static_cast<std::size_t>(ds.size()), 0);
  for (NodeId a : anchors) {
    const Eigen::Index r = ds.row_of(a);
    if (r < 0) throw PreconditionError("anchor " + std::to_string(a) + " is not in the dataset");
    if (taken[static_cast<std::size_t>(r)])
      throw PreconditionError("duplicate anchor " + std::to_string(a));
    taken[static_cast<std::size_t>(r)] = 1;
  }
  IndexSet pool;
  pool.reserve(static_cast<std::size_t>(ds.size() - l));
  for (Eigen::Index r = 0; r < ds.size(); ++r)
    if (!taken[static_cast<std::size_t>(r)]) pool.push_back(ds.ids()[static_cast<std::size_t>(r)]);

  std::mt19937_64 rng(seed);
  const auto fresh = static_cast<std::size_t>(batch_size - l);
  sample_front(pool, fresh, rng);
  IndexSet out = anchors;
  out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fresh));
  return out;
}

Split split_dataset(const Dataset& ds, double test_fraction, Seed seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie in [0, 1)");
  IndexSet pool = ds.ids();
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(pool.size())));
  Split s;
  s.test.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace specalign
