#include "experiment.hpp"

#include <specalign/errors.hpp>
#include <specalign/graph.hpp>
#include <specalign/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <type_traits>

namespace specalign::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json default_config() {
  return json::parse(R"({
    "seed": 1,
    "out": "out",
    "dataset": {
      "csv": "",
      "kind": "three_moons",
      "n": 9000,
      "noise": 0.05,
      "blob_count": 3,
      "test_fraction": 0.2
    },
    "graph": {
      "k_neighbors": 15,
      "sigma": null,
      "laplacian": "sym_normalized",
      "self_loop_epsilon": null
    },
    "train": {
      "dims": 0,
      "batch_size": 256,
      "anchors": 30,
      "iterations": 1000,
      "lr": 0.001,
      "skip_trivial": false,
      "diffusion_time": 0.0,
      "stratified_anchors": true,
      "hidden_width": 256,
      "depth": 5,
      "eval_every": 0,
      "frame_scale": 0.0,
      "residual_warning": 0.25,
      "connectivity_retries": 5,
      "ransac": {"enabled": false, "iterations": 200, "inlier_tol": null, "min_inliers": null}
    },
    "analytic": {
      "nodes": 2000,
      "cap": 4096
    },
    "metrics": {
      "kmeans_restarts": 10,
      "heldout_nodes": 1000,
      "heldout_k_neighbors": 0,
      "probe": true,
      "probe_steps": 500,
      "probe_lr": 0.05
    },
    "joint": {
      "dims": 2,
      "batch_size": 256,
      "anchors": 30,
      "feature_iterations": 1500,
      "warmup_iterations": 200,
      "spectral_period": 10,
      "margin": 1.0,
      "feature_lr": 0.001,
      "spectral_lr": 0.003,
      "pairs_per_step": 256,
      "feature_dim": 8,
      "feature_hidden": 64,
      "feature_depth": 3,
      "spectral_hidden": 64,
      "spectral_depth": 3,
      "k_neighbors": 100,
      "laplacian": "unnormalized",
      "skip_trivial": true,
      "eval_every": 5,
      "frame_scale": 0.0
    }
  })");
}

namespace {

bool compatible(const json& base, const json& value) {
  if (base.is_null()) return !value.is_object() && !value.is_array();
  if (value.is_null()) return false;
  if (base.is_number() && value.is_number()) return true;
  return base.type() == value.type();
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("malformed config key '" + dotted + "'");
    p += "/" + part;
  }
  return json::json_pointer(p);
}

template <class T>
T get(const json& cfg, const std::string& dotted) {
  const json& v = cfg.at(pointer(dotted));
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(dotted + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(dotted + " must be an integer");
    if (std::is_unsigned_v<T> && v.get<long long>() < 0) throw ConfigError(dotted + " must be non-negative");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(dotted + " must be a number");
  } else {
    if (!v.is_string()) throw ConfigError(dotted + " must be a string");
  }
  return v.get<T>();
}

template <class T>
std::optional<T> get_optional(const json& cfg, const std::string& dotted) {
  if (cfg.at(pointer(dotted)).is_null()) return std::nullopt;
  return get<T>(cfg, dotted);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void prepare_out(const Experiment& ex, const std::string& command) {
  fs::create_directories(ex.out);
  write_file(ex.out / (command + ".config.json"), ex.raw.dump(2) + "\n");
}

json scores_json(const std::optional<ClusteringScores>& s) {
  if (!s) return nullptr;
  return {{"nmi", s->nmi}, {"acc", s->acc}};
}

}  // namespace

void merge_config(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config " + (prefix.empty() ? std::string("root") : prefix) +
                                            " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, dotted);
      continue;
    }
    // Keys that default to null stay nullable.
    const bool nullable = default_config().contains(pointer(dotted)) && default_config().at(pointer(dotted)).is_null();
    if (!(value.is_null() && nullable) && !compatible(nullable ? json() : slot, value))
      throw ConfigError("config key '" + dotted + "' has the wrong type");
    slot = value;
  }
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  // Build the nested patch and merge it so overrides get the same checks as files.
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const std::string& p) { return p.empty(); }))
    throw ConfigError("malformed config key '" + key + "'");
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(cfg, patch);
}

json load_config(const fs::path& path) {
  json patch = json::parse(read_file(path), nullptr, false);
  if (patch.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  json cfg = default_config();
  merge_config(cfg, patch);
  return cfg;
}

Experiment make_experiment(json cfg) {
  Experiment ex;
  ex.out = get<std::string>(cfg, "out");
  if (ex.out.empty()) throw ConfigError("out must not be empty");
  ex.seed = get<Seed>(cfg, "seed");
  // Touch every typed field once so type errors surface at load.
  parse_toy_kind(get<std::string>(cfg, "dataset.kind"));
  parse_laplacian_kind(get<std::string>(cfg, "graph.laplacian"));
  parse_laplacian_kind(get<std::string>(cfg, "joint.laplacian"));
  const double tf = get<double>(cfg, "dataset.test_fraction");
  if (!(tf > 0.0 && tf < 1.0)) throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  if (get<long>(cfg, "dataset.n") < 1) throw ConfigError("dataset.n must be positive");
  if (get<long>(cfg, "analytic.nodes") < 0) throw ConfigError("analytic.nodes must be >= 0");
  if (get<long>(cfg, "metrics.heldout_nodes") < 0) throw ConfigError("metrics.heldout_nodes must be >= 0");
  if (get<int>(cfg, "metrics.kmeans_restarts") < 1) throw ConfigError("metrics.kmeans_restarts must be >= 1");
  ex.raw = std::move(cfg);
  return ex;
}

Dataset generate_dataset(const Experiment& ex) {
  ToyOptions o;
  o.kind = parse_toy_kind(get<std::string>(ex.raw, "dataset.kind"));
  o.n = get<long>(ex.raw, "dataset.n");
  o.noise = get<double>(ex.raw, "dataset.noise");
  o.blob_count = get<int>(ex.raw, "dataset.blob_count");
  o.seed = ex.seed;
  return generate_toy(o);
}

Split make_split(const Experiment& ex, const Dataset& ds) {
  return split_dataset(ds, get<double>(ex.raw, "dataset.test_fraction"), derive_seed(ex.seed, 1));
}

namespace {

std::string split_manifest(const Split& s, double fraction, Seed seed) {
  json j = {{"test_fraction", fraction}, {"seed", seed}, {"train", s.train}, {"test", s.test}};
  return j.dump() + "\n";
}

Split read_split(const fs::path& path, const Dataset& ds) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("train") || !j.contains("test"))
    throw ParseError(path.string() + ": malformed split manifest");
  Split s{j["train"].get<IndexSet>(), j["test"].get<IndexSet>()};
  for (const IndexSet* part : {&s.train, &s.test})
    for (NodeId id : *part)
      if (ds.row_of(id) < 0) throw ParseError(path.string() + ": id " + std::to_string(id) + " not in dataset");
  if (s.train.size() + s.test.size() != static_cast<std::size_t>(ds.size()))
    throw ParseError(path.string() + ": split does not cover the dataset");
  return s;
}

}  // namespace

LoadedData load_data(const Experiment& ex) {
  fs::path csv = get<std::string>(ex.raw, "dataset.csv");
  if (csv.empty() && fs::exists(ex.out / "dataset.csv")) csv = ex.out / "dataset.csv";
  LoadedData d;
  if (csv.empty()) {
    d.all = generate_dataset(ex);
    d.split = make_split(ex, d.all);
  } else {
    d.all = load_csv(csv);
    const fs::path manifest = csv.parent_path() / "split.json";
    d.split = fs::exists(manifest) ? read_split(manifest, d.all) : make_split(ex, d.all);
  }
  d.train = d.all.subset(d.split.train);
  d.test = d.all.subset(d.split.test);
  return d;
}

TrainConfig train_config(const Experiment& ex, const Dataset& ds, bool validate) {
  const json& c = ex.raw;
  TrainConfig t;
  t.dims = get<long>(c, "train.dims");
  if (t.dims == 0) {
    if (!ds.has_labels()) throw ConfigError("train.dims = 0 needs a labeled dataset");
    t.dims = ds.class_count();
  }
  t.batch_size = get<long>(c, "train.batch_size");
  t.anchors = get<long>(c, "train.anchors");
  t.iterations = get<long>(c, "train.iterations");
  t.lr = get<double>(c, "train.lr");
  t.graph.k_neighbors = get<int>(c, "graph.k_neighbors");
  t.graph.sigma = get_optional<double>(c, "graph.sigma");
  t.graph.laplacian_kind = parse_laplacian_kind(get<std::string>(c, "graph.laplacian"));
  t.graph.self_loop_epsilon = get_optional<double>(c, "graph.self_loop_epsilon");
  t.skip_trivial = get<bool>(c, "train.skip_trivial");
  t.diffusion_time = get<double>(c, "train.diffusion_time");
  t.stratified_anchors = get<bool>(c, "train.stratified_anchors");
  t.hidden_width = get<int>(c, "train.hidden_width");
  t.depth = get<int>(c, "train.depth");
  t.eval_every = get<long>(c, "train.eval_every");
  t.frame_scale = get<double>(c, "train.frame_scale");
  t.residual_warning = get<double>(c, "train.residual_warning");
  t.connectivity_retries = get<int>(c, "train.connectivity_retries");
  if (get<bool>(c, "train.ransac.enabled")) {
    RansacConfig r;
    r.iterations = get<int>(c, "train.ransac.iterations");
    r.inlier_tol = get_optional<double>(c, "train.ransac.inlier_tol");
    r.min_inliers = get_optional<long>(c, "train.ransac.min_inliers");
    r.seed = derive_seed(ex.seed, 2);
    t.ransac = r;
  }
  t.seed = ex.seed;
  if (validate) t.validate(ds.size());
  return t;
}

JointConfig joint_config(const Experiment& ex) {
  const json& c = ex.raw;
  JointConfig j;
  j.dims = get<long>(c, "joint.dims");
  j.batch_size = get<long>(c, "joint.batch_size");
  j.anchors = get<long>(c, "joint.anchors");
  j.feature_iterations = get<long>(c, "joint.feature_iterations");
  j.warmup_iterations = get<long>(c, "joint.warmup_iterations");
  j.spectral_period = get<long>(c, "joint.spectral_period");
  j.margin = get<double>(c, "joint.margin");
  j.feature_lr = get<double>(c, "joint.feature_lr");
  j.spectral_lr = get<double>(c, "joint.spectral_lr");
  j.pairs_per_step = get<long>(c, "joint.pairs_per_step");
  j.graph.k_neighbors = get<int>(c, "joint.k_neighbors");
  j.graph.laplacian_kind = parse_laplacian_kind(get<std::string>(c, "joint.laplacian"));
  j.skip_trivial = get<bool>(c, "joint.skip_trivial");
  j.eval_every = get<long>(c, "joint.eval_every");
  j.frame_scale = get<double>(c, "joint.frame_scale");
  j.seed = ex.seed;
  return j;
}

MlpSpec feature_spec(const Experiment& ex, Eigen::Index input_dim) {
  return make_mlp_spec(static_cast<int>(input_dim), get<int>(ex.raw, "joint.feature_hidden"),
                       get<int>(ex.raw, "joint.feature_dim"), get<int>(ex.raw, "joint.feature_depth"),
                       derive_seed(ex.seed, 3));
}

MlpSpec spectral_spec(const Experiment& ex) {
  return make_mlp_spec(get<int>(ex.raw, "joint.feature_dim"), get<int>(ex.raw, "joint.spectral_hidden"),
                       get<int>(ex.raw, "joint.dims"), get<int>(ex.raw, "joint.spectral_depth"),
                       derive_seed(ex.seed, 4));
}

MetricsReport evaluate_model(const Experiment& ex, const MlpParams& model, const Dataset& all,
                             const Dataset& train, const Dataset& part, const AnchorFrame* frame) {
  const TrainConfig tc = train_config(ex, all);
  const Eigen::Index k = model.spec.widths.back();
  if (model.spec.widths.front() != all.dim())
    throw ConfigError("checkpoint expects " + std::to_string(model.spec.widths.front()) + " input features, dataset has " +
                      std::to_string(all.dim()));
  if (k != tc.dims)
    throw ConfigError("checkpoint has K = " + std::to_string(k) + " but the config asks for K = " +
                      std::to_string(tc.dims));

  MetricsReport r;
  r.dims = k;
  r.count = part.size();
  r.seed = ex.seed;
  const Matrix out = infer(model, part.features());
  r.orth_defect = orthogonality_defect(out);
  const int restarts = get<int>(ex.raw, "metrics.kmeans_restarts");
  if (part.has_labels()) {
    const ClusteringScores s = cluster_and_score(out, part.labels(), all.class_count(), ex.seed, restarts);
    r.nmi = s.nmi;
    r.acc = s.acc;
    if (get<bool>(ex.raw, "metrics.probe") && train.has_labels()) {
      ProbeConfig pc;
      pc.steps = get<int>(ex.raw, "metrics.probe_steps");
      pc.lr = get<double>(ex.raw, "metrics.probe_lr");
      pc.seed = ex.seed;
      r.probe_accuracy = linear_probe_accuracy(infer(model, train.features()), train.labels(), out, part.labels(), pc);
    }
  }

  // The held-out graph is denser than a training batch, so k is scaled by
  // the node ratio unless set explicitly.
  const Eigen::Index held_n = std::min<Eigen::Index>(get<long>(ex.raw, "metrics.heldout_nodes"), part.size());
  if (held_n > tc.dims + 1) {
    const IndexSet held(part.ids().begin(), part.ids().begin() + held_n);
    TrainConfig eval = tc;
    const int hk = get<int>(ex.raw, "metrics.heldout_k_neighbors");
    eval.graph.k_neighbors =
        hk > 0 ? hk
               : static_cast<int>(std::lround(tc.graph.k_neighbors * static_cast<double>(held_n) /
                                              static_cast<double>(tc.batch_size)));
    eval.graph.k_neighbors = std::clamp<int>(eval.graph.k_neighbors, 1, static_cast<int>(held_n) - 1);
    const Matrix x = all.rows(held);
    r.grassmann = grassmann_distance(infer(model, x), embed_nodes(x, held, eval).coords);
  }

  if (frame) {
    const Matrix pred = infer(model, all.rows(frame->anchor_ids));
    // Reported in reference-embedding units so it does not depend on frame_scale.
    if (pred.cols() == frame->ref_coords.cols())
      r.anchor_rmse = std::sqrt((pred - frame->ref_coords).rowwise().squaredNorm().mean()) / tc.effective_frame_scale();
  }
  return r;
}

std::string frame_json(const AnchorFrame& frame) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < frame.ref_coords.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < frame.ref_coords.cols(); ++j) row.push_back(frame.ref_coords(i, j));
    rows.push_back(row);
  }
  return json{{"anchor_ids", frame.anchor_ids}, {"ref_coords", rows}}.dump() + "\n";
}

AnchorFrame frame_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("anchor_ids") || !j.contains("ref_coords"))
    throw ParseError("malformed frame file");
  AnchorFrame f;
  try {
    f.anchor_ids = j["anchor_ids"].get<IndexSet>();
    const auto rows = j["ref_coords"].get<std::vector<std::vector<double>>>();
    const Eigen::Index k = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    f.ref_coords.resize(static_cast<Eigen::Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != k) throw ParseError("ragged frame coordinates");
      for (Eigen::Index c = 0; c < k; ++c) f.ref_coords(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed frame file: ") + e.what());
  }
  f.validate();
  return f;
}

// ----------------------------------------------------------------- commands

int cmd_generate(const Experiment& ex) {
  const Dataset ds = generate_dataset(ex);
  const Split split = make_split(ex, ds);
  prepare_out(ex, "generate");
  save_csv(ds, ex.out / "dataset.csv");
  write_file(ex.out / "split.json", split_manifest(split, get<double>(ex.raw, "dataset.test_fraction"), ex.seed));
  std::cout << "generated " << get<std::string>(ex.raw, "dataset.kind") << ": " << ds.size() << " points, "
            << ds.dim() << " features, " << ds.class_count() << " classes; train " << split.train.size() << ", test "
            << split.test.size() << "\n";
  return 0;
}

int cmd_train(const Experiment& ex) {
  const LoadedData d = load_data(ex);
  const TrainConfig cfg = train_config(ex, d.all);
  prepare_out(ex, "train");
  const TrainState state = train(d.train, cfg, d.test.has_labels() ? &d.test : nullptr);
  save_checkpoint(state.model, ex.out / "checkpoint.json");
  write_file(ex.out / "frame.json", frame_json(state.reference.frame));
  write_history_jsonl(state.history, ex.out / "history.jsonl");
  const MetricsReport report = evaluate_model(ex, state.model, d.all, d.train, d.test, &state.reference.frame);
  write_file(ex.out / "report.json", report.to_json() + "\n");
  long flagged = 0;
  for (const auto& rec : state.history) flagged += rec.residual_flagged ? 1 : 0;
  std::cout << "trained " << state.history.size() << " iterations";
  if (flagged > 0) std::cout << " (" << flagged << " with a large alignment residual)";
  std::cout << "\n" << report.to_table();
  return 0;
}

int cmd_eval(const Experiment& ex, const fs::path& checkpoint, const std::string& split) {
  const LoadedData d = load_data(ex);
  const fs::path ckpt = checkpoint.empty() ? ex.out / "checkpoint.json" : checkpoint;
  const MlpParams model = load_checkpoint(ckpt);
  std::optional<AnchorFrame> frame;
  if (const fs::path fp = ckpt.parent_path() / "frame.json"; fs::exists(fp)) frame = frame_from_json(read_file(fp));
  if (split != "test" && split != "train" && split != "all")
    throw ConfigError("--split must be train, test or all");
  const Dataset& part = split == "test" ? d.test : (split == "train" ? d.train : d.all);
  const MetricsReport report = evaluate_model(ex, model, d.all, d.train, part, frame ? &*frame : nullptr);
  fs::create_directories(ex.out);
  write_file(ex.out / ("eval_" + split + ".json"), report.to_json() + "\n");
  std::cout << report.to_table();
  return 0;
}

int cmd_analytic(const Experiment& ex) {
  const LoadedData d = load_data(ex);
  const TrainConfig tc = train_config(ex, d.all, false);
  tc.graph.validate();
  const Eigen::Index nodes = get<long>(ex.raw, "analytic.nodes");
  const IndexSet ids = (nodes == 0 || nodes >= d.all.size())
                           ? d.all.ids()
                           : draw_anchors(d.all, nodes, derive_seed(ex.seed, 5), false);
  const Graph g = build_graph(d.all.rows(ids), ids, tc.graph);
  const Embedding e = embed(g, tc.dims, tc.embedding_kind(), get<long>(ex.raw, "analytic.cap"));

  MetricsReport r;
  r.dims = e.dim();
  r.count = e.count();
  r.seed = ex.seed;
  r.orth_defect = orthogonality_defect(e.coords);
  if (d.all.has_labels()) {
    const ClusteringScores s = cluster_and_score(e.coords, d.all.labels_of(ids), d.all.class_count(), ex.seed,
                                                 get<int>(ex.raw, "metrics.kmeans_restarts"));
    r.nmi = s.nmi;
    r.acc = s.acc;
  }
  prepare_out(ex, "analytic");
  write_embedding_csv(e, ex.out / "embedding.csv");
  write_embedding_sidecar(e, ex.out / "embedding.json");
  write_file(ex.out / "analytic_report.json", r.to_json() + "\n");
  std::cout << "analytic embedding of " << e.count() << " nodes, sigma " << g.sigma << "\n" << r.to_table();
  return 0;
}

int cmd_feature_change(const Experiment& ex, bool ablate) {
  const LoadedData d = load_data(ex);
  JointConfig cfg = joint_config(ex);
  const MlpSpec fs_spec = feature_spec(ex, d.all.dim());
  const MlpSpec ss_spec = spectral_spec(ex);
  prepare_out(ex, "feature-change");

  const JointResult r = train_joint(d.train, fs_spec, ss_spec, cfg, &d.test);
  write_joint_history_csv(r.history, ex.out / "joint_history.csv");
  save_checkpoint(r.feature_model, ex.out / "feature_checkpoint.json");
  save_checkpoint(r.spectral_model, ex.out / "spectral_checkpoint.json");

  json summary;
  summary["spectral_steps"] = r.history.size();
  summary["final_spectral_loss"] = r.history.empty() ? json() : json(r.final_spectral_loss());
  if (!r.history.empty()) {
    const JointRecord& last = r.history.back();
    summary["final_analytic"] = scores_json(last.analytic);
    summary["final_train_output"] = scores_json(last.train_output);
    summary["final_validation_output"] = scores_json(last.validation_output);
  }
  std::cout << "joint training: " << r.history.size() << " spectral steps, final spectral loss "
            << summary["final_spectral_loss"].dump() << "\n";

  if (ablate) {
    cfg.align_feature_updates = false;
    const JointResult ab = train_joint(d.train, fs_spec, ss_spec, cfg, &d.test);
    write_joint_history_csv(ab.history, ex.out / "joint_history_ablated.csv");
    summary["ablated_final_spectral_loss"] = ab.history.empty() ? json() : json(ab.final_spectral_loss());
    std::cout << "ablation (no feature-update alignment): final spectral loss "
              << summary["ablated_final_spectral_loss"].dump() << "\n";
  }
  write_file(ex.out / "joint_summary.json", summary.dump(2) + "\n");
  return 0;
}

}  // namespace specalign::cli
