#include "specalign/trainer.hpp"

#include "specalign/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace specalign {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kAnchorStream = 1,
  kReferenceStream,
  kBatchStream,
  kModelStream,
  kRansacStream,
  kEvalStream,
  kPairStream,
  kFeatureModelStream,
};

}  // namespace

void TrainConfig::validate(Eigen::Index n) const {
  graph.validate();
  if (dims < 1) throw ConfigError("K must be >= 1");
  if (anchors < dims + 1)
    throw ConfigError("need at least K+1 = " + std::to_string(dims + 1) + " anchors, got " +
                      std::to_string(anchors));
  if (batch_size < anchors) throw ConfigError("batch size must be >= anchor count");
  if (batch_size > n)
    throw SizeError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                    std::to_string(n));
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (depth < 1 || hidden_width < 1) throw ConfigError("network depth and width must be positive");
  if (connectivity_retries < 0) throw ConfigError("connectivity_retries must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (!(frame_scale >= 0.0) || !std::isfinite(frame_scale)) throw ConfigError("frame_scale must be finite and >= 0");
}

double TrainConfig::effective_frame_scale() const {
  return frame_scale > 0.0 ? frame_scale : std::sqrt(static_cast<double>(batch_size));
}

Embedding embed_nodes(const Matrix& features, const IndexSet& ids, const TrainConfig& cfg) {
  const Graph g = build_graph(features, ids, cfg.graph);
  return embed(g, cfg.dims, cfg.embedding_kind());
}

namespace {

// Draws anchors + fresh samples and embeds them, redrawing on isolated nodes.
std::pair<IndexSet, Embedding> draw_and_embed(const Dataset& ds, const Matrix& features,
                                              const IndexSet& anchors, const TrainConfig& cfg,
                                              Seed seed, long iteration) {
  for (int attempt = 0;; ++attempt) {
    IndexSet ids = draw_batch(ds, anchors, cfg.batch_size,
                              derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Matrix x(static_cast<Eigen::Index>(ids.size()), features.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = features.row(ds.row_of(ids[i]));
    try {
      Embedding e = embed_nodes(x, ids, cfg);
      return {std::move(ids), std::move(e)};
    } catch (const ConnectivityError& err) {
      if (attempt >= cfg.connectivity_retries)
        throw TrainingError(std::string(err.what()) + " (after " + std::to_string(attempt + 1) +
                                " draws)",
                            iteration);
    }
  }
}

IndexSet draw_anchor_set(const Dataset& ds, Eigen::Index count, bool stratified, Seed seed) {
  return draw_anchors(ds, count, derive_seed(seed, kAnchorStream), stratified && ds.has_labels());
}

ReferenceSet make_reference(const Dataset& ds, const Matrix& features, const IndexSet& anchors,
                            const TrainConfig& cfg) {
  auto [ids, emb] = draw_and_embed(ds, features, anchors, cfg, derive_seed(cfg.seed, kReferenceStream), 0);
  emb.coords *= cfg.effective_frame_scale();
  AnchorFrame frame{anchors, emb.rows_of(anchors)};
  frame.validate();
  return {std::move(frame), std::move(ids), std::move(emb)};
}

}  // namespace

ReferenceSet init_reference(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate(ds.size());
  const IndexSet anchors = draw_anchor_set(ds, cfg.anchors, cfg.stratified_anchors, cfg.seed);
  return make_reference(ds, ds.features(), anchors, cfg);
}

Matrix infer(const MlpParams& model, const Matrix& x) { return predict(model, x); }

TrainState train(const Dataset& ds, const TrainConfig& cfg, const Dataset* validation) {
  cfg.validate(ds.size());
  TrainState state{
      init_mlp(make_mlp_spec(static_cast<int>(ds.dim()), cfg.hidden_width, static_cast<int>(cfg.dims),
                             cfg.depth, derive_seed(cfg.seed, kModelStream))),
      init_reference(ds, cfg),
      {}};
  state.history.reserve(static_cast<std::size_t>(cfg.iterations));
  const AdamConfig adam{cfg.lr};
  const Seed batch_seed = derive_seed(cfg.seed, kBatchStream);
  const bool can_eval = validation && validation->has_labels() && cfg.eval_every > 0;
  const double flag_above =
      cfg.residual_warning * std::sqrt(state.reference.frame.ref_coords.rowwise().squaredNorm().mean());

  for (long it = 1; it <= cfg.iterations; ++it) {
    auto [ids, emb] = draw_and_embed(ds, ds.features(), state.reference.frame.anchor_ids, cfg,
                                     derive_seed(batch_seed, static_cast<std::uint64_t>(it)), it);
    std::optional<RansacConfig> ransac = cfg.ransac;
    if (ransac) ransac->seed = derive_seed(derive_seed(cfg.seed, kRansacStream), static_cast<std::uint64_t>(it));

    AlignedBatch aligned = [&] {
      try {
        return align_batch(emb, state.reference.frame, ransac);
      } catch (const TrainingError&) {
        throw;
      } catch (const Error& e) {
        throw TrainingError(std::string("alignment failed: ") + e.what(), it);
      }
    }();

    const Matrix x = ds.rows(ids);
    const ForwardCache fc = forward(state.model, x);
    const LossGrad lg = mse_loss_grad(fc.output, aligned.embedding.coords);
    if (!std::isfinite(lg.loss)) throw TrainingError("non-finite training loss", it);
    try {
      adam_step(state.model, backward(state.model, fc, lg.grad), adam);
    } catch (const TrainingError& e) {
      throw TrainingError(e.what(), it);
    }

    IterationRecord rec{it, lg.loss, aligned.fit.rmse, aligned.fit.rmse > flag_above, std::nullopt};
    if (can_eval && it % cfg.eval_every == 0) {
      rec.validation = cluster_and_score(infer(state.model, validation->features()), validation->labels(),
                                         validation->class_count(), derive_seed(cfg.seed, kEvalStream));
    }
    state.history.push_back(rec);
  }
  return state;
}

void write_history_jsonl(const std::vector<IterationRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["iter"] = r.iteration;
    j["loss"] = r.loss;
    j["align_rmse"] = r.align_rmse;
    if (r.residual_flagged) j["residual_flagged"] = true;
    if (r.validation) {
      j["nmi"] = r.validation->nmi;
      j["acc"] = r.validation->acc;
    }
    out << j.dump() << '\n';
  }
}

TrainConfig JointConfig::batch_config() const {
  TrainConfig t;
  t.dims = dims;
  t.batch_size = batch_size;
  t.anchors = anchors;
  t.graph = graph;
  t.skip_trivial = skip_trivial;
  t.ransac = ransac;
  t.frame_scale = frame_scale;
  t.seed = seed;
  return t;
}

double JointResult::final_spectral_loss(double fraction) const {
  if (history.empty()) return 0.0;
  const auto n = history.size();
  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  double sum = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) sum += history[i].spectral_loss;
  return sum / static_cast<double>(tail);
}

JointResult train_joint(const Dataset& ds, const MlpSpec& feature_spec, const MlpSpec& spectral_spec,
                        const JointConfig& cfg, const Dataset* validation) {
  if (!ds.has_labels()) throw PreconditionError("joint training needs labels (contrastive loss is supervised)");
  if (feature_spec.input_width() != ds.dim())
    throw SizeError("feature model input width does not match dataset dimension");
  if (spectral_spec.input_width() != feature_spec.output_width())
    throw SizeError("spectral model input width must equal feature model output width");
  if (spectral_spec.output_width() != cfg.dims)
    throw SizeError("spectral model output width must equal K");
  if (cfg.spectral_period < 1) throw ConfigError("spectral_period must be >= 1");
  if (cfg.feature_iterations < 0) throw ConfigError("feature iterations must be >= 0");
  if (cfg.warmup_iterations < 0 || cfg.warmup_iterations > cfg.feature_iterations)
    throw ConfigError("warmup_iterations must lie in [0, feature_iterations]");
  if (cfg.pairs_per_step < 1) throw ConfigError("pairs_per_step must be >= 1");
  const TrainConfig bcfg = cfg.batch_config();
  bcfg.validate(ds.size());

  JointResult result{init_mlp(feature_spec), init_mlp(spectral_spec), {}, {}};
  const AdamConfig feature_adam{cfg.feature_lr};
  const AdamConfig spectral_adam{cfg.spectral_lr};

  const IndexSet anchors = draw_anchor_set(ds, cfg.anchors, true, cfg.seed);
  Matrix features;
  ReferenceSet ref;
  Matrix ref_x;
  std::vector<int> ref_labels;
  // Reference set under the features at the end of warm-up; its anchor rows
  // start the frame.
  auto start_frame = [&] {
    features = predict(result.feature_model, ds.features());
    ref = make_reference(ds, features, anchors, bcfg);
    result.frame = ref.frame;
    ref_x = ds.rows(ref.node_ids);
    ref_labels = ds.labels_of(ref.node_ids);
  };
  if (cfg.warmup_iterations == 0) start_frame();

  // Class membership for balanced pair sampling.
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(ds.class_count()));
  for (Eigen::Index r = 0; r < ds.size(); ++r)
    by_class[static_cast<std::size_t>(ds.labels()[static_cast<std::size_t>(r)])].push_back(r);
  std::mt19937_64 pair_rng(derive_seed(cfg.seed, kPairStream));
  std::uniform_int_distribution<Eigen::Index> any_row(0, ds.size() - 1);
  std::bernoulli_distribution coin(0.5);

  const Seed batch_seed = derive_seed(cfg.seed, kBatchStream);
  const Seed eval_seed = derive_seed(cfg.seed, kEvalStream);
  double contrastive = 0.0;
  long spectral_step = 0;
  const auto pairs = cfg.pairs_per_step;
  Matrix xa(pairs, ds.dim()), xb(pairs, ds.dim());
  std::vector<bool> same(static_cast<std::size_t>(pairs));

  for (long it = 1; it <= cfg.feature_iterations; ++it) {
    for (Eigen::Index p = 0; p < pairs; ++p) {
      const Eigen::Index a = any_row(pair_rng);
      const int ca = ds.labels()[static_cast<std::size_t>(a)];
      const bool want_same = coin(pair_rng) || ds.class_count() < 2;
      Eigen::Index b;
      if (want_same) {
        const auto& pool = by_class[static_cast<std::size_t>(ca)];
        b = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(pair_rng)];
      } else {
        do {
          b = any_row(pair_rng);
        } while (ds.labels()[static_cast<std::size_t>(b)] == ca);
      }
      xa.row(p) = ds.features().row(a);
      xb.row(p) = ds.features().row(b);
      same[static_cast<std::size_t>(p)] = ds.labels()[static_cast<std::size_t>(b)] == ca;
    }
    const ForwardCache fa = forward(result.feature_model, xa);
    const ForwardCache fb = forward(result.feature_model, xb);
    const PairLossGrad pl = contrastive_loss_grad(fa.output, fb.output, same, cfg.margin);
    if (!std::isfinite(pl.loss)) throw TrainingError("non-finite contrastive loss", it);
    Gradients g = backward(result.feature_model, fa, pl.grad_first);
    const Gradients gb = backward(result.feature_model, fb, pl.grad_second);
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
      g.weight[l] += gb.weight[l];
      g.bias[l] += gb.bias[l];
    }
    try {
      adam_step(result.feature_model, g, feature_adam);
    } catch (const TrainingError& e) {
      throw TrainingError(e.what(), it);
    }
    contrastive = pl.loss;

    if (it == cfg.warmup_iterations) start_frame();
    if (it <= cfg.warmup_iterations || (it - cfg.warmup_iterations) % cfg.spectral_period != 0) continue;
    ++spectral_step;
    JointRecord rec;
    rec.iteration = it;
    rec.spectral_step = spectral_step;
    rec.contrastive_loss = contrastive;

    // Re-embed the reference set under the updated features and register it
    // onto the previous anchor coordinates.
    const Matrix ref_features = predict(result.feature_model, ref_x);
    Embedding updated;
    try {
      updated = embed_nodes(ref_features, ref.node_ids, bcfg);
      updated.coords *= bcfg.effective_frame_scale();
    } catch (const ConnectivityError& e) {
      throw TrainingError(std::string("reference graph after feature step: ") + e.what(), it);
    }
    Embedding aligned_ref = updated;
    if (cfg.align_feature_updates) {
      try {
        FeatureUpdateAlignment upd = align_feature_update(result.frame.ref_coords, updated, anchors);
        rec.tg_rmse = upd.fit.rmse;
        rec.tg_deviation = upd.fit.map.deviation_from_identity();
        aligned_ref = std::move(upd.embedding);
      } catch (const Error& e) {
        throw TrainingError(std::string("feature-update alignment failed: ") + e.what(), it);
      }
    }
    result.frame.ref_coords = aligned_ref.rows_of(anchors);

    // One batch-aligned spectral step under the current features.
    features = predict(result.feature_model, ds.features());
    auto [ids, emb] = draw_and_embed(ds, features, anchors, bcfg,
                                     derive_seed(batch_seed, static_cast<std::uint64_t>(spectral_step)), it);
    std::optional<RansacConfig> ransac = cfg.ransac;
    if (ransac) ransac->seed = derive_seed(derive_seed(cfg.seed, kRansacStream), static_cast<std::uint64_t>(spectral_step));
    AlignedBatch aligned = [&] {
      try {
        return align_batch(emb, result.frame, ransac);
      } catch (const Error& e) {
        throw TrainingError(std::string("batch alignment failed: ") + e.what(), it);
      }
    }();
    Matrix batch_features(static_cast<Eigen::Index>(ids.size()), features.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      batch_features.row(static_cast<Eigen::Index>(i)) = features.row(ds.row_of(ids[i]));
    const ForwardCache fc = forward(result.spectral_model, batch_features);
    const LossGrad lg = mse_loss_grad(fc.output, aligned.embedding.coords);
    if (!std::isfinite(lg.loss)) throw TrainingError("non-finite spectral loss", it);
    try {
      adam_step(result.spectral_model, backward(result.spectral_model, fc, lg.grad), spectral_adam);
    } catch (const TrainingError& e) {
      throw TrainingError(e.what(), it);
    }
    rec.spectral_loss = lg.loss;
    rec.align_rmse = aligned.fit.rmse;

    if (cfg.eval_every > 0 && spectral_step % cfg.eval_every == 0) {
      const int c = ds.class_count();
      rec.analytic = cluster_and_score(aligned_ref.coords, ref_labels, c, eval_seed);
      rec.train_output = cluster_and_score(predict(result.spectral_model, ref_features), ref_labels, c, eval_seed);
      if (validation && validation->has_labels()) {
        const Matrix vf = predict(result.feature_model, validation->features());
        rec.validation_output =
            cluster_and_score(predict(result.spectral_model, vf), validation->labels(), c, eval_seed);
      }
    }
    result.history.push_back(rec);
  }
  return result;
}

void write_joint_history_csv(const std::vector<JointRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  out << "iter,spectral_step,contrastive_loss,spectral_loss,align_rmse,tg_rmse,tg_deviation,"
         "nmi_analytic,acc_analytic,nmi_train,acc_train,nmi_val,acc_val\n";
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto scores = [&](const std::optional<ClusteringScores>& s) {
    return s ? num(s->nmi) + "," + num(s->acc) : std::string(",");
  };
  for (const auto& r : history) {
    out << r.iteration << ',' << r.spectral_step << ',' << num(r.contrastive_loss) << ','
        << num(r.spectral_loss) << ',' << num(r.align_rmse) << ',' << num(r.tg_rmse) << ','
        << num(r.tg_deviation) << ',' << scores(r.analytic) << ',' << scores(r.train_output) << ','
        << scores(r.validation_output) << '\n';
  }
}

}  // namespace specalign
