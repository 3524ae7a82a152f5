#include "specalign/net.hpp"

#include "specalign/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace specalign {

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("network needs at least an input and an output width");
  for (int w : widths)
    if (w < 1) throw ConfigError("network widths must be positive");
}

MlpSpec make_mlp_spec(int input, int hidden, int output, int depth, Seed seed) {
  if (depth < 1) throw ConfigError("network depth must be >= 1");
  MlpSpec s;
  s.seed = seed;
  s.widths.push_back(input);
  for (int i = 1; i < depth; ++i) s.widths.push_back(hidden);
  s.widths.push_back(output);
  return s;
}

namespace {

Gradients zeros_like(const std::vector<Layer>& layers) {
  Gradients g;
  for (const auto& l : layers) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

}  // namespace

MlpParams init_mlp(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    const int in = spec.widths[i], out = spec.widths[i + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in));
    Layer l{Matrix(out, in), Vector::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.weight(r, c) = dist(rng);
    p.layers.push_back(std::move(l));
  }
  p.adam.first = zeros_like(p.layers);
  p.adam.second = zeros_like(p.layers);
  return p;
}

ForwardCache forward(const MlpParams& p, const Matrix& x) {
  if (x.cols() != p.spec.input_width())
    throw SizeError("network input has " + std::to_string(x.cols()) + " columns, expected " +
                    std::to_string(p.spec.input_width()));
  ForwardCache c;
  Matrix a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Matrix z = a * p.layers[l].weight.transpose();
    z.rowwise() += p.layers[l].bias.transpose();
    c.inputs.push_back(std::move(a));
    a = (l + 1 < p.layers.size()) ? Matrix(z.cwiseMax(0.0)) : z;
    c.pre.push_back(std::move(z));
  }
  c.output = std::move(a);
  return c;
}

Matrix predict(const MlpParams& p, const Matrix& x) { return forward(p, x).output; }

Gradients backward(const MlpParams& p, const ForwardCache& cache, const Matrix& grad_output) {
  if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols())
    throw SizeError("output gradient shape does not match network output");
  Gradients g = zeros_like(p.layers);
  Matrix delta = grad_output;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    if (l + 1 < p.layers.size())
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    g.weight[l] = delta.transpose() * cache.inputs[l];
    g.bias[l] = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * p.layers[l].weight;
  }
  return g;
}

LossGrad mse_loss_grad(const Matrix& y, const Matrix& target) {
  if (y.rows() != target.rows() || y.cols() != target.cols())
    throw SizeError("mse: output and target shapes differ");
  const double m = static_cast<double>(y.rows());
  const Matrix diff = y - target;
  return {diff.squaredNorm() / m, (2.0 / m) * diff};
}

PairLossGrad contrastive_loss_grad(const Matrix& first, const Matrix& second,
                                   const std::vector<bool>& same_label, double margin) {
  if (first.rows() != second.rows() || first.cols() != second.cols())
    throw SizeError("contrastive: paired batches differ in shape");
  if (static_cast<Eigen::Index>(same_label.size()) != first.rows())
    throw SizeError("contrastive: label mask length does not match pair count");
  if (!(margin > 0.0)) throw ConfigError("contrastive margin must be positive");
  const Eigen::Index n = first.rows();
  PairLossGrad out{0.0, Matrix::Zero(first.rows(), first.cols()),
                   Matrix::Zero(first.rows(), first.cols())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = (first.row(i) - second.row(i)).transpose();
    if (same_label[static_cast<std::size_t>(i)]) {
      out.loss += diff.squaredNorm();
      out.grad_first.row(i) = 2.0 * inv_n * diff.transpose();
    } else {
      const double d = diff.norm();
      if (d < margin) {
        const double gap = margin - d;
        out.loss += gap * gap;
        if (d > 0.0) out.grad_first.row(i) = (-2.0 * gap / d) * inv_n * diff.transpose();
      }
    }
    out.grad_second.row(i) = -out.grad_first.row(i);
  }
  out.loss *= inv_n;
  return out;
}

LossGrad cross_entropy_loss_grad(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw SizeError("cross-entropy: label count does not match rows");
  const Eigen::Index n = logits.rows(), c = logits.cols();
  LossGrad out{0.0, Matrix(n, c)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw PreconditionError("cross-entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    out.loss += std::log(z) - (logits(i, y) - mx);
    out.grad.row(i) = e / z;
    out.grad(i, y) -= 1.0;
  }
  out.loss /= static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

void adam_step(MlpParams& p, const Gradients& g, const AdamConfig& cfg) {
  if (g.weight.size() != p.layers.size() || g.bias.size() != p.layers.size())
    throw SizeError("gradient layer count does not match network");
  const long next = p.adam.step + 1;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (g.weight[l].rows() != p.layers[l].weight.rows() || g.weight[l].cols() != p.layers[l].weight.cols() ||
        g.bias[l].size() != p.layers[l].bias.size())
      throw SizeError("gradient shape mismatch at layer " + std::to_string(l));
    if (!g.weight[l].allFinite() || !g.bias[l].allFinite())
      throw TrainingError("non-finite gradient at layer " + std::to_string(l), next);
  }
  p.adam.step = next;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(next));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(next));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    param.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    update(p.layers[l].weight, p.adam.first.weight[l], p.adam.second.weight[l], g.weight[l]);
    update(p.layers[l].bias, p.adam.first.bias[l], p.adam.second.bias[l], g.bias[l]);
    if (!p.layers[l].weight.allFinite() || !p.layers[l].bias.allFinite())
      throw TrainingError("non-finite parameter after update at layer " + std::to_string(l), next);
  }
}

namespace {

using Json = nlohmann::ordered_json;

template <typename M>
std::vector<double> flatten(const M& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Matrix unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw ParseError("checkpoint array has " + std::to_string(v.size()) + " values, expected " +
                     std::to_string(rows * cols));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Json gradients_json(const Gradients& g) {
  Json arr = Json::array();
  for (std::size_t l = 0; l < g.weight.size(); ++l)
    arr.push_back({{"weight", flatten(g.weight[l])}, {"bias", flatten(g.bias[l])}});
  return arr;
}

Gradients gradients_from(const Json& arr, const MlpSpec& spec) {
  Gradients g;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const auto& e = arr.at(l);
    g.weight.push_back(unflatten(e.at("weight").get<std::vector<double>>(), spec.widths[l + 1], spec.widths[l]));
    g.bias.push_back(unflatten(e.at("bias").get<std::vector<double>>(), spec.widths[l + 1], 1));
  }
  return g;
}

}  // namespace

std::string checkpoint_json(const MlpParams& p) {
  Json j;
  j["format"] = "specalign-mlp-v1";
  j["widths"] = p.spec.widths;
  j["seed"] = p.spec.seed;
  Json layers = Json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"weight", flatten(l.weight)}, {"bias", flatten(l.bias)}});
  j["layers"] = layers;
  j["adam"] = {{"step", p.adam.step},
               {"first", gradients_json(p.adam.first)},
               {"second", gradients_json(p.adam.second)}};
  return j.dump();
}

MlpParams checkpoint_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    if (j.at("format") != "specalign-mlp-v1") throw ParseError("unknown checkpoint format");
    MlpParams p;
    p.spec.widths = j.at("widths").get<std::vector<int>>();
    p.spec.seed = j.at("seed").get<Seed>();
    p.spec.validate();
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != p.spec.widths.size()) throw ParseError("checkpoint layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Layer layer;
      layer.weight = unflatten(layers[l].at("weight").get<std::vector<double>>(), p.spec.widths[l + 1],
                               p.spec.widths[l]);
      layer.bias = unflatten(layers[l].at("bias").get<std::vector<double>>(), p.spec.widths[l + 1], 1);
      p.layers.push_back(std::move(layer));
    }
    const auto& adam = j.at("adam");
    p.adam.step = adam.at("step").get<long>();
    p.adam.first = gradients_from(adam.at("first"), p.spec);
    p.adam.second = gradients_from(adam.at("second"), p.spec);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
}

void save_checkpoint(const MlpParams& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open file for writing");
  out << checkpoint_json(p) << '\n';
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open checkpoint");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace specalign
