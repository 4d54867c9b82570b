#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "emde/error.hpp"
#include "emde/random.hpp"
#include "emde/sketch.hpp"

namespace emde {

enum class Activation : std::uint32_t { leaky_relu = 0, identity = 1 };

// Fully connected network: widths[0] inputs, widths.back() logits laid out as
// n_sketches rows of sketch_dim buckets. Hidden layers use `activation`, the
// last layer is linear.
template <typename Scalar>
struct BasicSketchModel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Eigen::Index> widths;
  std::vector<Matrix> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<Vector> biases;
  int n_sketches = 1;
  Activation activation = Activation::leaky_relu;
  Scalar leaky_slope = Scalar(0.01);
  std::uint64_t seed = 0;

  std::size_t n_layers() const { return weights.size(); }
  Eigen::Index input_dim() const { return widths.front(); }
  Eigen::Index output_dim() const { return widths.back(); }
  Eigen::Index sketch_dim() const { return output_dim() / n_sketches; }

  static BasicSketchModel zeros(std::vector<Eigen::Index> widths, int n_sketches) {
    BasicSketchModel m;
    m.widths = std::move(widths);
    m.n_sketches = n_sketches;
    m.validate_shape();
    for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
      m.weights.push_back(Matrix::Zero(m.widths[l + 1], m.widths[l]));
      m.biases.push_back(Vector::Zero(m.widths[l + 1]));
    }
    return m;
  }

  // Kaiming-uniform weights, bound sqrt(6 / fan_in); zero biases.
  static BasicSketchModel initialize(std::vector<Eigen::Index> widths, int n_sketches, std::uint64_t seed,
                                     Activation activation = Activation::leaky_relu,
                                     Scalar leaky_slope = Scalar(0.01)) {
    auto m = zeros(std::move(widths), n_sketches);
    m.seed = seed;
    m.activation = activation;
    m.leaky_slope = leaky_slope;
    Rng rng(seed);
    for (auto& w : m.weights) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    return m;
  }

  template <typename Other>
  BasicSketchModel<Other> cast() const {
    BasicSketchModel<Other> out;
    out.widths = widths;
    out.n_sketches = n_sketches;
    out.activation = activation;
    out.leaky_slope = static_cast<Other>(leaky_slope);
    out.seed = seed;
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
    return out;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  void validate_shape() const {
    if (widths.size() < 2) throw ContractError("a model needs at least input and output widths");
    for (auto w : widths)
      if (w < 1) throw ContractError("layer widths must be positive");
    if (n_sketches < 1 || output_dim() % n_sketches != 0)
      throw ContractError("output width must be a multiple of n_sketches");
  }
};

using SketchModel = BasicSketchModel<double>;

// [input_dim, hidden x n_hidden, output_dim]
inline std::vector<Eigen::Index> layer_widths(Eigen::Index input_dim, Eigen::Index hidden, int n_hidden,
                                              Eigen::Index output_dim) {
  std::vector<Eigen::Index> w{input_dim};
  for (int i = 0; i < n_hidden; ++i) w.push_back(hidden);
  w.push_back(output_dim);
  return w;
}

// Columns are samples.
template <typename Scalar>
struct ForwardTrace {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  Matrix input;             // may be empty when the trace starts at layer 0 pre-activations
  std::vector<Matrix> pre;  // pre[l] = W[l] act[l-1] + b[l]
  std::vector<Matrix> act;  // act[l] = f(pre[l]); the last entry is the logits

  const Matrix& logits() const { return act.back(); }
};

namespace detail {

template <typename Scalar, typename Derived>
auto activate(const BasicSketchModel<Scalar>& m, const Eigen::MatrixBase<Derived>& pre) {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  if (m.activation == Activation::identity) return Matrix(pre);
  return Matrix(pre.cwiseMax(m.leaky_slope * pre));
}

// Derivative of the activation; at 0 the positive branch is taken.
template <typename Scalar, typename Derived>
auto activation_slope(const BasicSketchModel<Scalar>& m, const Eigen::MatrixBase<Derived>& pre) {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  if (m.activation == Activation::identity) return Matrix(Matrix::Ones(pre.rows(), pre.cols()));
  return Matrix((pre.array() >= Scalar(0)).select(Matrix::Ones(pre.rows(), pre.cols()),
                                                   Matrix::Constant(pre.rows(), pre.cols(), m.leaky_slope)));
}

}  // namespace detail

// Runs layers 1.. given the first layer's pre-activations (W0 x + b0 per column).
template <typename Scalar>
ForwardTrace<Scalar> forward_from_first(const BasicSketchModel<Scalar>& model,
                                        typename BasicSketchModel<Scalar>::Matrix first_pre) {
  ForwardTrace<Scalar> t;
  const auto L = model.n_layers();
  t.pre.reserve(L);
  t.act.reserve(L);
  t.pre.push_back(std::move(first_pre));
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) t.pre.push_back((model.weights[l] * t.act[l - 1]).colwise() + model.biases[l]);
    if (l + 1 < L)
      t.act.push_back(detail::activate(model, t.pre[l]));
    else
      t.act.push_back(t.pre[l]);
  }
  return t;
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward(const BasicSketchModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != model.input_dim())
    throw ContractError("input length " + std::to_string(x.rows()) + " != model input " +
                        std::to_string(model.input_dim()));
  typename BasicSketchModel<Scalar>::Matrix first = (model.weights[0] * x).colwise() + model.biases[0];
  auto t = forward_from_first(model, std::move(first));
  t.input = x;
  return t;
}

// Per-column, per-row softmax over blocks of sketch_dim logits.
template <typename Derived>
auto row_softmax(const Eigen::MatrixBase<Derived>& logits, int n_sketches) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p(logits.rows(), logits.cols());
  const auto d = logits.rows() / n_sketches;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (int k = 0; k < n_sketches; ++k) {
      const auto z = logits.col(c).segment(k * d, d);
      auto out = p.col(c).segment(k * d, d);
      out = (z.array() - z.maxCoeff()).exp().matrix();
      out /= out.sum();
    }
  }
  return p;
}

template <typename Scalar>
struct ForwardResult {
  typename BasicSketchModel<Scalar>::Vector logits;
  SketchT<Scalar> probs;  // n_sketches x sketch_dim
  ForwardTrace<Scalar> trace;
};

// Single input. Raises NumericError on non-finite activations.
template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward_one(const BasicSketchModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  ForwardResult<Scalar> r;
  r.trace = forward(model, x);
  for (std::size_t l = 0; l < r.trace.act.size(); ++l)
    if (!r.trace.act[l].allFinite())
      throw NumericError("non-finite activation in layer " + std::to_string(l));
  r.logits = r.trace.logits().col(0);
  const auto p = row_softmax(r.logits, model.n_sketches);
  r.probs = Eigen::Map<const SketchT<Scalar>>(p.data(), model.n_sketches, model.sketch_dim());
  return r;
}

template <typename Scalar>
struct Gradients {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  using Vector = typename BasicSketchModel<Scalar>::Vector;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;
};

// Gradient of <out_grad, logits> with respect to the first layer's
// pre-activations, one column per sample.
template <typename Scalar>
typename BasicSketchModel<Scalar>::Matrix first_layer_delta(const BasicSketchModel<Scalar>& model,
                                                            const ForwardTrace<Scalar>& trace,
                                                            const typename BasicSketchModel<Scalar>::Matrix& out_grad) {
  if (out_grad.rows() != model.output_dim() || out_grad.cols() != trace.logits().cols())
    throw ContractError("output gradient shape does not match the trace");
  typename BasicSketchModel<Scalar>::Matrix delta = out_grad;
  for (std::size_t l = model.n_layers() - 1; l > 0; --l)
    delta = (model.weights[l].transpose() * delta).cwiseProduct(detail::activation_slope(model, trace.pre[l - 1]));
  return delta;
}

// Exact reverse-mode gradients of <out_grad, logits>. Parameter gradients are
// summed over the batch columns.
template <typename Scalar>
Gradients<Scalar> backward(const BasicSketchModel<Scalar>& model, const ForwardTrace<Scalar>& trace,
                           const typename BasicSketchModel<Scalar>::Matrix& out_grad, bool with_params = true) {
  if (out_grad.rows() != model.output_dim() || out_grad.cols() != trace.logits().cols())
    throw ContractError("output gradient shape does not match the trace");
  if (trace.input.size() == 0) throw ContractError("trace has no stored input");
  const auto L = model.n_layers();
  Gradients<Scalar> g;
  if (with_params) {
    g.weights.resize(L);
    g.biases.resize(L);
  }
  typename BasicSketchModel<Scalar>::Matrix delta = out_grad;
  for (std::size_t l = L; l-- > 0;) {
    if (with_params) {
      const auto& prev = l == 0 ? trace.input : trace.act[l - 1];
      g.weights[l].noalias() = delta * prev.transpose();
      g.biases[l] = delta.rowwise().sum();
    }
    if (l == 0) {
      g.input.noalias() = model.weights[0].transpose() * delta;
    } else {
      delta = (model.weights[l].transpose() * delta).cwiseProduct(detail::activation_slope(model, trace.pre[l - 1]));
    }
  }
  return g;
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;  // mean over samples
  Gradients<Scalar> grads;
  std::size_t skipped_rows = 0;  // all-zero target rows
};

namespace detail {

// Sum over samples of (1/n_sketches) sum_k CE(target row k normalized, softmax row k).
// Fills `logit_grad` (unscaled by batch size) when non-null.
template <typename Scalar>
double cross_entropy_sum(const typename BasicSketchModel<Scalar>::Matrix& logits,
                         const typename BasicSketchModel<Scalar>::Matrix& targets, int n_sketches,
                         typename BasicSketchModel<Scalar>::Matrix* logit_grad, std::size_t& skipped) {
  const auto d = logits.rows() / n_sketches;
  if (logit_grad) logit_grad->setZero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (int k = 0; k < n_sketches; ++k) {
      const auto t = targets.col(c).segment(k * d, d);
      const Scalar mass = t.sum();
      if (!(mass > Scalar(0))) {
        ++skipped;
        continue;
      }
      const auto z = logits.col(c).segment(k * d, d);
      const Scalar zmax = z.maxCoeff();
      const Scalar lse = zmax + std::log((z.array() - zmax).exp().sum());
      const auto log_p = (z.array() - lse);
      const auto q = t.array() / mass;
      total += static_cast<double>(-(q * log_p).sum()) / n_sketches;
      if (logit_grad)
        logit_grad->col(c).segment(k * d, d) = ((log_p.exp() - q) / Scalar(n_sketches)).matrix();
    }
  }
  return total;
}

}  // namespace detail

// Mean per-sample loss and its exact gradients. Targets are raw count
// sketches, one flattened column per sample.
template <typename Scalar, typename DX, typename DT>
LossResult<Scalar> loss_and_grad(const BasicSketchModel<Scalar>& model, const Eigen::MatrixBase<DX>& x,
                                 const Eigen::MatrixBase<DT>& targets) {
  if (targets.rows() != model.output_dim() || targets.cols() != x.cols())
    throw ContractError("target shape does not match the model output");
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  const auto trace = forward(model, x);
  Matrix logit_grad;
  LossResult<Scalar> r;
  const Matrix t = targets;
  const double sum = detail::cross_entropy_sum<Scalar>(trace.logits(), t, model.n_sketches, &logit_grad, r.skipped_rows);
  const auto n = static_cast<Scalar>(x.cols());
  r.loss = sum / static_cast<double>(x.cols());
  logit_grad /= n;
  r.grads = backward(model, trace, logit_grad);
  return r;
}

template <typename Scalar, typename DX, typename DT>
double mean_loss(const BasicSketchModel<Scalar>& model, const Eigen::MatrixBase<DX>& x,
                 const Eigen::MatrixBase<DT>& targets, Eigen::Index chunk = 256) {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  double total = 0.0;
  std::size_t skipped = 0;
  for (Eigen::Index c0 = 0; c0 < x.cols(); c0 += chunk) {
    const auto n = std::min(chunk, x.cols() - c0);
    const auto trace = forward(model, x.middleCols(c0, n));
    const Matrix t = targets.middleCols(c0, n);
    total += detail::cross_entropy_sum<Scalar>(trace.logits(), t, model.n_sketches, nullptr, skipped);
  }
  return x.cols() ? total / static_cast<double>(x.cols()) : 0.0;
}

// Adam with bias correction.
template <typename Scalar>
class Adam {
 public:
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  using Vector = typename BasicSketchModel<Scalar>::Vector;

  Adam(const BasicSketchModel<Scalar>& model, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& w : model.weights) {
      mw_.push_back(Matrix::Zero(w.rows(), w.cols()));
      vw_.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : model.biases) {
      mb_.push_back(Vector::Zero(b.size()));
      vb_.push_back(Vector::Zero(b.size()));
    }
  }

  void step(BasicSketchModel<Scalar>& model, const Gradients<Scalar>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
      update(model.weights[l], g.weights[l], mw_[l], vw_[l], c1, c2);
      update(model.biases[l], g.biases[l], mb_[l], vb_[l], c1, c2);
    }
  }

 private:
  template <typename P, typename G, typename M>
  void update(P& p, const G& g, M& m, M& v, double c1, double c2) {
    const auto b1 = static_cast<Scalar>(beta1_);
    const auto b2 = static_cast<Scalar>(beta2_);
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    const auto step = static_cast<Scalar>(lr_);
    p.array() -= step * (m.array() / static_cast<Scalar>(c1)) /
                 ((v.array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(eps_));
  }

  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
};

enum class Precision { float64, float32 };

struct TrainConfig {
  int epochs = 10;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Precision precision = Precision::float64;
};

// One column per example.
struct TrainingSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return inputs.cols(); }
};

struct TrainResult {
  SketchModel model;
  std::vector<double> loss_curve;  // [0] before training, [e] after epoch e
};

// Called after every epoch with the epoch number, its loss and the current
// model (already cast to float64).
using EpochCallback = std::function<void(int, double, const SketchModel&)>;

namespace detail {

template <typename Scalar>
TrainResult train_impl(const SketchModel& init, const TrainingSet& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  using Matrix = typename BasicSketchModel<Scalar>::Matrix;
  auto model = init.template cast<Scalar>();
  const Matrix inputs = data.inputs.template cast<Scalar>();
  const Matrix targets = data.targets.template cast<Scalar>();
  TrainResult result;
  result.loss_curve.push_back(mean_loss(model, inputs, targets));
  Adam<Scalar> adam(model, cfg.lr);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  const auto batch = static_cast<Eigen::Index>(std::max(1, cfg.batch));
  Matrix xb, tb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    for (Eigen::Index start = 0; start < data.size(); start += batch) {
      const auto n = std::min(batch, data.size() - start);
      xb.resize(inputs.rows(), n);
      tb.resize(targets.rows(), n);
      for (Eigen::Index c = 0; c < n; ++c) {
        xb.col(c) = inputs.col(order[static_cast<std::size_t>(start + c)]);
        tb.col(c) = targets.col(order[static_cast<std::size_t>(start + c)]);
      }
      const auto step = loss_and_grad(model, xb, tb);
      adam.step(model, step.grads);
    }
    const double loss = mean_loss(model, inputs, targets);
    if (!std::isfinite(loss) || !model.all_finite())
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    result.loss_curve.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss, model.template cast<double>());
  }
  result.model = model.template cast<double>();
  return result;
}

}  // namespace detail

// Deterministic given cfg.seed: epoch e visits examples in the order of a
// Fisher-Yates shuffle seeded with derive_seed(seed, e).
inline TrainResult train(const SketchModel& model, const TrainingSet& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  if (data.size() == 0) throw ContractError("empty training set");
  if (data.inputs.rows() != model.input_dim() || data.targets.rows() != model.output_dim() ||
      data.targets.cols() != data.inputs.cols())
    throw ContractError("training set shape does not match the model");
  if (cfg.precision == Precision::float32) return detail::train_impl<float>(model, data, cfg, on_epoch);
  return detail::train_impl<double>(model, data, cfg, on_epoch);
}

// Checkpoint layout (little endian):
//   char[8] "EMDENET1"; u32 version (=1); u32 width_count; u64 widths[];
//   u32 n_sketches; u32 activation; f64 leaky_slope; u64 seed;
//   per layer: f64 weights (row-major), f64 biases.
void save_model(const std::filesystem::path& path, const SketchModel& model);
SketchModel load_model(const std::filesystem::path& path);

}  // namespace emde
