// Model = feature map plus a growing list of per-task classifier heads.
// The feature map is a single affine layer with an optional tanh, or the
// identity; heads are linear layers over the feature output. Analytic
// gradients of the weighted cross-entropy objective are implemented here
// and checked against finite differences in the test suite.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacle/linalg.hpp"
#include "tacle/rng.hpp"

namespace tacle {

enum class FeatureMapKind { identity, linear, linear_tanh };

struct FeatureMap {
  FeatureMapKind kind = FeatureMapKind::identity;
  bool trainable = false;
  std::size_t input_dim = 0;
  DenseMatrix weight;  // (output_dim, input_dim); empty for identity
  Vector bias;

  std::size_t output_dim() const { return kind == FeatureMapKind::identity ? input_dim : weight.rows; }

  bool has_parameters() const { return kind != FeatureMapKind::identity; }

  Vector apply(std::span<const double> x) const {
    if (x.size() != input_dim) throw std::invalid_argument("FeatureMap::apply: input dimension mismatch");
    if (kind == FeatureMapKind::identity) return Vector(x.begin(), x.end());
    Vector h = matvec(weight, x);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += bias[i];
    if (kind == FeatureMapKind::linear_tanh) {
      for (double& v : h) v = std::tanh(v);
    }
    return h;
  }
};

struct ClassifierHead {
  DenseMatrix weight;  // (num_classes, feature_dim)
  Vector bias;

  std::size_t num_classes() const { return weight.rows; }
};

// Half-open range of head indices [begin, end).
struct HeadRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t count() const { return end - begin; }
};

struct Model {
  FeatureMap feature_map;
  std::vector<ClassifierHead> heads;

  static Model make(std::size_t input_dim, FeatureMapKind kind = FeatureMapKind::identity,
                    bool trainable = false, std::size_t feature_dim = 0, Rng* init_rng = nullptr) {
    if (input_dim == 0) throw std::invalid_argument("Model::make: input_dim must be positive");
    Model m;
    m.feature_map.kind = kind;
    m.feature_map.trainable = trainable;
    m.feature_map.input_dim = input_dim;
    if (kind != FeatureMapKind::identity) {
      const std::size_t out = feature_dim == 0 ? input_dim : feature_dim;
      m.feature_map.weight = DenseMatrix(out, input_dim);
      m.feature_map.bias = Vector(out, 0.0);
      if (out == input_dim && init_rng == nullptr) {
        m.feature_map.weight = DenseMatrix::identity(out);
      } else if (init_rng != nullptr) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
        for (double& w : m.feature_map.weight.data) w = init_rng->normal(0.0, scale);
      }
    }
    return m;
  }

  std::size_t input_dim() const { return feature_map.input_dim; }
  std::size_t feature_dim() const { return feature_map.output_dim(); }
  std::size_t num_heads() const { return heads.size(); }

  // New heads start at zero: predictions over a fresh task are uniform.
  void add_head(std::size_t num_classes) {
    if (num_classes == 0) throw std::invalid_argument("Model::add_head: num_classes must be positive");
    heads.push_back(ClassifierHead{DenseMatrix(num_classes, feature_dim()), Vector(num_classes, 0.0)});
  }

  HeadRange all_heads() const { return {0, heads.size()}; }
  HeadRange head_range(std::size_t k) const { return {k, k + 1}; }
  HeadRange current_head() const {
    if (heads.empty()) throw std::invalid_argument("Model::current_head: no heads registered");
    return {heads.size() - 1, heads.size()};
  }

  std::size_t total_classes() const {
    std::size_t n = 0;
    for (const auto& h : heads) n += h.num_classes();
    return n;
  }

  // Logit offset of the first class of head k within the full logit vector.
  std::size_t class_offset(std::size_t k) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < k; ++i) off += heads[i].num_classes();
    return off;
  }

  std::size_t range_classes(HeadRange r) const {
    check_range(r);
    std::size_t n = 0;
    for (std::size_t k = r.begin; k < r.end; ++k) n += heads[k].num_classes();
    return n;
  }

  Vector features(std::span<const double> x) const { return feature_map.apply(x); }

  // Concatenated head outputs over [r.begin, r.end), applied to feature h.
  Vector logits_from_features(std::span<const double> h, HeadRange r) const {
    check_range(r);
    if (h.size() != feature_dim()) throw std::invalid_argument("Model::logits_from_features: feature dimension mismatch");
    Vector z;
    z.reserve(range_classes(r));
    for (std::size_t k = r.begin; k < r.end; ++k) {
      Vector hz = matvec(heads[k].weight, h);
      for (std::size_t c = 0; c < hz.size(); ++c) hz[c] += heads[k].bias[c];
      z.insert(z.end(), hz.begin(), hz.end());
    }
    return z;
  }

  void check_range(HeadRange r) const {
    if (r.begin >= r.end || r.end > heads.size()) throw std::invalid_argument("Model: invalid head range");
  }
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct ForwardResult {
  Vector features;
  Vector logits;                   // all registered heads
  ProbabilityVector probabilities;  // softmax over the requested head range
};

inline ForwardResult forward(const Model& m, std::span<const double> x, HeadRange active) {
  if (m.heads.empty()) throw std::invalid_argument("forward: model has no classifier heads");
  m.check_range(active);
  ForwardResult out;
  out.features = m.features(x);
  out.logits = m.logits_from_features(out.features, m.all_heads());
  const std::size_t off = m.class_offset(active.begin);
  const std::size_t len = m.range_classes(active);
  out.probabilities = softmax(std::span<const double>(out.logits.data() + off, len));
  return out;
}

inline ForwardResult forward(const Model& m, std::span<const double> x) {
  return forward(m, x, m.all_heads());
}

// ---------------------------------------------------------------------------
// Weighted cross-entropy: loss and analytic gradients
// ---------------------------------------------------------------------------

// One training example. `target` is local to the head range the batch is
// evaluated against (0 .. range_classes-1).
struct WeightedExample {
  Vector x;
  std::size_t target = 0;
  double weight = 1.0;
};

namespace detail {

inline void check_batch(const Model& m, std::span<const WeightedExample> batch, HeadRange r,
                        bool inputs_are_features) {
  if (batch.empty()) throw std::invalid_argument("weighted cross-entropy: empty batch");
  m.check_range(r);
  const std::size_t classes = m.range_classes(r);
  const std::size_t dim = inputs_are_features ? m.feature_dim() : m.input_dim();
  for (const auto& e : batch) {
    if (e.x.size() != dim) throw std::invalid_argument("weighted cross-entropy: input dimension mismatch");
    if (e.target >= classes) throw std::invalid_argument("weighted cross-entropy: target class out of range");
    if (e.weight < 0.0) throw std::invalid_argument("weighted cross-entropy: negative weight");
  }
}

}  // namespace detail

// Mean over the batch of w_i * H(softmax(z_i), y_i), with z over the range.
inline double weighted_ce_loss(const Model& m, std::span<const WeightedExample> batch, HeadRange r,
                               bool inputs_are_features = false) {
  detail::check_batch(m, batch, r, inputs_are_features);
  double acc = 0.0;
  for (const auto& e : batch) {
    const Vector h = inputs_are_features ? e.x : m.features(e.x);
    const Vector z = m.logits_from_features(h, r);
    acc += e.weight * (logsumexp(z) - z[e.target]);
  }
  return acc / static_cast<double>(batch.size());
}

struct Gradients {
  DenseMatrix feature_weight;  // empty when the feature path carries no gradient
  Vector feature_bias;
  std::vector<DenseMatrix> head_weight;  // indexed like model.heads; empty outside the range
  std::vector<Vector> head_bias;

  void scale(double s) {
    for (double& v : feature_weight.data) v *= s;
    for (double& v : feature_bias) v *= s;
    for (auto& w : head_weight)
      for (double& v : w.data) v *= s;
    for (auto& b : head_bias)
      for (double& v : b) v *= s;
  }

  void add(const Gradients& o) {
    if (!o.feature_weight.empty()) {
      if (feature_weight.empty()) {
        feature_weight = o.feature_weight;
        feature_bias = o.feature_bias;
      } else {
        axpy(1.0, o.feature_weight.data, feature_weight.data);
        axpy(1.0, o.feature_bias, feature_bias);
      }
    }
    if (head_weight.size() < o.head_weight.size()) {
      head_weight.resize(o.head_weight.size());
      head_bias.resize(o.head_bias.size());
    }
    for (std::size_t k = 0; k < o.head_weight.size(); ++k) {
      if (o.head_weight[k].empty()) continue;
      if (head_weight[k].empty()) {
        head_weight[k] = o.head_weight[k];
        head_bias[k] = o.head_bias[k];
      } else {
        axpy(1.0, o.head_weight[k].data, head_weight[k].data);
        axpy(1.0, o.head_bias[k], head_bias[k]);
      }
    }
  }
};

// Analytic gradients of weighted_ce_loss with respect to every trainable
// parameter reached by the batch: the heads in the range, plus the feature
// layer when it is trainable and the inputs pass through it.
inline Gradients backward_weighted_ce(const Model& m, std::span<const WeightedExample> batch, HeadRange r,
                                      bool inputs_are_features = false) {
  detail::check_batch(m, batch, r, inputs_are_features);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const bool feature_grad = !inputs_are_features && m.feature_map.trainable && m.feature_map.has_parameters();

  Gradients g;
  g.head_weight.resize(m.heads.size());
  g.head_bias.resize(m.heads.size());
  for (std::size_t k = r.begin; k < r.end; ++k) {
    g.head_weight[k] = DenseMatrix(m.heads[k].num_classes(), m.feature_dim());
    g.head_bias[k] = Vector(m.heads[k].num_classes(), 0.0);
  }
  if (feature_grad) {
    g.feature_weight = DenseMatrix(m.feature_map.weight.rows, m.feature_map.weight.cols);
    g.feature_bias = Vector(m.feature_map.bias.size(), 0.0);
  }

  for (const auto& e : batch) {
    const Vector h = inputs_are_features ? e.x : m.features(e.x);
    const Vector z = m.logits_from_features(h, r);
    ProbabilityVector p = softmax(z);

    // dL/dz = (w/N) * (p - onehot(y))
    Vector dz = std::move(p.values);
    const double s = e.weight * inv_n;
    for (double& v : dz) v *= s;
    dz[e.target] -= s;

    Vector dh(feature_grad ? h.size() : 0, 0.0);
    std::size_t off = 0;
    for (std::size_t k = r.begin; k < r.end; ++k) {
      const std::size_t nc = m.heads[k].num_classes();
      const std::span<const double> dzk(dz.data() + off, nc);
      outer_add(g.head_weight[k], dzk, h);
      axpy(1.0, dzk, g.head_bias[k]);
      if (feature_grad) matTvec_add(m.heads[k].weight, dzk, dh);
      off += nc;
    }

    if (feature_grad) {
      // h = act(W x + b); tanh' = 1 - h^2
      if (m.feature_map.kind == FeatureMapKind::linear_tanh) {
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - h[i] * h[i];
      }
      outer_add(g.feature_weight, dh, e.x);
      axpy(1.0, dh, g.feature_bias);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// SGD with momentum and decoupled weight decay
// ---------------------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.005;
  double momentum = 0.9;
  double weight_decay = 5e-3;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("SgdConfig: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("SgdConfig: momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("SgdConfig: weight_decay must be non-negative");
  }
};

// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
inline void sgd_step(Vector& param, const Vector& grad, Vector& velocity, const SgdConfig& cfg) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= cfg.learning_rate * velocity[i];
  }
}

inline void sgd_step(DenseMatrix& param, const DenseMatrix& grad, DenseMatrix& velocity, const SgdConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) throw std::invalid_argument("sgd_step: shape mismatch");
  sgd_step(param.data, grad.data, velocity.data, cfg);
}

// Momentum state mirroring one model's parameters. Weight decay is applied
// to weights only; biases use a zero-decay copy of the config.
class SgdOptimizer {
 public:
  SgdOptimizer(const Model& m, SgdConfig cfg) : cfg_(cfg) {
    if (m.feature_map.has_parameters() && m.feature_map.trainable) {
      v_feature_weight_ = DenseMatrix(m.feature_map.weight.rows, m.feature_map.weight.cols);
      v_feature_bias_ = Vector(m.feature_map.bias.size(), 0.0);
    }
    v_head_weight_.reserve(m.heads.size());
    v_head_bias_.reserve(m.heads.size());
    for (const auto& h : m.heads) {
      v_head_weight_.emplace_back(h.weight.rows, h.weight.cols);
      v_head_bias_.emplace_back(h.bias.size(), 0.0);
    }
  }

  double learning_rate() const { return cfg_.learning_rate; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

  void step(Model& m, const Gradients& g) {
    SgdConfig bias_cfg = cfg_;
    bias_cfg.weight_decay = 0.0;
    if (!g.feature_weight.empty()) {
      if (v_feature_weight_.empty()) throw std::invalid_argument("SgdOptimizer: feature gradient for a frozen feature map");
      sgd_step(m.feature_map.weight, g.feature_weight, v_feature_weight_, cfg_);
      sgd_step(m.feature_map.bias, g.feature_bias, v_feature_bias_, bias_cfg);
    }
    if (g.head_weight.size() > m.heads.size()) throw std::invalid_argument("SgdOptimizer: gradient head count exceeds model");
    for (std::size_t k = 0; k < g.head_weight.size(); ++k) {
      if (g.head_weight[k].empty()) continue;
      sgd_step(m.heads[k].weight, g.head_weight[k], v_head_weight_[k], cfg_);
      sgd_step(m.heads[k].bias, g.head_bias[k], v_head_bias_[k], bias_cfg);
    }
  }

 private:
  SgdConfig cfg_;
  DenseMatrix v_feature_weight_;
  Vector v_feature_bias_;
  std::vector<DenseMatrix> v_head_weight_;
  std::vector<Vector> v_head_bias_;
};

}  // namespace tacle
