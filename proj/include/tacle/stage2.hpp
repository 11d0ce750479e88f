// Stage 2: classifier alignment. After stage 1 the labeled set is expanded
// with confident pseudo-labeled samples, per-class Gaussian statistics are
// estimated in feature space and stored in a bank that survives across tasks
// (raw samples do not), and all classifier heads are fine-tuned on features
// drawn from those Gaussians.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tacle/linalg.hpp"
#include "tacle/model.hpp"
#include "tacle/rng.hpp"
#include "tacle/stream.hpp"
#include "tacle/threshold.hpp"

namespace tacle {

// A feature vector with its assigned class: the true label for labeled data,
// the pseudo-label for confident unlabeled data.
struct LabeledFeature {
  Vector features;
  int class_id = -1;
};

struct ClassStats {
  int class_id = -1;
  Vector mu;
  DenseMatrix sigma;  // symmetric, PSD after regularization
  int support = 0;
};

class StatsBank {
 public:
  bool contains(int class_id) const { return stats_.count(class_id) != 0; }
  std::size_t size() const { return stats_.size(); }
  bool empty() const { return stats_.empty(); }

  // Old-task entries are immutable once stored; re-inserting is an error.
  void insert(ClassStats stats) {
    const int id = stats.class_id;
    if (!stats_.emplace(id, std::move(stats)).second)
      throw std::invalid_argument("StatsBank: class " + std::to_string(id) + " already stored");
  }

  const ClassStats& at(int class_id) const {
    const auto it = stats_.find(class_id);
    if (it == stats_.end()) throw std::invalid_argument("StatsBank: class " + std::to_string(class_id) + " not stored");
    return it->second;
  }

  std::vector<int> classes() const {
    std::vector<int> ids;
    ids.reserve(stats_.size());
    for (const auto& [id, s] : stats_) ids.push_back(id);
    return ids;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [id, s] : stats_) {
      arr.push_back({{"class_id", id},
                     {"mu", s.mu},
                     {"sigma", s.sigma.data},
                     {"dim", s.mu.size()},
                     {"support", s.support}});
    }
    return arr;
  }

  static StatsBank from_json(const nlohmann::json& arr) {
    StatsBank bank;
    for (const auto& e : arr) {
      ClassStats s;
      s.class_id = e.at("class_id").get<int>();
      s.mu = e.at("mu").get<Vector>();
      const auto dim = e.at("dim").get<std::size_t>();
      s.sigma = DenseMatrix(dim, dim);
      s.sigma.data = e.at("sigma").get<Vector>();
      if (s.mu.size() != dim || s.sigma.data.size() != dim * dim)
        throw std::invalid_argument("StatsBank::from_json: inconsistent dimensions for class " +
                                    std::to_string(s.class_id));
      s.support = e.at("support").get<int>();
      bank.insert(std::move(s));
    }
    return bank;
  }

 private:
  std::map<int, ClassStats> stats_;
};

struct Stage2Config {
  int epochs = 5;
  int samples_per_class_per_epoch = 64;
  double cov_regularizer = 1e-4;
  bool diagonal_covariance = false;  // drop off-diagonal terms (cheap mode for large d)
  SgdConfig sgd;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("Stage2Config: epochs must be >= 0");
    if (samples_per_class_per_epoch < 1)
      throw std::invalid_argument("Stage2Config: samples_per_class_per_epoch must be >= 1");
    if (!(cov_regularizer >= 0.0)) throw std::invalid_argument("Stage2Config: cov_regularizer must be >= 0");
    sgd.validate();
  }
};

// ---------------------------------------------------------------------------
// Expanded label set and statistics estimation
// ---------------------------------------------------------------------------

inline std::vector<LabeledFeature> labeled_features(const TaskData& task, const Model& model) {
  std::vector<LabeledFeature> out;
  out.reserve(task.labeled.size());
  for (const auto& s : task.labeled) out.push_back({model.features(s.features), s.true_class});
  return out;
}

// All labeled samples plus every unlabeled sample whose max current-task
// probability strictly exceeds thr, tagged with its argmax pseudo-label.
inline std::vector<LabeledFeature> expand_label_set(const TaskData& task, const Model& model, double thr) {
  auto out = labeled_features(task, model);
  const HeadRange head = model.current_head();
  if (model.heads.back().num_classes() != task.class_set.size())
    throw std::invalid_argument("expand_label_set: current head size does not match the task's class set");
  for (const auto& s : task.unlabeled) {
    Vector h = model.features(s.features);
    const Vector z = model.logits_from_features(h, head);
    const ProbabilityVector p = softmax(z);
    const std::size_t pseudo = argmax(p.values);
    if (p.values[pseudo] > thr) out.push_back({std::move(h), task.class_set[pseudo]});
  }
  return out;
}

// mu = sample mean; sigma = unbiased covariance (zero matrix for a single
// sample) + cov_regularizer * I.
inline std::vector<ClassStats> estimate_stats(const std::vector<LabeledFeature>& samples,
                                              const std::vector<int>& class_set, double cov_regularizer,
                                              bool diagonal = false) {
  if (samples.empty()) throw std::invalid_argument("estimate_stats: empty sample list");
  if (!(cov_regularizer >= 0.0)) throw std::invalid_argument("estimate_stats: cov_regularizer must be >= 0");
  const std::size_t dim = samples.front().features.size();

  std::map<int, std::vector<const Vector*>> by_class;
  for (const auto& s : samples) {
    if (s.features.size() != dim) throw std::invalid_argument("estimate_stats: inconsistent feature dimensions");
    by_class[s.class_id].push_back(&s.features);
  }

  std::vector<ClassStats> out;
  out.reserve(class_set.size());
  for (int cls : class_set) {
    const auto it = by_class.find(cls);
    if (it == by_class.end() || it->second.empty())
      throw std::invalid_argument("estimate_stats: class " + std::to_string(cls) + " has no samples");
    const auto& members = it->second;
    const std::size_t n = members.size();

    ClassStats s;
    s.class_id = cls;
    s.support = static_cast<int>(n);
    s.mu.assign(dim, 0.0);
    for (const Vector* x : members) axpy(1.0, *x, s.mu);
    for (double& v : s.mu) v /= static_cast<double>(n);

    s.sigma = DenseMatrix(dim, dim);
    if (n >= 2) {
      Vector centered(dim);
      for (const Vector* x : members) {
        for (std::size_t i = 0; i < dim; ++i) centered[i] = (*x)[i] - s.mu[i];
        outer_add(s.sigma, centered, centered);
      }
      const double inv = 1.0 / static_cast<double>(n - 1);
      for (double& v : s.sigma.data) v *= inv;
      if (diagonal) {
        for (std::size_t r = 0; r < dim; ++r)
          for (std::size_t c = 0; c < dim; ++c)
            if (r != c) s.sigma(r, c) = 0.0;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) s.sigma(i, i) += cov_regularizer;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian sampling
// ---------------------------------------------------------------------------

namespace detail {

// z = mu + L eps with L = V sqrt(clamp(w, 0)) from the eigendecomposition of
// sigma; negative eigenvalues (numerical noise) are clamped to zero.
struct GaussianSampler {
  Vector mu;
  DenseMatrix scale;  // L, (d x d)

  explicit GaussianSampler(const ClassStats& stats) : mu(stats.mu) {
    const std::size_t d = mu.size();
    if (stats.sigma.rows != d || stats.sigma.cols != d)
      throw std::invalid_argument("GaussianSampler: sigma shape does not match mu");
    double max_abs = 0.0;
    for (double v : stats.sigma.data) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r + 1; c < d; ++c)
        if (std::abs(stats.sigma(r, c) - stats.sigma(c, r)) > 1e-9 * std::max(1.0, max_abs))
          throw std::invalid_argument("GaussianSampler: sigma is not symmetric");

    const SymmetricEigen eig = symmetric_eigen(stats.sigma);
    scale = DenseMatrix(d, d);
    for (std::size_t c = 0; c < d; ++c) {
      const double s = std::sqrt(std::max(0.0, eig.eigenvalues[c]));
      for (std::size_t r = 0; r < d; ++r) scale(r, c) = eig.eigenvectors(r, c) * s;
    }
  }

  Vector draw(Rng& rng) const {
    const std::size_t d = mu.size();
    Vector eps(d);
    for (double& v : eps) v = rng.normal();
    Vector z = matvec(scale, eps);
    for (std::size_t i = 0; i < d; ++i) z[i] += mu[i];
    return z;
  }
};

}  // namespace detail

inline std::vector<Vector> sample_gaussian(const ClassStats& stats, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("sample_gaussian: n must be >= 0");
  const detail::GaussianSampler sampler(stats);
  std::vector<Vector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sampler.draw(rng));
  return out;
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

// Fine-tunes every head on class-balanced Gaussian draws: per epoch, each
// seen class contributes one minibatch of samples_per_class_per_epoch
// features with the class as target, softmaxed over all seen classes. The
// feature map is never touched.
inline void align_classifiers(Model& model, const StatsBank& bank, const std::vector<int>& class_order,
                              const Stage2Config& cfg, Rng& rng) {
  cfg.validate();
  if (bank.empty()) throw std::invalid_argument("align_classifiers: empty statistics bank");
  if (class_order.size() != model.total_classes())
    throw std::invalid_argument("align_classifiers: class order does not cover the model's classes");
  for (int cls : class_order) {
    if (!bank.contains(cls))
      throw std::invalid_argument("align_classifiers: no statistics stored for class " + std::to_string(cls));
  }
  if (cfg.epochs == 0) return;

  std::vector<detail::GaussianSampler> samplers;
  samplers.reserve(class_order.size());
  for (int cls : class_order) samplers.emplace_back(bank.at(cls));

  SgdOptimizer optimizer(model, cfg.sgd);
  const HeadRange all = model.all_heads();
  std::vector<std::size_t> order(class_order.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t k : order) {
      std::vector<WeightedExample> batch;
      batch.reserve(cfg.samples_per_class_per_epoch);
      for (int i = 0; i < cfg.samples_per_class_per_epoch; ++i) {
        batch.push_back({samplers[k].draw(rng), k, 1.0});
      }
      const Gradients g = backward_weighted_ce(model, batch, all, /*inputs_are_features=*/true);
      optimizer.step(model, g);
    }
  }
}

}  // namespace tacle
