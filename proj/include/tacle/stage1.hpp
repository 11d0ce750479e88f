// Stage 1: feature-representation learning on one task. Minibatch SGD over a
// class-weighted supervised loss plus a confidence-gated unsupervised loss on
// augmented samples; the confident-sample histogram and the derived class
// weights are refreshed after every epoch. Only the current task's head (and
// the feature map, when trainable) receives gradients.

#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tacle/linalg.hpp"
#include "tacle/model.hpp"
#include "tacle/rng.hpp"
#include "tacle/stream.hpp"
#include "tacle/threshold.hpp"

namespace tacle {

// ---------------------------------------------------------------------------
// Class-aware weights
// ---------------------------------------------------------------------------

// zeta: max-normalized histogram of confident pseudo-labels over the current
// task's classes. zeta_bar = 2 - zeta, so weights live in [1, 2]: the class
// with the most confident samples gets weight 1, a class with none gets 2.
struct ClassWeightState {
  Vector zeta;
  Vector zeta_bar;

  std::size_t num_classes() const { return zeta.size(); }
};

inline ClassWeightState init_class_weights(std::size_t num_classes) {
  if (num_classes < 1) throw std::invalid_argument("init_class_weights: num_classes must be >= 1");
  return ClassWeightState{Vector(num_classes, 1.0), Vector(num_classes, 1.0)};
}

namespace detail {

// One pass over the unlabeled pool with the current-task softmax: confident
// counts per within-task pseudo-label, plus precision diagnostics against the
// hidden labels (never used for training).
struct UnlabeledScan {
  std::vector<int> counts;
  int confident = 0;
  int correct = 0;
  int total = 0;

  double confident_fraction() const { return total == 0 ? 0.0 : static_cast<double>(confident) / total; }
  double pseudo_precision() const { return confident == 0 ? 0.0 : static_cast<double>(correct) / confident; }
};

inline UnlabeledScan scan_unlabeled(const Model& model, const std::vector<Sample>& unlabeled, double thr,
                                    HeadRange head, const std::vector<int>& class_set) {
  UnlabeledScan scan;
  scan.counts.assign(class_set.size(), 0);
  scan.total = static_cast<int>(unlabeled.size());
  for (const auto& s : unlabeled) {
    const Vector h = model.features(s.features);
    const Vector z = model.logits_from_features(h, head);
    const ProbabilityVector p = softmax(z);
    const std::size_t best = argmax(p.values);
    if (p.values[best] > thr) {
      ++scan.counts[best];
      ++scan.confident;
      if (class_set[best] == s.true_class) ++scan.correct;
    }
  }
  return scan;
}

}  // namespace detail

// Refreshes zeta from the confident-count histogram. When no sample is
// confident the previous state is kept (uniform at init).
inline ClassWeightState update_histogram(const ClassWeightState& state, const Model& model,
                                         const std::vector<Sample>& unlabeled, double thr, HeadRange head,
                                         const std::vector<int>& class_set) {
  if (!(thr > 0.0 && thr <= 1.0)) throw std::invalid_argument("update_histogram: threshold must lie in (0,1]");
  if (class_set.size() != state.num_classes())
    throw std::invalid_argument("update_histogram: class set size does not match weight state");
  const auto scan = detail::scan_unlabeled(model, unlabeled, thr, head, class_set);
  const int max_count = scan.counts.empty() ? 0 : *std::max_element(scan.counts.begin(), scan.counts.end());
  if (max_count == 0) return state;
  ClassWeightState next;
  next.zeta.resize(state.num_classes());
  next.zeta_bar.resize(state.num_classes());
  for (std::size_t k = 0; k < next.zeta.size(); ++k) {
    next.zeta[k] = static_cast<double>(scan.counts[k]) / max_count;
    next.zeta_bar[k] = 2.0 - next.zeta[k];
  }
  return next;
}

// Per-sample weights looked up at the (pseudo-)label's within-task index.
inline std::pair<Vector, Vector> assign_weights(const ClassWeightState& state,
                                                const std::vector<std::size_t>& labeled_targets,
                                                const std::vector<std::size_t>& pseudo_labels) {
  auto lookup = [&state](const std::vector<std::size_t>& idx) {
    Vector w(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= state.num_classes()) throw std::invalid_argument("assign_weights: class index out of range");
      w[i] = state.zeta_bar[idx[i]];
    }
    return w;
  };
  return {lookup(labeled_targets), lookup(pseudo_labels)};
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

inline constexpr int kAutoWarmup = -1;

enum class UnsupMean { gated, full_batch };

struct Stage1Config {
  int epochs = 10;
  int warmup_iterations = kAutoWarmup;  // auto: one labeled epoch-equivalent
  int batch_size_labeled = 32;
  int batch_size_unlabeled = 128;
  int lr_drop_epoch = 8;      // learning rate divided entering epoch lr_drop_epoch + 1
  double lr_drop_factor = 10.0;
  double augment_noise = 0.25;
  UnsupMean unsup_mean = UnsupMean::gated;
  SgdConfig sgd;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("Stage1Config: epochs must be >= 0");
    if (epochs > 0 && (lr_drop_epoch < 0 || lr_drop_epoch > epochs))
      throw std::invalid_argument("Stage1Config: lr_drop_epoch must lie in [0, epochs]");
    if (batch_size_labeled < 1 || batch_size_unlabeled < 1)
      throw std::invalid_argument("Stage1Config: batch sizes must be >= 1");
    if (!(lr_drop_factor >= 1.0)) throw std::invalid_argument("Stage1Config: lr_drop_factor must be >= 1");
    if (augment_noise < 0.0) throw std::invalid_argument("Stage1Config: augment_noise must be >= 0");
    sgd.validate();
  }
};

// Pipeline-level switches: the labeled-only baseline trains with
// use_unlabeled = false; class_weights is the class-aware loss component.
struct Stage1Options {
  bool use_unlabeled = true;
  bool class_weights = true;
};

// One independent stream per stochastic consumer, so that e.g. disabling the
// unlabeled path leaves the labeled batch order untouched.
struct Stage1Rngs {
  Rng labeled_batches;
  Rng unlabeled_batches;
  Rng augment_noise;

  static Stage1Rngs derive(std::uint64_t seed, int task_id) {
    const auto t = static_cast<std::uint64_t>(task_id);
    return Stage1Rngs{Rng::derive(seed, "stage1-labeled", t), Rng::derive(seed, "stage1-unlabeled", t),
                      Rng::derive(seed, "stage1-augment", t)};
  }
};

struct Stage1Report {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_confident_fraction;
  std::vector<double> epoch_pseudo_precision;
  Vector final_zeta_bar;

  double final_confident_fraction() const { return epoch_confident_fraction.empty() ? 0.0 : epoch_confident_fraction.back(); }
  double final_pseudo_precision() const { return epoch_pseudo_precision.empty() ? 0.0 : epoch_pseudo_precision.back(); }
};

namespace detail {

// Shuffled index cycling: consumers see every element once per wrap.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, Rng& rng) : order_(n), pos_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ >= order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng& rng_;
};

inline std::size_t within_task_index(const std::vector<int>& class_set, int global_class) {
  const auto it = std::find(class_set.begin(), class_set.end(), global_class);
  if (it == class_set.end())
    throw std::invalid_argument("stage1: sample labeled with class " + std::to_string(global_class) +
                                " outside the task's class set");
  return static_cast<std::size_t>(it - class_set.begin());
}

}  // namespace detail

inline Stage1Report train_task_stage1(Model& model, const TaskData& task, const ThresholdSchedule& sched,
                                      const Stage1Config& cfg, const Stage1Options& opts, Stage1Rngs& rngs) {
  cfg.validate();
  sched.validate();
  if (task.labeled.empty()) throw std::invalid_argument("train_task_stage1: task has no labeled samples");
  if (model.heads.empty()) throw std::invalid_argument("train_task_stage1: model has no heads");
  const HeadRange head = model.current_head();
  if (model.heads.back().num_classes() != task.class_set.size())
    throw std::invalid_argument("train_task_stage1: current head size does not match the task's class set");

  // Every class needs at least one labeled sample; resolve targets up front.
  std::vector<std::size_t> labeled_target(task.labeled.size());
  std::vector<int> labeled_per_class(task.class_set.size(), 0);
  for (std::size_t i = 0; i < task.labeled.size(); ++i) {
    labeled_target[i] = detail::within_task_index(task.class_set, task.labeled[i].true_class);
    ++labeled_per_class[labeled_target[i]];
  }
  for (std::size_t k = 0; k < labeled_per_class.size(); ++k) {
    if (labeled_per_class[k] == 0)
      throw std::invalid_argument("train_task_stage1: class " + std::to_string(task.class_set[k]) +
                                  " has no labeled sample");
  }

  const double thr = threshold_at(sched, task.task_id);
  ClassWeightState weights = init_class_weights(task.class_set.size());
  SgdOptimizer optimizer(model, cfg.sgd);
  Stage1Report report;

  const std::size_t n_lab = task.labeled.size();
  const std::size_t n_ul = task.unlabeled.size();
  const std::size_t bs_lab = std::min<std::size_t>(cfg.batch_size_labeled, n_lab);
  const std::size_t bs_ul = n_ul == 0 ? 0 : std::min<std::size_t>(cfg.batch_size_unlabeled, n_ul);

  // The iteration budget depends only on the data, not on whether the
  // unlabeled path is enabled, so the labeled-only baseline takes the same
  // number of supervised steps from the same batch stream.
  const auto div_up = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  const std::size_t labeled_iters = div_up(n_lab, bs_lab);
  const std::size_t iters_per_epoch = std::max(labeled_iters, n_ul == 0 ? 0 : div_up(n_ul, bs_ul));
  const std::size_t warmup =
      cfg.warmup_iterations == kAutoWarmup ? labeled_iters : static_cast<std::size_t>(cfg.warmup_iterations);

  detail::BatchCycler labeled_cycler(n_lab, rngs.labeled_batches);
  detail::BatchCycler unlabeled_cycler(std::max<std::size_t>(n_ul, 1), rngs.unlabeled_batches);

  auto labeled_batch = [&](const std::vector<std::size_t>& idx) {
    std::vector<WeightedExample> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) {
      const std::size_t target = labeled_target[i];
      batch.push_back({task.labeled[i].features, target, opts.class_weights ? weights.zeta_bar[target] : 1.0});
    }
    return batch;
  };

  // Warmup: labeled loss only.
  for (std::size_t it = 0; it < warmup; ++it) {
    const auto batch = labeled_batch(labeled_cycler.next(bs_lab));
    const Gradients g = backward_weighted_ce(model, batch, head);
    optimizer.step(model, g);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch == cfg.lr_drop_epoch + 1) optimizer.set_learning_rate(optimizer.learning_rate() / cfg.lr_drop_factor);

    double epoch_loss = 0.0;
    for (std::size_t it = 0; it < iters_per_epoch; ++it) {
      const auto sup_batch = labeled_batch(labeled_cycler.next(bs_lab));
      Gradients grads = backward_weighted_ce(model, sup_batch, head);
      double iter_loss = weighted_ce_loss(model, sup_batch, head);

      if (opts.use_unlabeled && n_ul > 0) {
        const auto ul_idx = unlabeled_cycler.next(bs_ul);
        // Pseudo-labels come from the clean forward pass; the loss is applied
        // to the augmented samples that clear the gate.
        std::vector<WeightedExample> unsup;
        for (std::size_t i : ul_idx) {
          const Sample& s = task.unlabeled[i];
          const Vector h = model.features(s.features);
          const Vector z = model.logits_from_features(h, head);
          const ProbabilityVector p = softmax(z);
          const std::size_t pseudo = argmax(p.values);
          const bool gated = p.values[pseudo] > thr;
          Vector augmented = augment(s.features, cfg.augment_noise, rngs.augment_noise);
          if (gated) {
            unsup.push_back({std::move(augmented), pseudo, opts.class_weights ? weights.zeta_bar[pseudo] : 1.0});
          }
        }
        if (!unsup.empty()) {
          Gradients ug = backward_weighted_ce(model, unsup, head);
          double unsup_loss = weighted_ce_loss(model, unsup, head);
          if (cfg.unsup_mean == UnsupMean::full_batch) {
            const double rescale = static_cast<double>(unsup.size()) / static_cast<double>(ul_idx.size());
            ug.scale(rescale);
            unsup_loss *= rescale;
          }
          grads.add(ug);
          iter_loss += unsup_loss;
        }
      }

      optimizer.step(model, grads);
      epoch_loss += iter_loss;
    }

    report.epoch_loss.push_back(epoch_loss / static_cast<double>(iters_per_epoch));

    if (opts.use_unlabeled && n_ul > 0) {
      const auto scan = detail::scan_unlabeled(model, task.unlabeled, thr, head, task.class_set);
      report.epoch_confident_fraction.push_back(scan.confident_fraction());
      report.epoch_pseudo_precision.push_back(scan.pseudo_precision());
      const int max_count = *std::max_element(scan.counts.begin(), scan.counts.end());
      if (max_count > 0) {
        for (std::size_t k = 0; k < weights.zeta.size(); ++k) {
          weights.zeta[k] = static_cast<double>(scan.counts[k]) / max_count;
          weights.zeta_bar[k] = 2.0 - weights.zeta[k];
        }
      }
    } else {
      report.epoch_confident_fraction.push_back(0.0);
      report.epoch_pseudo_precision.push_back(0.0);
    }
  }

  report.final_zeta_bar = weights.zeta_bar;
  return report;
}

}  // namespace tacle
