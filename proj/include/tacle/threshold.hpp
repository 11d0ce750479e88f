// Confidence gating policies: the task-adaptive inverse-sigmoid threshold,
// the fixed-threshold baseline, and the average-confidence-score diagnostic.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tacle/linalg.hpp"
#include "tacle/model.hpp"
#include "tacle/stream.hpp"

namespace tacle {

struct ThresholdSchedule {
  enum class Kind { adaptive, fixed };

  Kind kind = Kind::adaptive;
  double alpha = 0.5;   // adaptive: decay rate and initial offset
  double beta = 0.65;   // adaptive: asymptotic floor
  double gamma = 0.95;  // fixed threshold

  static ThresholdSchedule make_adaptive(double alpha, double beta) {
    ThresholdSchedule s;
    s.kind = Kind::adaptive;
    s.alpha = alpha;
    s.beta = beta;
    return s;
  }

  static ThresholdSchedule make_fixed(double gamma) {
    ThresholdSchedule s;
    s.kind = Kind::fixed;
    s.gamma = gamma;
    return s;
  }

  void validate() const {
    if (kind == Kind::adaptive) {
      if (!(alpha > 0.0)) throw std::invalid_argument("ThresholdSchedule: alpha must be positive");
      if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("ThresholdSchedule: beta must lie in (0,1)");
      if (!(beta + alpha / (1.0 + std::exp(alpha)) < 1.0))
        throw std::invalid_argument("ThresholdSchedule: beta + alpha/(1+e^alpha) must stay below 1");
    } else {
      // gamma = 1 is allowed: with a strict comparison it gates everything
      // out, which is the labeled-only reduction.
      if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ThresholdSchedule: gamma must lie in (0,1]");
    }
  }
};

// Adaptive: alpha / (1 + e^(alpha t)) + beta, strictly decreasing in t and
// converging to beta. Fixed: gamma, independent of t. Task indices are 1-based.
inline double threshold_at(const ThresholdSchedule& sched, int task_index) {
  if (task_index < 1) throw std::invalid_argument("threshold_at: task index must be >= 1");
  if (sched.kind == ThresholdSchedule::Kind::fixed) return sched.gamma;
  return sched.alpha / (1.0 + std::exp(sched.alpha * static_cast<double>(task_index))) + sched.beta;
}

struct ConfidentMask {
  std::vector<bool> mask;           // max prob strictly above the threshold
  std::vector<std::size_t> pseudo_labels;  // argmax index, first maximum on ties
};

inline ConfidentMask confident_mask(const std::vector<ProbabilityVector>& probs, double thr) {
  ConfidentMask out;
  out.mask.reserve(probs.size());
  out.pseudo_labels.reserve(probs.size());
  for (const auto& p : probs) {
    if (p.size() == 0) throw std::invalid_argument("confident_mask: empty probability vector");
    const std::size_t best = argmax(p.values);
    out.mask.push_back(p.values[best] > thr);
    out.pseudo_labels.push_back(best);
  }
  return out;
}

// Mean over samples of the max softmax probability under the given head
// range (all seen classes by default).
inline double average_confidence_score(const Model& model, const std::vector<Sample>& unlabeled, HeadRange range) {
  if (unlabeled.empty()) throw std::invalid_argument("average_confidence_score: empty sample set");
  double acc = 0.0;
  for (const auto& s : unlabeled) {
    const auto fwd = forward(model, s.features, range);
    acc += fwd.probabilities.values[argmax(fwd.probabilities.values)];
  }
  return acc / static_cast<double>(unlabeled.size());
}

inline double average_confidence_score(const Model& model, const std::vector<Sample>& unlabeled) {
  return average_confidence_score(model, unlabeled, model.all_heads());
}

}  // namespace tacle
