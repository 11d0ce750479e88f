// Evaluation protocol: cumulative top-1 accuracy over the test data of all
// tasks seen so far, and the average of those across the run.

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacle/linalg.hpp"
#include "tacle/model.hpp"
#include "tacle/stream.hpp"

namespace tacle {

struct EvalRecord {
  int task_id = 0;
  double cumulative_accuracy = 0.0;
  Vector per_class_accuracy;  // indexed by dense class order
  int num_test_samples = 0;
};

// Top-1 prediction = argmax over the concatenated logits of every head.
// `test_sets` holds the test data of tasks 1..t; `class_order` maps dense
// logit indices to global class ids.
inline EvalRecord cumulative_accuracy(const Model& model, const std::vector<std::vector<Sample>>& test_sets,
                                      const std::vector<int>& class_order) {
  if (test_sets.empty()) throw std::invalid_argument("cumulative_accuracy: no test sets");
  if (class_order.size() != model.total_classes())
    throw std::invalid_argument("cumulative_accuracy: class order does not cover the model's classes");

  std::map<int, std::size_t> dense;
  for (std::size_t i = 0; i < class_order.size(); ++i) dense[class_order[i]] = i;

  std::vector<int> correct(class_order.size(), 0);
  std::vector<int> total(class_order.size(), 0);
  int num_correct = 0;
  int num_samples = 0;
  for (const auto& set : test_sets) {
    if (set.empty()) throw std::invalid_argument("cumulative_accuracy: empty test set");
    for (const auto& s : set) {
      const auto it = dense.find(s.true_class);
      if (it == dense.end())
        throw std::invalid_argument("cumulative_accuracy: test sample labeled with unseen class " +
                                    std::to_string(s.true_class));
      const Vector h = model.features(s.features);
      const Vector z = model.logits_from_features(h, model.all_heads());
      const std::size_t pred = argmax(z);
      ++total[it->second];
      ++num_samples;
      if (pred == it->second) {
        ++correct[it->second];
        ++num_correct;
      }
    }
  }

  EvalRecord rec;
  rec.task_id = static_cast<int>(test_sets.size());
  rec.num_test_samples = num_samples;
  rec.cumulative_accuracy = static_cast<double>(num_correct) / num_samples;
  rec.per_class_accuracy.resize(class_order.size(), 0.0);
  for (std::size_t i = 0; i < class_order.size(); ++i) {
    rec.per_class_accuracy[i] = total[i] == 0 ? 0.0 : static_cast<double>(correct[i]) / total[i];
  }
  return rec;
}

// Arithmetic mean of cumulative accuracies; records must cover tasks 1..T
// exactly once.
inline double average_incremental_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("average_incremental_accuracy: no records");
  std::vector<bool> seen(records.size(), false);
  double acc = 0.0;
  for (const auto& r : records) {
    if (r.task_id < 1 || r.task_id > static_cast<int>(records.size()) || seen[r.task_id - 1])
      throw std::invalid_argument("average_incremental_accuracy: records must cover tasks 1..T exactly once");
    seen[r.task_id - 1] = true;
    acc += r.cumulative_accuracy;
  }
  return acc / static_cast<double>(records.size());
}

}  // namespace tacle
