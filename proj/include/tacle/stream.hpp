// Task-stream generation and ingestion. Streams carry per-task labeled and
// unlabeled feature samples with disjoint class sets; synthetic streams are
// mixtures of isotropic Gaussian clusters whose generator parameters are kept
// so that fresh test data can be drawn later without storing raw samples.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacle/linalg.hpp"
#include "tacle/rng.hpp"

namespace tacle {

struct Sample {
  Vector features;
  int true_class = -1;  // hidden for unlabeled samples; diagnostics only
  int task_id = 0;      // 1-based
};

struct TaskData {
  int task_id = 0;
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::vector<int> class_set;  // ordered global class ids
};

// Gaussian generator parameters of one class (synthetic streams only).
struct ClassGenerator {
  int class_id = -1;
  Vector mean;
  double stddev = 0.0;
};

struct TaskStream {
  std::vector<TaskData> tasks;
  std::size_t feature_dim = 0;
  std::vector<ClassGenerator> generators;  // empty for ingested streams

  // All class ids in task order; position in this list is the dense logit index.
  std::vector<int> class_order() const {
    std::vector<int> order;
    for (const auto& t : tasks) order.insert(order.end(), t.class_set.begin(), t.class_set.end());
    return order;
  }
};

// Defaults are the desk-scale benchmark: 5 tasks x 4 classes at a separation
// where the labeled-only baseline lands around 70% average incremental
// accuracy, leaving visible headroom for the semi-supervised pipelines.
struct StreamConfig {
  int num_tasks = 5;
  int classes_per_task = 4;
  int samples_per_class = 200;
  double supervision_fraction = 0.01;  // used when labeled_per_class == 0
  int labeled_per_class = 0;           // > 0 selects a fixed count instead (1 = one-shot)
  int feature_dim = 16;
  double cluster_spread = 1.0;
  double cluster_separation = 2.2;
  double imbalance_ratio = 1.0;  // min/max per-class count; 1 = balanced
  std::uint64_t seed = 0;

  void validate() const {
    if (num_tasks < 1) throw std::invalid_argument("StreamConfig: num_tasks must be >= 1");
    if (classes_per_task < 1) throw std::invalid_argument("StreamConfig: classes_per_task must be >= 1");
    if (samples_per_class < 1) throw std::invalid_argument("StreamConfig: samples_per_class must be >= 1");
    if (feature_dim < 1) throw std::invalid_argument("StreamConfig: feature_dim must be >= 1");
    if (!(cluster_spread > 0.0)) throw std::invalid_argument("StreamConfig: cluster_spread must be positive");
    if (!(cluster_separation > 0.0)) throw std::invalid_argument("StreamConfig: cluster_separation must be positive");
    if (!(imbalance_ratio > 0.0 && imbalance_ratio <= 1.0))
      throw std::invalid_argument("StreamConfig: imbalance_ratio must lie in (0,1]");
    if (labeled_per_class < 0) throw std::invalid_argument("StreamConfig: labeled_per_class must be >= 0");
    if (labeled_per_class > samples_per_class)
      throw std::invalid_argument("StreamConfig: labeled_per_class exceeds samples_per_class");
    if (labeled_per_class == 0 && !(supervision_fraction > 0.0 && supervision_fraction <= 1.0))
      throw std::invalid_argument("StreamConfig: supervision_fraction must lie in (0,1]");
  }
};

// Geometric head-tail interpolation of per-class counts from n_max down to
// round(ratio * n_max). ratio = 1 gives uniform counts.
inline std::vector<int> imbalance_counts(int n_max, int n_classes, double ratio) {
  if (n_classes < 1) throw std::invalid_argument("imbalance_counts: n_classes must be >= 1");
  if (n_max < 1) throw std::invalid_argument("imbalance_counts: n_max must be >= 1");
  if (!(ratio > 0.0)) throw std::invalid_argument("imbalance_counts: ratio must be positive");
  if (ratio > 1.0) throw std::invalid_argument("imbalance_counts: ratio must be <= 1");
  std::vector<int> counts(n_classes);
  for (int k = 0; k < n_classes; ++k) {
    const double expo = n_classes == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n_classes - 1);
    const double c = static_cast<double>(n_max) * std::pow(ratio, expo);
    counts[k] = static_cast<int>(std::max(1.0, std::round(c)));
  }
  return counts;
}

// x + noise_scale * eps, eps standard normal per coordinate.
inline Vector augment(std::span<const double> x, double noise_scale, Rng& rng) {
  if (noise_scale < 0.0) throw std::invalid_argument("augment: noise_scale must be non-negative");
  Vector out(x.begin(), x.end());
  if (noise_scale == 0.0) return out;
  for (double& v : out) v += noise_scale * rng.normal();
  return out;
}

namespace detail {

// Class means drawn uniformly in a box, rejection-sampled so every pair is at
// least `separation` apart. The box is sized so typical pairwise distances
// stay within a small multiple of the separation (it widens if a placement
// keeps failing), which keeps the configured separation the difficulty knob.
inline std::vector<Vector> draw_class_means(std::size_t num_classes, std::size_t dim, double separation, Rng& rng) {
  std::vector<Vector> means;
  means.reserve(num_classes);
  double radius = 0.6 * separation *
                  std::max(1.0, std::pow(static_cast<double>(num_classes), 1.0 / static_cast<double>(dim)));
  for (std::size_t c = 0; c < num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vector candidate(dim);
      for (double& v : candidate) v = rng.uniform(-radius, radius);
      bool ok = true;
      for (const auto& m : means) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (candidate[i] - m[i]) * (candidate[i] - m[i]);
        if (d2 < separation * separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        means.push_back(std::move(candidate));
        placed = true;
        break;
      }
      if (attempt % 100 == 99) radius *= 1.25;
    }
    if (!placed) throw std::runtime_error("draw_class_means: could not place class means at the requested separation");
  }
  return means;
}

inline int labeled_count(const StreamConfig& cfg, int class_total) {
  int n = cfg.labeled_per_class > 0
              ? cfg.labeled_per_class
              : static_cast<int>(std::round(cfg.supervision_fraction * class_total));
  n = std::max(1, std::min(n, class_total));
  return n;
}

}  // namespace detail

inline TaskStream generate_stream(const StreamConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::derive(cfg.seed, "stream");

  const std::size_t total_classes = static_cast<std::size_t>(cfg.num_tasks) * cfg.classes_per_task;
  const auto means =
      detail::draw_class_means(total_classes, cfg.feature_dim, cfg.cluster_separation, rng);

  TaskStream stream;
  stream.feature_dim = cfg.feature_dim;
  stream.generators.reserve(total_classes);
  for (std::size_t c = 0; c < total_classes; ++c) {
    stream.generators.push_back({static_cast<int>(c), means[c], cfg.cluster_spread});
  }

  const auto counts = imbalance_counts(cfg.samples_per_class, cfg.classes_per_task, cfg.imbalance_ratio);

  for (int t = 1; t <= cfg.num_tasks; ++t) {
    TaskData task;
    task.task_id = t;
    for (int j = 0; j < cfg.classes_per_task; ++j) {
      task.class_set.push_back((t - 1) * cfg.classes_per_task + j);
    }
    for (int j = 0; j < cfg.classes_per_task; ++j) {
      const int cls = task.class_set[j];
      const int n = counts[j];
      std::vector<Sample> drawn;
      drawn.reserve(n);
      for (int i = 0; i < n; ++i) {
        Sample s;
        s.true_class = cls;
        s.task_id = t;
        s.features.resize(cfg.feature_dim);
        for (std::size_t k = 0; k < s.features.size(); ++k) {
          s.features[k] = means[cls][k] + cfg.cluster_spread * rng.normal();
        }
        drawn.push_back(std::move(s));
      }
      const int n_lab = detail::labeled_count(cfg, n);
      std::vector<std::size_t> order(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(order);
      for (int i = 0; i < n; ++i) {
        auto& dst = i < n_lab ? task.labeled : task.unlabeled;
        dst.push_back(std::move(drawn[order[i]]));
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

// Fresh draws from one task's class generators; used for held-out test sets.
inline std::vector<Sample> sample_task_test_set(const TaskStream& stream, int task_id, int per_class, Rng& rng) {
  if (task_id < 1 || task_id > static_cast<int>(stream.tasks.size()))
    throw std::invalid_argument("sample_task_test_set: task_id out of range");
  if (per_class < 1) throw std::invalid_argument("sample_task_test_set: per_class must be >= 1");
  if (stream.generators.empty())
    throw std::invalid_argument("sample_task_test_set: stream carries no class generators");
  std::vector<Sample> out;
  for (int cls : stream.tasks[task_id - 1].class_set) {
    const auto it = std::find_if(stream.generators.begin(), stream.generators.end(),
                                 [cls](const ClassGenerator& g) { return g.class_id == cls; });
    if (it == stream.generators.end())
      throw std::invalid_argument("sample_task_test_set: missing generator for class " + std::to_string(cls));
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      s.true_class = cls;
      s.task_id = task_id;
      s.features.resize(it->mean.size());
      for (std::size_t k = 0; k < s.features.size(); ++k) s.features[k] = it->mean[k] + it->stddev * rng.normal();
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV schema: task_id,class_id,labeled,f0,...,f{d-1}
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw std::runtime_error("embedding csv: malformed number '" + s + "' on line " + std::to_string(line_no));
  return v;
}

inline long parse_long(const std::string& s, std::size_t line_no) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("embedding csv: malformed integer '" + s + "' on line " + std::to_string(line_no));
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

inline void write_stream_csv(const TaskStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_stream_csv: cannot open '" + path + "' for writing");
  out << "task_id,class_id,labeled";
  for (std::size_t i = 0; i < stream.feature_dim; ++i) out << ",f" << i;
  out << "\n";
  auto emit = [&](const Sample& s, int labeled) {
    out << s.task_id << ',' << s.true_class << ',' << labeled;
    for (double v : s.features) out << ',' << detail::format_double(v);
    out << "\n";
  };
  for (const auto& task : stream.tasks) {
    for (const auto& s : task.labeled) emit(s, 1);
    for (const auto& s : task.unlabeled) emit(s, 0);
  }
  if (!out) throw std::runtime_error("write_stream_csv: write failed for '" + path + "'");
}

// Reads the CSV schema above. Rows are grouped by task_id (ascending);
// class sets must be disjoint across tasks.
inline TaskStream ingest_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_embeddings: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ingest_embeddings: empty file '" + path + "'");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "task_id" || header[1] != "class_id" || header[2] != "labeled")
    throw std::runtime_error("ingest_embeddings: header must start with task_id,class_id,labeled,f0,...");
  const std::size_t dim = header.size() - 3;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[3 + i] != "f" + std::to_string(i))
      throw std::runtime_error("ingest_embeddings: feature column " + std::to_string(i) + " must be named f" +
                               std::to_string(i));
  }

  std::map<int, TaskData> tasks;
  std::map<int, std::set<int>> classes_by_task;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("ingest_embeddings: line " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " columns, expected " + std::to_string(header.size()));
    Sample s;
    s.task_id = static_cast<int>(detail::parse_long(fields[0], line_no));
    s.true_class = static_cast<int>(detail::parse_long(fields[1], line_no));
    const long lab = detail::parse_long(fields[2], line_no);
    if (lab != 0 && lab != 1)
      throw std::runtime_error("ingest_embeddings: labeled flag must be 0 or 1 on line " + std::to_string(line_no));
    s.features.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) s.features[i] = detail::parse_double(fields[3 + i], line_no);
    if (!all_finite(s.features))
      throw std::runtime_error("ingest_embeddings: non-finite feature on line " + std::to_string(line_no));

    auto& task = tasks[s.task_id];
    task.task_id = s.task_id;
    classes_by_task[s.task_id].insert(s.true_class);
    (lab == 1 ? task.labeled : task.unlabeled).push_back(std::move(s));
  }
  if (tasks.empty()) throw std::runtime_error("ingest_embeddings: no data rows in '" + path + "'");

  // Disjointness check across tasks.
  std::map<int, int> class_owner;
  for (const auto& [tid, cls] : classes_by_task) {
    for (int c : cls) {
      const auto [it, inserted] = class_owner.emplace(c, tid);
      if (!inserted)
        throw std::runtime_error("ingest_embeddings: class " + std::to_string(c) + " appears in tasks " +
                                 std::to_string(it->second) + " and " + std::to_string(tid) +
                                 "; task class sets must be disjoint");
    }
  }

  TaskStream stream;
  stream.feature_dim = dim;
  for (auto& [tid, task] : tasks) {
    task.class_set.assign(classes_by_task[tid].begin(), classes_by_task[tid].end());
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

}  // namespace tacle
