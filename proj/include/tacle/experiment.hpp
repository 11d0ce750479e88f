// Experiment orchestration: full incremental runs over a task stream for the
// three pipelines (tacle, fixed_threshold, labeled_only) with ablation
// switches, threshold sweeps, seed aggregation, JSON persistence and CSV
// plot-data emission. A run holds only the current task's raw data plus the
// statistics bank; earlier tasks survive through the model and the bank only.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tacle/eval.hpp"
#include "tacle/linalg.hpp"
#include "tacle/log.hpp"
#include "tacle/model.hpp"
#include "tacle/rng.hpp"
#include "tacle/stage1.hpp"
#include "tacle/stage2.hpp"
#include "tacle/stream.hpp"
#include "tacle/threshold.hpp"

namespace tacle {

using nlohmann::json;

enum class Pipeline { tacle, fixed_threshold, labeled_only };

struct AblationFlags {
  bool c1_adaptive_threshold = true;
  bool c2_class_weights = true;
  bool c3_unlabeled_stats = true;
};

struct ModelConfig {
  FeatureMapKind feature_map = FeatureMapKind::identity;
  bool trainable = false;
  int feature_dim = 0;  // 0: same as the input dimension
};

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::tacle: return "tacle";
    case Pipeline::fixed_threshold: return "fixed_threshold";
    case Pipeline::labeled_only: return "labeled_only";
  }
  throw std::logic_error("pipeline_name: unreachable");
}

inline Pipeline parse_pipeline(const std::string& s) {
  if (s == "tacle") return Pipeline::tacle;
  if (s == "fixed_threshold" || s == "fixed") return Pipeline::fixed_threshold;
  if (s == "labeled_only" || s == "labeled") return Pipeline::labeled_only;
  throw std::invalid_argument("unknown pipeline '" + s + "' (expected tacle|fixed_threshold|labeled_only)");
}

inline std::string feature_map_name(FeatureMapKind k) {
  switch (k) {
    case FeatureMapKind::identity: return "identity";
    case FeatureMapKind::linear: return "linear";
    case FeatureMapKind::linear_tanh: return "linear_tanh";
  }
  throw std::logic_error("feature_map_name: unreachable");
}

inline FeatureMapKind parse_feature_map(const std::string& s) {
  if (s == "identity") return FeatureMapKind::identity;
  if (s == "linear") return FeatureMapKind::linear;
  if (s == "linear_tanh") return FeatureMapKind::linear_tanh;
  throw std::invalid_argument("unknown feature_map '" + s + "'");
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
inline void maybe_get(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

struct ExperimentConfig {
  StreamConfig stream;
  Pipeline pipeline = Pipeline::tacle;
  AblationFlags ablation;
  ThresholdSchedule threshold;  // adaptive(0.5, 0.65) by default
  ModelConfig model;
  Stage1Config stage1;
  Stage2Config stage2;
  int test_samples_per_class = 100;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string output_dir = "results";

  // With only a handful of labeled samples per class the head needs a longer
  // labeled-only warmup before pseudo-label gating becomes useful.
  ExperimentConfig() { stage1.warmup_iterations = 40; }

  // Fills ablation flags and the threshold kind with the pipeline's
  // conventional settings; explicit config keys override afterwards.
  void apply_pipeline_preset() {
    switch (pipeline) {
      case Pipeline::tacle:
        ablation = {true, true, true};
        threshold = ThresholdSchedule::make_adaptive(0.5, 0.65);
        break;
      case Pipeline::fixed_threshold:
      case Pipeline::labeled_only:
        ablation = {false, false, false};
        threshold = ThresholdSchedule::make_fixed(0.95);
        break;
    }
  }

  void validate() const {
    stream.validate();
    stage1.validate();
    stage2.validate();
    threshold.validate();
    if (test_samples_per_class < 1)
      throw std::invalid_argument("ExperimentConfig: test_samples_per_class must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be non-empty");
    if (output_dir.empty()) throw std::invalid_argument("ExperimentConfig: output_dir must be non-empty");
    if (model.feature_dim < 0) throw std::invalid_argument("ExperimentConfig: model.feature_dim must be >= 0");

    if (pipeline == Pipeline::labeled_only) {
      if (ablation.c1_adaptive_threshold || ablation.c2_class_weights || ablation.c3_unlabeled_stats)
        throw std::invalid_argument("ExperimentConfig: labeled_only pipeline requires all ablation flags off");
    }
    if (pipeline == Pipeline::fixed_threshold) {
      if (ablation.c1_adaptive_threshold)
        throw std::invalid_argument("ExperimentConfig: fixed_threshold pipeline requires c1_adaptive_threshold off");
      if (threshold.kind != ThresholdSchedule::Kind::fixed)
        throw std::invalid_argument("ExperimentConfig: fixed_threshold pipeline requires a fixed threshold");
    }
    if (pipeline == Pipeline::tacle) {
      const auto expected =
          ablation.c1_adaptive_threshold ? ThresholdSchedule::Kind::adaptive : ThresholdSchedule::Kind::fixed;
      if (threshold.kind != expected)
        throw std::invalid_argument(
            "ExperimentConfig: tacle pipeline requires an adaptive threshold when c1 is on and a fixed one otherwise");
    }
  }

  // Canonical, fully resolved document; keys are emitted in sorted order by
  // the JSON library, so hashing the dump is insensitive to input formatting.
  json to_json() const {
    json j;
    j["stream"] = {{"num_tasks", stream.num_tasks},
                   {"classes_per_task", stream.classes_per_task},
                   {"samples_per_class", stream.samples_per_class},
                   {"supervision_fraction", stream.supervision_fraction},
                   {"labeled_per_class", stream.labeled_per_class},
                   {"feature_dim", stream.feature_dim},
                   {"cluster_spread", stream.cluster_spread},
                   {"cluster_separation", stream.cluster_separation},
                   {"imbalance_ratio", stream.imbalance_ratio},
                   {"seed", stream.seed}};
    j["pipeline"] = detail::pipeline_name(pipeline);
    j["ablation"] = {{"c1_adaptive_threshold", ablation.c1_adaptive_threshold},
                     {"c2_class_weights", ablation.c2_class_weights},
                     {"c3_unlabeled_stats", ablation.c3_unlabeled_stats}};
    j["threshold"] = {{"kind", threshold.kind == ThresholdSchedule::Kind::adaptive ? "adaptive" : "fixed"},
                      {"alpha", threshold.alpha},
                      {"beta", threshold.beta},
                      {"gamma", threshold.gamma}};
    j["model"] = {{"feature_map", detail::feature_map_name(model.feature_map)},
                  {"trainable", model.trainable},
                  {"feature_dim", model.feature_dim}};
    j["stage1"] = {{"epochs", stage1.epochs},
                   {"warmup_iterations", stage1.warmup_iterations},
                   {"batch_size_labeled", stage1.batch_size_labeled},
                   {"batch_size_unlabeled", stage1.batch_size_unlabeled},
                   {"lr_drop_epoch", stage1.lr_drop_epoch},
                   {"lr_drop_factor", stage1.lr_drop_factor},
                   {"augment_noise", stage1.augment_noise},
                   {"unsup_mean", stage1.unsup_mean == UnsupMean::gated ? "gated" : "full_batch"},
                   {"sgd",
                    {{"learning_rate", stage1.sgd.learning_rate},
                     {"momentum", stage1.sgd.momentum},
                     {"weight_decay", stage1.sgd.weight_decay}}}};
    j["stage2"] = {{"epochs", stage2.epochs},
                   {"samples_per_class_per_epoch", stage2.samples_per_class_per_epoch},
                   {"cov_regularizer", stage2.cov_regularizer},
                   {"diagonal_covariance", stage2.diagonal_covariance},
                   {"sgd",
                    {{"learning_rate", stage2.sgd.learning_rate},
                     {"momentum", stage2.sgd.momentum},
                     {"weight_decay", stage2.sgd.weight_decay}}}};
    j["test_samples_per_class"] = test_samples_per_class;
    j["seeds"] = seeds;
    j["output_dir"] = output_dir;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    detail::check_keys(j, {"stream", "pipeline", "ablation", "threshold", "model", "stage1", "stage2",
                           "test_samples_per_class", "seeds", "output_dir"},
                       "config root");
    if (j.contains("pipeline")) {
      c.pipeline = detail::parse_pipeline(j.at("pipeline").get<std::string>());
      c.apply_pipeline_preset();
    }
    if (j.contains("stream")) {
      const auto& s = j.at("stream");
      detail::check_keys(s,
                         {"num_tasks", "classes_per_task", "samples_per_class", "supervision_fraction",
                          "labeled_per_class", "feature_dim", "cluster_spread", "cluster_separation",
                          "imbalance_ratio", "seed"},
                         "stream");
      detail::maybe_get(s, "num_tasks", c.stream.num_tasks);
      detail::maybe_get(s, "classes_per_task", c.stream.classes_per_task);
      detail::maybe_get(s, "samples_per_class", c.stream.samples_per_class);
      detail::maybe_get(s, "supervision_fraction", c.stream.supervision_fraction);
      detail::maybe_get(s, "labeled_per_class", c.stream.labeled_per_class);
      detail::maybe_get(s, "feature_dim", c.stream.feature_dim);
      detail::maybe_get(s, "cluster_spread", c.stream.cluster_spread);
      detail::maybe_get(s, "cluster_separation", c.stream.cluster_separation);
      detail::maybe_get(s, "imbalance_ratio", c.stream.imbalance_ratio);
      detail::maybe_get(s, "seed", c.stream.seed);
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      detail::check_keys(a, {"c1_adaptive_threshold", "c2_class_weights", "c3_unlabeled_stats"}, "ablation");
      detail::maybe_get(a, "c1_adaptive_threshold", c.ablation.c1_adaptive_threshold);
      detail::maybe_get(a, "c2_class_weights", c.ablation.c2_class_weights);
      detail::maybe_get(a, "c3_unlabeled_stats", c.ablation.c3_unlabeled_stats);
    }
    if (j.contains("threshold")) {
      const auto& t = j.at("threshold");
      detail::check_keys(t, {"kind", "alpha", "beta", "gamma"}, "threshold");
      if (t.contains("kind")) {
        const auto kind = t.at("kind").get<std::string>();
        if (kind == "adaptive") {
          c.threshold.kind = ThresholdSchedule::Kind::adaptive;
        } else if (kind == "fixed") {
          c.threshold.kind = ThresholdSchedule::Kind::fixed;
        } else {
          throw std::invalid_argument("config: unknown threshold kind '" + kind + "'");
        }
      }
      detail::maybe_get(t, "alpha", c.threshold.alpha);
      detail::maybe_get(t, "beta", c.threshold.beta);
      detail::maybe_get(t, "gamma", c.threshold.gamma);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::check_keys(m, {"feature_map", "trainable", "feature_dim"}, "model");
      if (m.contains("feature_map")) c.model.feature_map = detail::parse_feature_map(m.at("feature_map").get<std::string>());
      detail::maybe_get(m, "trainable", c.model.trainable);
      detail::maybe_get(m, "feature_dim", c.model.feature_dim);
    }
    if (j.contains("stage1")) {
      const auto& s = j.at("stage1");
      detail::check_keys(s,
                         {"epochs", "warmup_iterations", "batch_size_labeled", "batch_size_unlabeled", "lr_drop_epoch",
                          "lr_drop_factor", "augment_noise", "unsup_mean", "sgd"},
                         "stage1");
      detail::maybe_get(s, "epochs", c.stage1.epochs);
      detail::maybe_get(s, "warmup_iterations", c.stage1.warmup_iterations);
      detail::maybe_get(s, "batch_size_labeled", c.stage1.batch_size_labeled);
      detail::maybe_get(s, "batch_size_unlabeled", c.stage1.batch_size_unlabeled);
      detail::maybe_get(s, "lr_drop_epoch", c.stage1.lr_drop_epoch);
      detail::maybe_get(s, "lr_drop_factor", c.stage1.lr_drop_factor);
      detail::maybe_get(s, "augment_noise", c.stage1.augment_noise);
      if (s.contains("unsup_mean")) {
        const auto um = s.at("unsup_mean").get<std::string>();
        if (um == "gated") {
          c.stage1.unsup_mean = UnsupMean::gated;
        } else if (um == "full_batch") {
          c.stage1.unsup_mean = UnsupMean::full_batch;
        } else {
          throw std::invalid_argument("config: unknown unsup_mean '" + um + "'");
        }
      }
      if (s.contains("sgd")) {
        const auto& g = s.at("sgd");
        detail::check_keys(g, {"learning_rate", "momentum", "weight_decay"}, "stage1.sgd");
        detail::maybe_get(g, "learning_rate", c.stage1.sgd.learning_rate);
        detail::maybe_get(g, "momentum", c.stage1.sgd.momentum);
        detail::maybe_get(g, "weight_decay", c.stage1.sgd.weight_decay);
      }
    }
    if (j.contains("stage2")) {
      const auto& s = j.at("stage2");
      detail::check_keys(
          s, {"epochs", "samples_per_class_per_epoch", "cov_regularizer", "diagonal_covariance", "sgd"}, "stage2");
      detail::maybe_get(s, "epochs", c.stage2.epochs);
      detail::maybe_get(s, "samples_per_class_per_epoch", c.stage2.samples_per_class_per_epoch);
      detail::maybe_get(s, "cov_regularizer", c.stage2.cov_regularizer);
      detail::maybe_get(s, "diagonal_covariance", c.stage2.diagonal_covariance);
      if (s.contains("sgd")) {
        const auto& g = s.at("sgd");
        detail::check_keys(g, {"learning_rate", "momentum", "weight_decay"}, "stage2.sgd");
        detail::maybe_get(g, "learning_rate", c.stage2.sgd.learning_rate);
        detail::maybe_get(g, "momentum", c.stage2.sgd.momentum);
        detail::maybe_get(g, "weight_decay", c.stage2.sgd.weight_decay);
      }
    }
    detail::maybe_get(j, "test_samples_per_class", c.test_samples_per_class);
    detail::maybe_get(j, "seeds", c.seeds);
    detail::maybe_get(j, "output_dir", c.output_dir);
    c.validate();
    return c;
  }

  // Result-determining fields only: the seed list and output directory select
  // what to run and where to put it, not what a single (config, seed) run
  // computes, so they stay out of the hash.
  json semantic_json() const {
    json j = to_json();
    j.erase("seeds");
    j.erase("output_dir");
    return j;
  }

  std::string config_hash() const {
    const std::uint64_t h = fnv1a64(semantic_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }
};

// ---------------------------------------------------------------------------
// Run results
// ---------------------------------------------------------------------------

struct RunResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EvalRecord> records;
  double avg_incremental_accuracy = 0.0;
  std::vector<double> acs;                 // per task, after stage 2
  std::vector<double> confident_fraction;  // per task, final stage-1 epoch
  std::vector<double> pseudo_precision;    // per task, final stage-1 epoch
  double wall_clock_seconds = 0.0;
  json config_json;  // fully resolved config with seeds = [seed]

  // Deterministic part of the result; wall clock is excluded so byte-for-byte
  // reproducibility can be asserted on re-execution.
  json payload_json() const {
    json j;
    j["config"] = config_json;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    json tasks = json::array();
    for (const auto& r : records) {
      tasks.push_back({{"task_id", r.task_id},
                       {"cumulative_accuracy", r.cumulative_accuracy},
                       {"per_class_accuracy", r.per_class_accuracy},
                       {"num_test_samples", r.num_test_samples}});
    }
    j["tasks"] = std::move(tasks);
    j["average_incremental_accuracy"] = avg_incremental_accuracy;
    j["acs"] = acs;
    j["confident_fraction"] = confident_fraction;
    j["pseudo_label_precision"] = pseudo_precision;
    return j;
  }

  json to_json() const {
    json j = payload_json();
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }

  static RunResult from_json(const json& j) {
    RunResult r;
    r.config_json = j.at("config");
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tasks")) {
      EvalRecord rec;
      rec.task_id = t.at("task_id").get<int>();
      rec.cumulative_accuracy = t.at("cumulative_accuracy").get<double>();
      rec.per_class_accuracy = t.at("per_class_accuracy").get<Vector>();
      rec.num_test_samples = t.at("num_test_samples").get<int>();
      r.records.push_back(std::move(rec));
    }
    r.avg_incremental_accuracy = j.at("average_incremental_accuracy").get<double>();
    r.acs = j.at("acs").get<std::vector<double>>();
    r.confident_fraction = j.at("confident_fraction").get<std::vector<double>>();
    r.pseudo_precision = j.at("pseudo_label_precision").get<std::vector<double>>();
    if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
  }
};

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

inline RunResult run_single_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  StreamConfig stream_cfg = cfg.stream;
  stream_cfg.seed = seed;
  TaskStream stream = generate_stream(stream_cfg);
  const std::vector<int> full_class_order = stream.class_order();

  Rng model_init = Rng::derive(seed, "model-init");
  Model model = Model::make(stream_cfg.feature_dim, cfg.model.feature_map, cfg.model.trainable,
                            static_cast<std::size_t>(cfg.model.feature_dim),
                            cfg.model.feature_map == FeatureMapKind::identity ? nullptr : &model_init);
  StatsBank bank;

  RunResult result;
  result.seed = seed;
  result.config_hash = cfg.config_hash();
  {
    ExperimentConfig resolved = cfg;
    resolved.seeds = {seed};
    result.config_json = resolved.to_json();
  }

  const bool use_unlabeled = cfg.pipeline != Pipeline::labeled_only;
  std::vector<int> seen_classes;

  for (int t = 1; t <= stream_cfg.num_tasks; ++t) {
    // Take ownership of this task's raw data; it is destroyed at the end of
    // the iteration, so later tasks can only see the model and the bank. The
    // class-set metadata stays behind for test-set synthesis.
    TaskData task = std::move(stream.tasks[t - 1]);
    stream.tasks[t - 1] = TaskData{};
    stream.tasks[t - 1].task_id = task.task_id;
    stream.tasks[t - 1].class_set = task.class_set;

    model.add_head(task.class_set.size());
    seen_classes.insert(seen_classes.end(), task.class_set.begin(), task.class_set.end());

    Stage1Rngs rngs = Stage1Rngs::derive(seed, t);
    const Stage1Options opts{use_unlabeled, cfg.ablation.c2_class_weights};
    const Stage1Report rep = train_task_stage1(model, task, cfg.threshold, cfg.stage1, opts, rngs);

    const auto stats_source = (use_unlabeled && cfg.ablation.c3_unlabeled_stats)
                                  ? expand_label_set(task, model, threshold_at(cfg.threshold, t))
                                  : labeled_features(task, model);
    for (auto& s : estimate_stats(stats_source, task.class_set, cfg.stage2.cov_regularizer,
                                  cfg.stage2.diagonal_covariance)) {
      bank.insert(std::move(s));
    }

    Rng align_rng = Rng::derive(seed, "stage2-align", static_cast<std::uint64_t>(t));
    align_classifiers(model, bank, seen_classes, cfg.stage2, align_rng);

    result.confident_fraction.push_back(rep.final_confident_fraction());
    result.pseudo_precision.push_back(rep.final_pseudo_precision());
    result.acs.push_back(task.unlabeled.empty() ? 0.0 : average_confidence_score(model, task.unlabeled));

    std::vector<std::vector<Sample>> test_sets;
    test_sets.reserve(t);
    for (int i = 1; i <= t; ++i) {
      Rng test_rng = Rng::derive(seed, "test-set", static_cast<std::uint64_t>(i));
      test_sets.push_back(sample_task_test_set(stream, i, cfg.test_samples_per_class, test_rng));
    }
    result.records.push_back(cumulative_accuracy(model, test_sets, seen_classes));
    log_debug("seed " + std::to_string(seed) + " task " + std::to_string(t) + ": cumulative accuracy " +
              std::to_string(result.records.back().cumulative_accuracy));
  }

  result.avg_incremental_accuracy = average_incremental_accuracy(result.records);
  result.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunResult> results;
  results.reserve(cfg.seeds.size());
  for (const auto seed : cfg.seeds) {
    results.push_back(run_single_seed(cfg, seed));
    log_info("pipeline " + detail::pipeline_name(cfg.pipeline) + " seed " + std::to_string(seed) +
             ": avg incremental accuracy " + std::to_string(results.back().avg_incremental_accuracy));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Persistence (one JSON document per (config hash, seed), atomic writes)
// ---------------------------------------------------------------------------

inline std::string result_filename(const std::string& config_hash, std::uint64_t seed) {
  return "result_" + config_hash + "_seed" + std::to_string(seed) + ".json";
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path save_result(const RunResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / result_filename(result.config_hash, result.seed);
  atomic_write_text(path, result.to_json().dump(2) + "\n");
  return path;
}

inline RunResult load_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open result file '" + path.string() + "'");
  json j;
  in >> j;
  return RunResult::from_json(j);
}

inline std::vector<RunResult> load_results_dir(const std::string& dir) {
  std::vector<RunResult> results;
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().filename().string().rfind("result_", 0) == 0) {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) results.push_back(load_result(p));
  return results;
}

// Re-runs a persisted result from its embedded config and seed.
inline RunResult reexecute(const RunResult& persisted) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(persisted.config_json);
  return run_single_seed(cfg, persisted.seed);
}

// ---------------------------------------------------------------------------
// Threshold sweep
// ---------------------------------------------------------------------------

struct SweepGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<std::vector<double>> mean_accuracy;  // [alpha][beta]
};

inline SweepGrid sweep_threshold(const ExperimentConfig& base, const std::vector<double>& alphas,
                                 const std::vector<double>& betas,
                                 std::vector<RunResult>* collect_results = nullptr) {
  if (alphas.empty() || betas.empty()) throw std::invalid_argument("sweep_threshold: empty grid");
  if (base.pipeline != Pipeline::tacle || !base.ablation.c1_adaptive_threshold)
    throw std::invalid_argument("sweep_threshold: base config must be the tacle pipeline with c1 on");

  SweepGrid grid;
  grid.alphas = alphas;
  grid.betas = betas;
  for (const double a : alphas) {
    std::vector<double> row;
    for (const double b : betas) {
      ExperimentConfig cfg = base;
      cfg.threshold = ThresholdSchedule::make_adaptive(a, b);
      cfg.validate();
      auto results = run_experiment(cfg);
      double mean = 0.0;
      for (const auto& r : results) mean += r.avg_incremental_accuracy;
      row.push_back(mean / static_cast<double>(results.size()));
      if (collect_results != nullptr) {
        for (auto& r : results) collect_results->push_back(std::move(r));
      }
    }
    grid.mean_accuracy.push_back(std::move(row));
  }
  return grid;
}

inline void write_sweep_csv(const SweepGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_csv: cannot open '" + path + "'");
  out << "alpha";
  for (const double b : grid.betas) out << ",beta=" << detail::format_double(b);
  out << "\n";
  for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
    out << detail::format_double(grid.alphas[i]);
    for (const double v : grid.mean_accuracy[i]) out << ',' << detail::format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_sweep_csv: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

enum class PlotKind { cumulative_curve, acs_curve, sweep_grid };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "cumulative_curve") return PlotKind::cumulative_curve;
  if (s == "acs_curve") return PlotKind::acs_curve;
  if (s == "sweep_grid") return PlotKind::sweep_grid;
  throw std::invalid_argument("unknown plot kind '" + s + "'");
}

namespace detail {

inline std::pair<double, double> mean_stddev(const std::vector<double>& v) {
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());  // population variance, matching "mean +- stddev over seeds"
  return {mean, std::sqrt(var)};
}

inline void emit_curve_csv(const std::vector<RunResult>& results, bool use_acs, const std::string& path) {
  std::set<std::string> hashes;
  for (const auto& r : results) hashes.insert(r.config_hash);
  if (hashes.size() != 1)
    throw std::invalid_argument("emit_plot_data: curve output requires results from a single config, found " +
                                std::to_string(hashes.size()) + " distinct config hashes");
  const std::size_t num_tasks = use_acs ? results.front().acs.size() : results.front().records.size();
  for (const auto& r : results) {
    if ((use_acs ? r.acs.size() : r.records.size()) != num_tasks)
      throw std::invalid_argument("emit_plot_data: inconsistent task counts across results");
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_plot_data: cannot open '" + path + "'");
  out << "task,mean,stddev\n";
  for (std::size_t t = 0; t < num_tasks; ++t) {
    std::vector<double> vals;
    vals.reserve(results.size());
    for (const auto& r : results) vals.push_back(use_acs ? r.acs[t] : r.records[t].cumulative_accuracy);
    const auto [mean, sd] = mean_stddev(vals);
    out << (t + 1) << ',' << format_double(mean) << ',' << format_double(sd) << "\n";
  }
  if (!out) throw std::runtime_error("emit_plot_data: write failed for '" + path + "'");
}

inline void emit_sweep_csv_from_results(const std::vector<RunResult>& results, const std::string& path) {
  std::map<std::pair<double, double>, std::vector<double>> cells;
  for (const auto& r : results) {
    const auto& thr = r.config_json.at("threshold");
    if (thr.at("kind").get<std::string>() != "adaptive")
      throw std::invalid_argument("emit_plot_data: sweep_grid requires adaptive-threshold results");
    cells[{thr.at("alpha").get<double>(), thr.at("beta").get<double>()}].push_back(r.avg_incremental_accuracy);
  }
  std::set<double> alpha_set, beta_set;
  for (const auto& [key, vals] : cells) {
    alpha_set.insert(key.first);
    beta_set.insert(key.second);
  }
  SweepGrid grid;
  grid.alphas.assign(alpha_set.begin(), alpha_set.end());
  grid.betas.assign(beta_set.begin(), beta_set.end());
  for (const double a : grid.alphas) {
    std::vector<double> row;
    for (const double b : grid.betas) {
      const auto it = cells.find({a, b});
      if (it == cells.end())
        throw std::invalid_argument("emit_plot_data: sweep grid is incomplete at alpha=" + std::to_string(a) +
                                    ", beta=" + std::to_string(b));
      row.push_back(mean_stddev(it->second).first);
    }
    grid.mean_accuracy.push_back(std::move(row));
  }
  write_sweep_csv(grid, path);
}

}  // namespace detail

inline void emit_plot_data(const std::vector<RunResult>& results, PlotKind kind, const std::string& path) {
  if (results.empty()) throw std::invalid_argument("emit_plot_data: no results");
  switch (kind) {
    case PlotKind::cumulative_curve: detail::emit_curve_csv(results, /*use_acs=*/false, path); break;
    case PlotKind::acs_curve: detail::emit_curve_csv(results, /*use_acs=*/true, path); break;
    case PlotKind::sweep_grid: detail::emit_sweep_csv_from_results(results, path); break;
  }
}

}  // namespace tacle
