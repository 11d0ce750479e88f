// Command-line front end: full experiment runs, threshold sweeps, stream
// generation and plot-data extraction. See README.md for the config format.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tacle/tacle.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  nlohmann::json j;
  in >> j;
  return j;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (seeds.empty()) throw std::runtime_error("--seeds: no seeds given");
  return seeds;
}

tacle::ExperimentConfig make_config(const std::string& config_path, const std::string& pipeline,
                                    const std::string& seeds, const std::string& out_dir) {
  nlohmann::json j = load_json_file(config_path);
  if (!pipeline.empty()) {
    // A pipeline override resets the ablation flags and threshold to that
    // pipeline's defaults; edit the config file for finer control.
    j["pipeline"] = tacle::detail::pipeline_name(tacle::detail::parse_pipeline(pipeline));
    j.erase("ablation");
    j.erase("threshold");
  }
  if (!seeds.empty()) j["seeds"] = parse_seed_list(seeds);
  if (!out_dir.empty()) j["output_dir"] = out_dir;
  return tacle::ExperimentConfig::from_json(j);
}

int cmd_run(const std::string& config_path, const std::string& pipeline, const std::string& seeds,
            const std::string& out_dir) {
  const auto cfg = make_config(config_path, pipeline, seeds, out_dir);
  const auto results = tacle::run_experiment(cfg);
  double mean = 0.0;
  for (const auto& r : results) {
    const auto path = tacle::save_result(r, cfg.output_dir);
    std::cout << "seed " << r.seed << ": avg incremental accuracy " << r.avg_incremental_accuracy << "  -> "
              << path.string() << "\n";
    mean += r.avg_incremental_accuracy;
  }
  mean /= static_cast<double>(results.size());
  double var = 0.0;
  for (const auto& r : results) var += (r.avg_incremental_accuracy - mean) * (r.avg_incremental_accuracy - mean);
  var /= static_cast<double>(results.size());
  std::cout << "config " << cfg.config_hash() << ": mean avg incremental accuracy " << mean << " +- "
            << std::sqrt(var) << " over " << results.size() << " seed(s)\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& alphas_csv, const std::string& betas_csv,
              const std::string& seeds, const std::string& out_csv) {
  auto cfg = make_config(config_path, "", seeds, "");
  auto parse_doubles = [](const std::string& csv) {
    std::vector<double> vals;
    std::string cur;
    for (char c : csv + ",") {
      if (c == ',') {
        if (!cur.empty()) vals.push_back(std::stod(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    return vals;
  };
  std::vector<tacle::RunResult> all_results;
  const auto grid = tacle::sweep_threshold(cfg, parse_doubles(alphas_csv), parse_doubles(betas_csv), &all_results);
  for (const auto& r : all_results) tacle::save_result(r, cfg.output_dir);
  const std::string path = out_csv.empty() ? (std::filesystem::path(cfg.output_dir) / "sweep.csv").string() : out_csv;
  std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                          ? "."
                                          : std::filesystem::path(path).parent_path().string());
  tacle::write_sweep_csv(grid, path);
  std::cout << "sweep grid (" << grid.alphas.size() << "x" << grid.betas.size() << ") written to " << path << "\n";
  return 0;
}

int cmd_gen_stream(const std::string& config_path, const std::string& out_path) {
  const auto cfg = make_config(config_path, "", "", "");
  const auto stream = tacle::generate_stream(cfg.stream);
  tacle::write_stream_csv(stream, out_path);
  std::size_t labeled = 0, unlabeled = 0;
  for (const auto& t : stream.tasks) {
    labeled += t.labeled.size();
    unlabeled += t.unlabeled.size();
  }
  std::cout << "stream with " << stream.tasks.size() << " tasks (" << labeled << " labeled / " << unlabeled
            << " unlabeled samples) written to " << out_path << "\n";
  return 0;
}

int cmd_plot_data(const std::string& results_dir, const std::string& kind, const std::string& out_csv) {
  const auto results = tacle::load_results_dir(results_dir);
  if (results.empty()) throw std::runtime_error("no result files found in '" + results_dir + "'");
  const std::string path =
      out_csv.empty() ? (std::filesystem::path(results_dir) / (kind + ".csv")).string() : out_csv;
  tacle::emit_plot_data(results, tacle::parse_plot_kind(kind), path);
  std::cout << kind << " data for " << results.size() << " result(s) written to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tacle: exemplar-free semi-supervised class-incremental learning on feature streams"};
  app.require_subcommand(1);

  std::string config_path, pipeline, seeds, out, alphas, betas, results_dir, kind;

  auto* run = app.add_subcommand("run", "run an experiment for every configured seed");
  run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--pipeline", pipeline, "override: tacle|fixed|labeled (resets ablation/threshold to defaults)");
  run->add_option("--seeds", seeds, "override seed list, e.g. 0,1,2");
  run->add_option("--out", out, "override output directory");

  auto* sweep = app.add_subcommand("sweep", "grid sweep over the adaptive-threshold parameters");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--alphas", alphas, "comma-separated alpha values")->required();
  sweep->add_option("--betas", betas, "comma-separated beta values")->required();
  sweep->add_option("--seeds", seeds, "override seed list");
  sweep->add_option("--out", out, "output CSV path (default <output_dir>/sweep.csv)");

  auto* gen = app.add_subcommand("gen-stream", "generate a synthetic stream and write it as CSV");
  gen->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output CSV path")->required();

  auto* plot = app.add_subcommand("plot-data", "aggregate persisted results into plot-ready CSV");
  plot->add_option("--results", results_dir, "directory with result_*.json files")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--kind", kind, "cumulative_curve|acs_curve|sweep_grid")->required();
  plot->add_option("--out", out, "output CSV path (default <results>/<kind>.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, pipeline, seeds, out);
    if (sweep->parsed()) return cmd_sweep(config_path, alphas, betas, seeds, out);
    if (gen->parsed()) return cmd_gen_stream(config_path, out);
    if (plot->parsed()) return cmd_plot_data(results_dir, kind, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
