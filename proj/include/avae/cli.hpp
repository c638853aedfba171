#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "avae/config.hpp"
#include "avae/data.hpp"
#include "avae/evaluator.hpp"

namespace avae {

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
  std::filesystem::path data;    // CSV file or IDX image file
  std::filesystem::path labels;  // IDX label file (idx format only)
  std::string format = "csv";    // csv | idx | synthetic
  std::string name;              // dataset name; defaults to the input stem
  std::size_t window = 10;
  double overlap = 0.5;
  double train_fraction = 0.8;
  std::size_t limit = 0;         // keep only the first N samples (0: all)
  std::size_t samples = 1000;    // synthetic only
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct PreparedData {
  std::string name;
  Dataset train;
  Dataset test;
  std::string manifest_json;
};

/// Reads, windows (CSV), remaps labels to 0..K-1, splits and normalises a
/// dataset, then writes train/test archives and manifest.json to `out`.
/// Vector data is z-scored with training statistics; images keep [0, 1].
PreparedData prepare_dataset(const PrepareOptions& opts);

PreparedData load_prepared(const std::filesystem::path& dir);

// ---------------------------------------------------------------- runs

/// `<out>/<dataset>/<ablation>/<rate>/<seed>/`, rate in percent.
std::filesystem::path run_directory(const RunConfig& cfg, const std::string& dataset);

/// Output root: cfg.out, else $AVAE_OUT_DIR, else "runs".
std::filesystem::path output_root(const RunConfig& cfg);

struct RunResult {
  std::filesystem::path dir;
  MetricsReport metrics;
};

/// Trains one configuration and writes config.txt, checkpoint, trace.csv,
/// metrics.json, metrics.csv and roc.csv into its run directory. With
/// `resume`, continues from an existing checkpoint in that directory.
RunResult run_training(const RunConfig& cfg, bool resume = false, std::ostream* log = nullptr);

/// Recomputes metrics for a finished run directory.
MetricsReport evaluate_run(const std::filesystem::path& run_dir);

/// Writes the embedding CSV of one split ("train" or "test") of a run.
void export_run_embeddings(const std::filesystem::path& run_dir, const std::string& split,
                           const std::filesystem::path& path);

// ---------------------------------------------------------------- sweep

struct SweepOptions {
  std::vector<double> rates;  // in (0, 1]
  std::vector<Ablation> ablations;
  std::size_t seeds = 3;      // seeds cfg.seed, cfg.seed + 1, ...
  std::size_t jobs = 1;
};

struct SweepRow {
  double gamma = 0.0;
  Ablation ablation = Ablation::avae;
  std::uint64_t seed = 0;
  bool ok = false;
  double accuracy = 0.0;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::filesystem::path aggregate_csv;
  std::filesystem::path summary_csv;
  std::size_t failures() const;
};

/// Runs the grid, continuing past failed runs, and writes aggregate.csv
/// (one row per run) and summary.csv (mean±std percent per rate and
/// ablation) under `<out>/<dataset>/`.
SweepResult run_sweep(const RunConfig& base, const SweepOptions& opts, std::ostream* log = nullptr);

/// "84.91±0.52" from accuracies in [0, 1] (sample standard deviation).
std::string mean_std_cell(const std::vector<double>& accuracies);

std::vector<double> parse_rate_list(const std::string& text);
std::vector<Ablation> parse_ablation_list(const std::string& text);

}  // namespace avae
