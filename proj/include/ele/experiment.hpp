#pragma once

// End-to-end runs: corpus, output embedder, input regressor, decoding under every
// (seed, strategy, candidate ratio) cell, and the CSV/text report.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ele/contrastive.hpp"
#include "ele/dataset.hpp"
#include "ele/decoder.hpp"
#include "ele/embedder.hpp"
#include "ele/ged.hpp"
#include "ele/regressor.hpp"
#include "ele/synthetic.hpp"

namespace ele {

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{0};
  int train_size = 2000;
  int val_size = 200;
  int test_size = 500;
  /// Auxiliary output graphs drawn for pre-training; 0 disables pre-training.
  int pretrain_size = 0;
  SyntheticConfig corpus{.unique = true};  // count and seed are set per run
  std::vector<double> ratios{1.0};
  std::vector<DecodeStrategy> strategies{DecodeStrategy::Candidate};
  EmbedderConfig embedder{2, 64, 64};
  ContrastiveConfig contrastive;
  RegressorConfig regressor{2, 64, 4, 128, 64, 25};
  RegressionTrainConfig regression;
  PgdConfig pgd;
  std::string cache_dir;

  void validate() const;
  /// Keys mirror the TOML layout documented in the README; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& tree);
  static ExperimentConfig load(const std::string& path);
};

struct Splits {
  Dataset train, val, test;
  GraphSpace space;
};

/// Disjoint train/val/test records drawn from one seeded corpus.
Splits make_splits(const ExperimentConfig& config, std::uint64_t seed);

struct TrainedModels {
  EmbedderParams<float> embedder;
  RegressorParams<float> regressor;
  std::vector<ContrastiveMetrics> contrastive_log;
  std::vector<RegressionMetrics> regression_log;
};

TrainedModels train_models(const ExperimentConfig& config, const Splits& splits, std::uint64_t seed);

/// `max(1, round(ratio * n))` distinct rows drawn uniformly with `seed`, in ascending order.
std::vector<std::size_t> candidate_subset(std::size_t n, double ratio, std::uint64_t seed);

struct CellResult {
  std::uint64_t seed = 0;
  DecodeStrategy strategy = DecodeStrategy::Candidate;
  double ratio = 1.0;
  std::size_t candidates = 0;
  double mean_ged = 0.0;
  double std_ged = 0.0;
  double mean_ged_unlabeled = 0.0;
  std::size_t perfect = 0;
  double mean_objective = 0.0;
  std::string error;  // empty when the cell succeeded
};

struct SeedResult {
  std::uint64_t seed = 0;
  double train_ged = 0.0;     // candidate selection over all training outputs, on the training inputs
  double test_ged = 0.0;      // same decoder on the test inputs
  double baseline_ged = 0.0;  // modal training graph predicted for every test input
  double contrastive_val_loss = 0.0;
  double regression_val_loss = 0.0;
};

struct ExperimentReport {
  std::vector<SeedResult> seeds;
  std::vector<CellResult> cells;

  void write_grid(std::ostream& out) const;
  void write_seeds(std::ostream& out) const;
  /// Mean and standard deviation across seeds per (strategy, ratio).
  void write_summary(std::ostream& out) const;
  /// Ratio against one column per strategy; `perfect` selects the perfect-count axis.
  void write_plot(std::ostream& out, bool perfect) const;
  void write_text(std::ostream& out) const;
  /// grid.csv, seeds.csv, summary.csv, plot_ged.csv, plot_perfect.csv, report.txt.
  void save(const std::string& dir) const;
};

/// Runs every seed; a failing cell is recorded in its row and the run continues.
ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

}  // namespace ele
