#pragma once

#include "pvcmc/common.hpp"
#include "pvcmc/dataio.hpp"
#include "pvcmc/trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pvcmc {

struct SyntheticSpec {
  int k_clusters = 3;
  Index n = 150;
  std::vector<Index> dims{5, 5};
  double separation = 10.0;
  std::uint64_t seed = 0;
};

/// One benchmark protocol: dataset x paired fractions x seeded repeats.
struct ExperimentConfig {
  std::optional<std::string> manifest;  // CSV manifest; synthetic spec otherwise
  SyntheticSpec synthetic;
  std::vector<double> paired_fractions{0.1, 0.3, 0.5, 0.7, 0.9};
  int repeats = 10;
  std::uint64_t base_seed = 0;
  int jobs = 1;
  TrainConfig train;

  void check() const {
    require(repeats >= 1, "experiment: repeats must be >= 1");
    require(!paired_fractions.empty(), "experiment: no paired fractions");
    for (const double f : paired_fractions)
      require(f > 0.0 && f <= 1.0, "experiment: paired fractions must lie in (0, 1]");
    require(jobs >= 1, "experiment: jobs must be >= 1");
    train.check();
  }
};

/// Parses the JSON mirror of ExperimentConfig (all fields optional).
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);

struct RunResult {
  double fraction = 0.0;
  int repeat = 0;
  bool ok = false;
  std::string error;
  double acc_value = 0.0;
  double nmi_value = 0.0;
  Vec final_weights;
  std::map<std::string, std::string> train_metadata;
};

struct FractionSummary {
  double fraction = 0.0;
  int completed = 0;
  int failed = 0;
  std::string first_error;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  double mean_nmi = 0.0;
  double std_nmi = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RunResult> runs;           // fraction-major, repeat-minor
  std::vector<FractionSummary> summaries;
  std::map<std::string, std::string> metadata;
  double wall_seconds = 0.0;  // informational; never serialized into reports
};

/// Runs the sweep: for fraction f and repeat r the mask, training, and
/// spectral seeds all equal base_seed + r. Pipeline failures mark the run
/// instead of aborting the sweep. Deterministic for a fixed config.
ExperimentReport run_experiment(const ExperimentConfig& config);

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const MultiViewDataset& dataset);

/// Runs CSV: one row per (fraction, repeat), full 17-digit precision,
/// metadata as leading comment lines.
std::string report_runs_csv(const ExperimentReport& report);

/// Summary CSV: one row per fraction with mean/std (population) aggregates.
std::string report_summary_csv(const ExperimentReport& report);

/// Markdown tables in the benchmark layout: one method row, one column per
/// fraction in descending order, cells formatted mean±std at 4 decimals.
std::string report_markdown(const ExperimentReport& report);

void write_report_files(const ExperimentReport& report,
                        const std::filesystem::path& out_dir,
                        const std::string& stem, const std::string& format);

}  // namespace pvcmc
