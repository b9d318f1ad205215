#include "pvcmc/experiment.hpp"

#include "pvcmc/metrics.hpp"
#include "pvcmc/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace pvcmc {

namespace {

using nlohmann::json;

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_cell(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f±%.4f", mean, stddev);
  return buf;
}

std::string format_fraction(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

std::string sanitize(std::string text) {
  for (char& c : text)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return text;
}

void read_hyperparameters(const json& j, Hyperparameters<double>& hp) {
  hp.lambda1 = j.value("lambda1", hp.lambda1);
  hp.lambda2 = j.value("lambda2", hp.lambda2);
  hp.lambda3 = j.value("lambda3", hp.lambda3);
  hp.tau = j.value("tau", hp.tau);
  hp.alpha = j.value("alpha", hp.alpha);
  hp.k_latent = j.value("k_latent", hp.k_latent);
  hp.enable_probability_alignment =
      j.value("enable_probability_alignment", hp.enable_probability_alignment);
  hp.log_eps = j.value("log_eps", hp.log_eps);
}

void read_train_config(const json& j, TrainConfig& train) {
  read_hyperparameters(j, train.hp);
  train.epochs_step1 = j.value("epochs_step1", train.epochs_step1);
  train.epochs_step3 = j.value("epochs_step3", train.epochs_step3);
  train.learning_rate = j.value("learning_rate", train.learning_rate);
  train.seed = j.value("seed", train.seed);
  train.tolerance = j.value("tolerance", train.tolerance);
  train.trust_imputed = j.value("trust_imputed", train.trust_imputed);
  train.reimpute_each_iteration =
      j.value("reimpute_each_iteration", train.reimpute_each_iteration);
  train.knn_k = j.value("knn_k", train.knn_k);
  train.knn_distance_weighted = j.value("knn_distance_weighted", train.knn_distance_weighted);
  if (j.contains("hidden_dims")) {
    train.hidden_dims.clear();
    for (const auto& d : j["hidden_dims"]) train.hidden_dims.push_back(d.get<Index>());
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }

  ExperimentConfig config;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    if (d.contains("manifest") && !d["manifest"].is_null())
      config.manifest = d["manifest"].get<std::string>();
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      config.synthetic.k_clusters = s.value("clusters", config.synthetic.k_clusters);
      config.synthetic.n = s.value("n", config.synthetic.n);
      config.synthetic.separation = s.value("separation", config.synthetic.separation);
      config.synthetic.seed = s.value("seed", config.synthetic.seed);
      if (s.contains("dims")) {
        config.synthetic.dims.clear();
        for (const auto& dim : s["dims"]) config.synthetic.dims.push_back(dim.get<Index>());
      }
    }
  }
  if (j.contains("paired_fractions")) {
    config.paired_fractions.clear();
    for (const auto& f : j["paired_fractions"])
      config.paired_fractions.push_back(f.get<double>());
  }
  config.repeats = j.value("repeats", config.repeats);
  config.base_seed = j.value("base_seed", config.base_seed);
  config.jobs = j.value("jobs", config.jobs);
  config.train.hp.n_clusters = j.value("clusters", config.synthetic.k_clusters);
  if (j.contains("train")) read_train_config(j["train"], config.train);
  return config;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.check();
  MultiViewDataset dataset;
  if (config.manifest) {
    dataset = load_dataset(*config.manifest);
  } else {
    // Synthetic data goes through the same default preprocessing as
    // manifest loads: min-max per column.
    const auto& s = config.synthetic;
    dataset = generate_synthetic(s.k_clusters, s.n, s.dims, s.separation, s.seed);
    for (auto& view : dataset.views) view = normalize(view, NormalizeMethod::kMinMax);
  }
  return run_experiment(config, dataset);
}

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const MultiViewDataset& dataset) {
  config.check();
  require(dataset.labels.has_value(),
          "experiment: dataset has no ground-truth labels; ACC/NMI are undefined");

  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config;

  const int n_fractions = static_cast<int>(config.paired_fractions.size());
  const int n_cells = n_fractions * config.repeats;
  report.runs.resize(static_cast<std::size_t>(n_cells));

  std::atomic<int> next_cell{0};
  const auto worker = [&]() {
    while (true) {
      const int cell = next_cell.fetch_add(1);
      if (cell >= n_cells) return;
      const int f_index = cell / config.repeats;
      const int repeat = cell % config.repeats;
      const double fraction = config.paired_fractions[static_cast<std::size_t>(f_index)];
      const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(repeat);

      RunResult run;
      run.fraction = fraction;
      run.repeat = repeat;
      try {
        const PairingMask mask =
            make_pairing_mask(dataset.n_samples(), fraction, dataset.n_views(), seed);
        TrainConfig train_config = config.train;
        train_config.seed = seed;
        const TrainResult trained = train(dataset, mask, train_config);
        const Mat affinity = affinity_from_z(trained.z);
        const IVec predicted =
            spectral_cluster(affinity, config.train.hp.n_clusters, seed);
        run.acc_value = acc(*dataset.labels, predicted);
        run.nmi_value = nmi(*dataset.labels, predicted);
        run.final_weights = trained.weights;
        run.train_metadata = trained.metadata;
        run.ok = true;
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
      report.runs[static_cast<std::size_t>(cell)] = std::move(run);
    }
  };

  const int jobs = std::min(config.jobs, n_cells);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }

  // Design metadata is identical across runs; take it from the first
  // completed one (cell order, so the choice is deterministic).
  for (const auto& run : report.runs) {
    if (run.ok) {
      report.metadata = run.train_metadata;
      break;
    }
  }
  report.metadata.erase("paired_fraction");
  report.metadata.erase("missing_rate_as_complement");
  report.metadata.erase("seed");
  report.metadata["protocol"] = "paired-fraction sweep x seeded repeats";
  report.metadata["repeats"] = std::to_string(config.repeats);
  report.metadata["base_seed"] = std::to_string(config.base_seed);
  report.metadata["std_convention"] = "population";
  report.metadata["per_repeat_seed"] = "base_seed + repeat";

  for (int f_index = 0; f_index < n_fractions; ++f_index) {
    FractionSummary summary;
    summary.fraction = config.paired_fractions[static_cast<std::size_t>(f_index)];
    double sum_acc = 0.0, sum_nmi = 0.0;
    for (int r = 0; r < config.repeats; ++r) {
      const RunResult& run = report.runs[static_cast<std::size_t>(f_index * config.repeats + r)];
      if (!run.ok) {
        summary.failed += 1;
        if (summary.first_error.empty()) summary.first_error = run.error;
        continue;
      }
      summary.completed += 1;
      sum_acc += run.acc_value;
      sum_nmi += run.nmi_value;
    }
    if (summary.completed > 0) {
      const double n = summary.completed;
      summary.mean_acc = sum_acc / n;
      summary.mean_nmi = sum_nmi / n;
      double var_acc = 0.0, var_nmi = 0.0;
      for (int r = 0; r < config.repeats; ++r) {
        const RunResult& run = report.runs[static_cast<std::size_t>(f_index * config.repeats + r)];
        if (!run.ok) continue;
        var_acc += (run.acc_value - summary.mean_acc) * (run.acc_value - summary.mean_acc);
        var_nmi += (run.nmi_value - summary.mean_nmi) * (run.nmi_value - summary.mean_nmi);
      }
      summary.std_acc = std::sqrt(var_acc / n);
      summary.std_nmi = std::sqrt(var_nmi / n);
    }
    report.summaries.push_back(summary);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_runs_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# pvcmc experiment runs\n";
  for (const auto& [key, value] : report.metadata)
    out << "# " << key << "=" << sanitize(value) << "\n";
  const int n_views =
      report.runs.empty() || report.runs.front().final_weights.size() == 0
          ? 0
          : static_cast<int>(report.runs.front().final_weights.size());
  out << "paired_fraction,repeat,status,acc,nmi";
  for (int v = 0; v < n_views; ++v) out << ",weight" << v;
  out << ",error\n";
  for (const auto& run : report.runs) {
    out << format_full(run.fraction) << ',' << run.repeat << ','
        << (run.ok ? "ok" : "failed") << ',';
    if (run.ok) {
      out << format_full(run.acc_value) << ',' << format_full(run.nmi_value);
      for (int v = 0; v < n_views; ++v)
        out << ',' << (v < run.final_weights.size() ? format_full(run.final_weights[v]) : "");
    } else {
      out << ',';
      for (int v = 0; v < n_views; ++v) out << ',';
    }
    out << ',' << sanitize(run.error) << "\n";
  }
  return out.str();
}

std::string report_summary_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# pvcmc experiment summary\n";
  for (const auto& [key, value] : report.metadata)
    out << "# " << key << "=" << sanitize(value) << "\n";
  out << "paired_fraction,completed,failed,mean_acc,std_acc,mean_nmi,std_nmi\n";
  for (const auto& s : report.summaries) {
    out << format_full(s.fraction) << ',' << s.completed << ',' << s.failed << ','
        << format_full(s.mean_acc) << ',' << format_full(s.std_acc) << ','
        << format_full(s.mean_nmi) << ',' << format_full(s.std_nmi) << "\n";
  }
  return out.str();
}

std::string report_markdown(const ExperimentReport& report) {
  std::vector<FractionSummary> ordered = report.summaries;
  std::sort(ordered.begin(), ordered.end(),
            [](const FractionSummary& a, const FractionSummary& b) {
              return a.fraction > b.fraction;
            });

  std::ostringstream out;
  out << "# PVC-MC experiment report\n\n";
  const auto table = [&out, &ordered](const std::string& title, const bool use_acc) {
    out << "## " << title << "\n\n";
    out << "| Method \\ Paired fraction |";
    for (const auto& s : ordered) out << ' ' << format_fraction(s.fraction) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < ordered.size(); ++i) out << "---|";
    out << "\n| PVC-MC |";
    for (const auto& s : ordered) {
      if (s.failed > 0) {
        out << " FAILED(" << s.failed << " of " << (s.completed + s.failed)
            << " runs: " << sanitize(s.first_error) << ") |";
      } else {
        out << ' '
            << (use_acc ? format_cell(s.mean_acc, s.std_acc)
                        : format_cell(s.mean_nmi, s.std_nmi))
            << " |";
      }
    }
    out << "\n\n";
  };
  table("ACC", true);
  table("NMI", false);

  out << "## Metadata\n\n";
  for (const auto& [key, value] : report.metadata)
    out << "- " << key << ": " << value << "\n";
  return out.str();
}

void write_report_files(const ExperimentReport& report, const std::filesystem::path& out_dir,
                        const std::string& stem, const std::string& format) {
  std::filesystem::create_directories(out_dir);
  const auto write = [&out_dir](const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << content;
  };
  if (format == "csv" || format == "both") {
    write(stem + "_runs.csv", report_runs_csv(report));
    write(stem + "_summary.csv", report_summary_csv(report));
  }
  if (format == "markdown" || format == "both") {
    write(stem + ".md", report_markdown(report));
  }
  if (format != "csv" && format != "markdown" && format != "both")
    throw InvalidArgument("unknown report format '" + format + "'");
}

}  // namespace pvcmc
