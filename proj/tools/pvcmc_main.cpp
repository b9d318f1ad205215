#include "pvcmc/dataio.hpp"
#include "pvcmc/experiment.hpp"
#include "pvcmc/metrics.hpp"
#include "pvcmc/serialize.hpp"
#include "pvcmc/spectral.hpp"
#include "pvcmc/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace pvcmc;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct CommonOptions {
  std::string config_path;
  std::string manifest;
  std::string out_dir = "pvcmc_out";
  std::string format = "both";

  std::vector<double> paired_fractions;
  std::optional<int> repeats;
  std::optional<std::uint64_t> seed;
  std::optional<Index> k_latent;
  std::optional<int> clusters;
  std::optional<double> lambda1, lambda2, lambda3, alpha, tau;
  std::optional<int> knn_k;
  std::optional<int> jobs;
  std::optional<int> epochs_step1, epochs_step3;
  std::optional<double> learning_rate;
  std::optional<bool> trust_imputed;
  std::optional<bool> enable_prob_align;

  // synthetic dataset knobs
  std::optional<Index> synth_n;
  std::optional<double> separation;
  std::vector<Index> dims;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON config mirroring the experiment settings");
  cmd->add_option("--manifest", opt.manifest, "dataset manifest (JSON); omits the synthetic set");
  cmd->add_option("--out-dir", opt.out_dir, "output directory");
  cmd->add_option("--format", opt.format, "report format: csv, markdown, or both");
  cmd->add_option("--paired-fraction", opt.paired_fractions,
                  "paired fractions to run (a.k.a. integrity ratios)");
  cmd->add_option("--repeats", opt.repeats, "seeded repetitions per fraction");
  cmd->add_option("--seed", opt.seed, "base seed");
  cmd->add_option("--k-latent", opt.k_latent, "latent dimension");
  cmd->add_option("--clusters", opt.clusters, "number of clusters K");
  cmd->add_option("--lambda1", opt.lambda1, "self-expression trade-off");
  cmd->add_option("--lambda2", opt.lambda2, "contrastive trade-off");
  cmd->add_option("--lambda3", opt.lambda3, "clustering-loss trade-off");
  cmd->add_option("--alpha", opt.alpha, "view-weight sharpness");
  cmd->add_option("--tau", opt.tau, "contrastive temperature");
  cmd->add_option("--knn-k", opt.knn_k, "imputation neighbor count");
  cmd->add_option("--jobs", opt.jobs, "parallel cells");
  cmd->add_option("--epochs-step1", opt.epochs_step1, "pretraining epochs");
  cmd->add_option("--epochs-step3", opt.epochs_step3, "dual-optimization outer iterations");
  cmd->add_option("--learning-rate", opt.learning_rate, "Adam learning rate");
  cmd->add_option("--trust-imputed", opt.trust_imputed,
                  "imputed entries become reconstruction targets");
  cmd->add_option("--enable-probability-alignment", opt.enable_prob_align,
                  "fold the probability-alignment loss into the objective");
  cmd->add_option("--n", opt.synth_n, "synthetic: sample count");
  cmd->add_option("--separation", opt.separation, "synthetic: cluster separation");
  cmd->add_option("--dims", opt.dims, "synthetic: per-view feature dims");
}

ExperimentConfig resolve_config(const CommonOptions& opt) {
  ExperimentConfig config;
  if (!opt.config_path.empty()) config = parse_experiment_config(opt.config_path);
  if (!opt.manifest.empty()) config.manifest = opt.manifest;
  if (!opt.paired_fractions.empty()) config.paired_fractions = opt.paired_fractions;
  if (opt.repeats) config.repeats = *opt.repeats;
  if (opt.seed) config.base_seed = *opt.seed;
  if (opt.jobs) config.jobs = *opt.jobs;
  if (opt.k_latent) config.train.hp.k_latent = *opt.k_latent;
  if (opt.clusters) {
    config.train.hp.n_clusters = *opt.clusters;
    config.synthetic.k_clusters = *opt.clusters;
  }
  if (opt.lambda1) config.train.hp.lambda1 = *opt.lambda1;
  if (opt.lambda2) config.train.hp.lambda2 = *opt.lambda2;
  if (opt.lambda3) config.train.hp.lambda3 = *opt.lambda3;
  if (opt.alpha) config.train.hp.alpha = *opt.alpha;
  if (opt.tau) config.train.hp.tau = *opt.tau;
  if (opt.knn_k) config.train.knn_k = *opt.knn_k;
  if (opt.epochs_step1) config.train.epochs_step1 = *opt.epochs_step1;
  if (opt.epochs_step3) config.train.epochs_step3 = *opt.epochs_step3;
  if (opt.learning_rate) config.train.learning_rate = *opt.learning_rate;
  if (opt.trust_imputed) config.train.trust_imputed = *opt.trust_imputed;
  if (opt.enable_prob_align)
    config.train.hp.enable_probability_alignment = *opt.enable_prob_align;
  if (opt.synth_n) config.synthetic.n = *opt.synth_n;
  if (opt.separation) config.synthetic.separation = *opt.separation;
  if (!opt.dims.empty()) config.synthetic.dims = opt.dims;
  if (opt.seed) config.synthetic.seed = *opt.seed;
  return config;
}

MultiViewDataset resolve_dataset(const ExperimentConfig& config) {
  if (config.manifest) return load_dataset(*config.manifest);
  const auto& s = config.synthetic;
  MultiViewDataset dataset = generate_synthetic(s.k_clusters, s.n, s.dims, s.separation, s.seed);
  for (auto& view : dataset.views) view = normalize(view, NormalizeMethod::kMinMax);
  return dataset;
}

int cmd_run(const CommonOptions& opt) {
  const ExperimentConfig config = resolve_config(opt);
  const ExperimentReport report = run_experiment(config);
  write_report_files(report, opt.out_dir, "report", opt.format);
  std::printf("wrote report to %s (wall time %.2fs)\n", opt.out_dir.c_str(),
              report.wall_seconds);
  for (const auto& s : report.summaries)
    std::printf("fraction %.3g: ACC %.4f+-%.4f  NMI %.4f+-%.4f  (%d ok, %d failed)\n",
                s.fraction, s.mean_acc, s.std_acc, s.mean_nmi, s.std_nmi, s.completed,
                s.failed);
  for (const auto& s : report.summaries)
    if (s.failed > 0) return kExitRuntimeError;
  return kExitOk;
}

int cmd_train(const CommonOptions& opt, bool diagnostics) {
  ExperimentConfig config = resolve_config(opt);
  require(opt.paired_fractions.size() <= 1, "train: pass at most one --paired-fraction");
  const double fraction = opt.paired_fractions.empty() ? config.paired_fractions.front()
                                                       : opt.paired_fractions.front();

  const MultiViewDataset dataset = resolve_dataset(config);
  TrainConfig train_config = config.train;
  train_config.seed = config.base_seed;
  const PairingMask mask =
      make_pairing_mask(dataset.n_samples(), fraction, dataset.n_views(), config.base_seed);

  const TrainResult result = train(dataset, mask, train_config);
  const Mat affinity = affinity_from_z(result.z);
  const IVec predicted = spectral_cluster(affinity, train_config.hp.n_clusters, config.base_seed);

  const std::filesystem::path out_dir(opt.out_dir);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "z.csv", matrix_csv(result.z));
  write_text_file(out_dir / "history.csv", history_csv(result));
  save_checkpoint(result, out_dir / "checkpoint.json");
  {
    std::ostringstream weights;
    for (Index v = 0; v < result.weights.size(); ++v) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g\n", result.weights[v]);
      weights << buf;
    }
    write_text_file(out_dir / "weights.csv", weights.str());
  }
  {
    std::ostringstream labels;
    for (Index i = 0; i < predicted.size(); ++i) labels << predicted[i] << "\n";
    write_text_file(out_dir / "predicted_labels.csv", labels.str());
  }
  if (diagnostics) {
    write_text_file(out_dir / "imputation_neighbors.csv", imputation_csv(result));
    VectorX<double> degrees = affinity.rowwise().sum();
    Mat laplacian = Mat::Identity(affinity.rows(), affinity.rows());
    for (Index i = 0; i < affinity.rows(); ++i)
      for (Index j = 0; j < affinity.cols(); ++j)
        laplacian(i, j) -= affinity(i, j) / std::sqrt(std::max(degrees[i], 1e-12) *
                                                      std::max(degrees[j], 1e-12));
    laplacian = ((laplacian + laplacian.transpose()) / 2.0).eval();
    write_text_file(out_dir / "spectral_diagnostics.csv",
                    spectral_csv(eigensolve_symmetric(laplacian, train_config.hp.n_clusters)));
  }

  if (dataset.labels) {
    std::printf("ACC %.4f  NMI %.4f\n", acc(*dataset.labels, predicted),
                nmi(*dataset.labels, predicted));
  }
  std::printf("wrote training artifacts to %s\n", opt.out_dir.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& truth_path, const std::string& predicted_path) {
  const auto read_labels = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open label file " + path);
    std::vector<int> values;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      values.push_back(std::stoi(line));
    }
    require(!values.empty(), "empty label file " + path);
    IVec v(static_cast<Index>(values.size()));
    for (Index i = 0; i < v.size(); ++i) v[i] = values[static_cast<std::size_t>(i)];
    return v;
  };
  const IVec truth = read_labels(truth_path);
  const IVec predicted = read_labels(predicted_path);
  std::printf("ACC %.6f\nNMI %.6f\n", acc(truth, predicted), nmi(truth, predicted));
  return kExitOk;
}

int cmd_synth(const CommonOptions& opt) {
  const ExperimentConfig config = resolve_config(opt);
  const auto& s = config.synthetic;
  const MultiViewDataset dataset =
      generate_synthetic(s.k_clusters, s.n, s.dims, s.separation, s.seed);
  const auto manifest = save_dataset(dataset, opt.out_dir, "synthetic");
  std::printf("wrote dataset manifest %s\n", manifest.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PVC-MC: partial multi-view clustering benchmark harness"};
  app.require_subcommand(1);

  CommonOptions opt;
  bool diagnostics = false;
  std::string eval_truth, eval_predicted;

  CLI::App* run = app.add_subcommand("run", "paired-fraction sweep with seeded repeats");
  add_common_flags(run, opt);
  CLI::App* train_cmd = app.add_subcommand("train", "single training run; dumps Z and logs");
  add_common_flags(train_cmd, opt);
  train_cmd->add_flag("--diagnostics", diagnostics,
                      "also dump imputation neighbors and spectral diagnostics");
  CLI::App* eval_cmd = app.add_subcommand("eval", "ACC/NMI between two label files");
  eval_cmd->add_option("truth", eval_truth, "ground-truth labels, one per line")->required();
  eval_cmd->add_option("predicted", eval_predicted, "predicted labels, one per line")->required();
  CLI::App* synth = app.add_subcommand("synth", "emit a synthetic multi-view dataset");
  add_common_flags(synth, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(opt);
    if (train_cmd->parsed()) return cmd_train(opt, diagnostics);
    if (eval_cmd->parsed()) return cmd_eval(eval_truth, eval_predicted);
    if (synth->parsed()) return cmd_synth(opt);
    return kExitConfigError;
  } catch (const pvcmc::InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kExitRuntimeError;
  }
}
