#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "drfit/core.hpp"
#include "drfit/data.hpp"
#include "drfit/dataset.hpp"
#include "drfit/eval.hpp"
#include "drfit/mlp.hpp"
#include "drfit/theory.hpp"
#include "drfit/trainer.hpp"

namespace drfit {

enum class ExperimentKind {
  mnist_1v7,
  synthetic_train,
  theory_1d,
  theory_mv,
  theory_counterexample,
  hyper_sweep
};

/// rates: rho from the configured flip rates and observed class sizes.
/// confusion: rho from the clean labels of the validation split.
/// uniform: rho = 1 for every class.
enum class RhoMode { rates, confusion, uniform };

struct DataConfig {
  std::string train_images = "mnist/train-images-idx3-ubyte.gz";  // relative to the data root
  std::string train_labels = "mnist/train-labels-idx1-ubyte.gz";
  std::string test_images = "mnist/t10k-images-idx3-ubyte.gz";
  std::string test_labels = "mnist/t10k-labels-idx1-ubyte.gz";
  std::string snapshot_dir;  // when set, train/validation/test CSVs are read from here instead
  std::size_t train_size = 2000;
  double validation_fraction = 0.1;
  std::size_t synthetic_n = 400;
  std::size_t synthetic_test_n = 2000;
  std::vector<double> synthetic_mu{1.0, 1.0};
  double synthetic_sigma = 1.0;  // isotropic standard deviation
  std::uint64_t seed = 1;        // subsample and split
};

struct ModelConfig {
  std::vector<std::size_t> hidden{8};
  OutputKind output = OutputKind::softmax;
};

struct TheoryConfig {
  std::string dist = "gaussian";  // gaussian | uniform (theory-1d)
  double mean = 1.0, variance = 1.0;
  double a = -1.0, b = 3.0;
  double q = 0.2;
  std::string mv_case = "gaussian";  // gaussian | boxes (theory-mv)
  std::vector<double> cov{1.0, 0.3, 0.3, 1.0};  // row-major 2x2
};

struct SweepConfig {
  ExperimentKind base = ExperimentKind::mnist_1v7;
  std::vector<double> alphas{0.25, 0.5, 1.0, 2.0};
  std::vector<double> lambdas{0.0};
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::mnist_1v7;
  DrFitConfig drfit;
  TrainConfig train;
  NoiseSpec noise{{0.3, 0.1}, 1};
  RhoMode rho_mode = RhoMode::rates;
  DataConfig data;
  ModelConfig model;
  TheoryConfig theory;
  SweepConfig sweep;
  std::size_t replications = 1;
  std::uint64_t seed = 1;  // replication r trains with seed + r
  std::string output_dir = "runs";
  std::size_t workers = 1;

  /// Throws ConfigError on a missing or inconsistent field.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON and
/// falls back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// FNV-1a over the canonical (key-sorted) JSON, excluding output_dir and
/// workers. 16 hex digits.
std::string config_digest(const ExperimentConfig& cfg);

std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& s);

/// $DRFIT_DATA_ROOT if set, else the directory fixed at build time.
std::filesystem::path data_root();

struct PreparedData {
  LabeledDataset train, validation, test;
  std::vector<double> rho;
  std::size_t input_dim = 0;
};

/// Builds the train/validation/test sets for a training experiment (noise is
/// injected into train and validation only) and resolves rho.
PreparedData prepare_data(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct RunOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  bool crashed = false;
  double wall_seconds = 0.0;
  TrainTrace trace;
  std::vector<double> omega;
  std::optional<double> auc;  // when mislabel masks are known
};

/// One seeded training run. Failures are captured in the outcome.
RunOutcome run_once(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed);

struct TrainingSummary {
  std::string digest;
  std::vector<RunOutcome> runs;
  std::vector<EpochRecord> mean_curve;  // over successful runs
  std::vector<double> mean_omega;
  double mean_final_test = 0.0;
  double mean_peak_test = 0.0;  // maximum over epochs of the mean test accuracy
  double mean_final_validation = 0.0;
  std::optional<double> mean_auc;   // mean over runs of the per-run AUC
  std::optional<double> pooled_auc;  // AUC of the mean weights
  bool threshold_pair_90 = false;    // on the mean weights
  std::size_t failed = 0, crashed = 0;
};

/// Runs all replications on a worker pool and, when `write` is set, writes
/// the run directories and aggregate CSVs under cfg.output_dir.
TrainingSummary run_training(const ExperimentConfig& cfg, const std::filesystem::path& root,
                             bool write = true);

struct SweepPoint {
  double alpha = 0.0, lambda = 0.0;
  double mean_validation = 0.0;
  std::size_t ok = 0, crashed = 0;
};

struct SweepResult {
  std::vector<SweepPoint> grid;  // in grid order: alpha major, lambda minor
  std::optional<SweepPoint> best;
};

/// Picks the grid point with the best mean final validation accuracy over
/// non-crashed runs. Points where no run survives are excluded. Ties go to the
/// larger alpha, then the larger lambda.
std::optional<SweepPoint> select_best(const std::vector<SweepPoint>& grid);

SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& root, bool write = true);

/// Theory report for a theory-* experiment; written as report.json and
/// report.csv under cfg.output_dir/<digest> when `write` is set.
std::vector<theory::ReportEntry> run_theory(const ExperimentConfig& cfg, bool write = true);

struct DetectReport {
  double auc = 0.0;
  bool threshold_pair_90 = false;
};

/// Re-runs the weight analysis on a stored weights.csv and writes the
/// histogram and separation CSVs next to it.
DetectReport run_detect(const std::filesystem::path& weights_csv, const std::filesystem::path& out_dir);

/// Loads, filters, subsamples, splits and corrupts the data as `train` would,
/// and writes train.csv, validation.csv, test.csv and rho.json to out_dir.
void run_mnist_prep(const ExperimentConfig& cfg, const std::filesystem::path& root,
                    const std::filesystem::path& out_dir);

/// metrics.csv columns: epoch,train_loss,objective,train_accuracy,validation_accuracy,test_accuracy
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& records);

}  // namespace drfit
