#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "drfit/core.hpp"
#include "drfit/dataset.hpp"
#include "drfit/mlp.hpp"

namespace drfit {

/// analytic: gradient descent on the reduced loss. numeric: alternating
/// theta / weight updates with clipping and per-class renormalisation.
/// plain: weights fixed at rho.
enum class Solver { analytic, numeric, plain };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double theta_lr = 0.1;
  double omega_lr = 0.05;
  std::size_t burn_in = 3;
  std::size_t update_frequency = 1;
  std::uint64_t seed = 1;
  Solver solver = Solver::analytic;

  /// Throws ConfigError on batch_size == 0, update_frequency == 0 or a
  /// non-positive learning rate (omega_lr may be 0).
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the state before training
  double train_loss = 0;  // mean cross-entropy on the observed training labels
  double objective = 0;   // reduced loss, full objective or weighted loss, per solver
  double train_accuracy = 0;
  double validation_accuracy = 0;  // NaN when no validation set is given
  double test_accuracy = 0;        // NaN when no test set is given
};

struct TrainTrace {
  std::vector<EpochRecord> records;  // records[0] is the initial state, then one per epoch
};

struct TrainData {
  const LabeledDataset* train = nullptr;
  const LabeledDataset* validation = nullptr;
  const LabeledDataset* test = nullptr;
};

struct TrainResult {
  MlpParams params;
  ObservationWeights weights;
  TrainTrace trace;
};

/// Dispatches on tc.solver. `part` must partition data.train by label.
/// Throws TrainingError (with the epoch) when a loss or gradient goes non-finite.
TrainResult train(const TrainData& data, const ClassPartition& part, const DrFitConfig& cfg,
                  const TrainConfig& tc, MlpParams init);

TrainResult train_analytic(const TrainData& data, const ClassPartition& part,
                           const DrFitConfig& cfg, TrainConfig tc, MlpParams init);
TrainResult train_numeric(const TrainData& data, const ClassPartition& part,
                          const DrFitConfig& cfg, TrainConfig tc, MlpParams init);
TrainResult train_plain(const TrainData& data, const ClassPartition& part,
                        const DrFitConfig& cfg, TrainConfig tc, MlpParams init);

/// One weight step on a batch: w <- w - beta (l + alpha log max(w, 1e-8)),
/// negatives clipped to 0, then each class present in the batch rescaled to
/// mean rho_c. `labels`, `loss` and `omega` are the batch entries.
/// Throws TrainingError if a class's weights are all zero after clipping.
void omega_update_step(std::span<double> omega, std::span<const double> loss,
                       std::span<const int> labels, const DrFitConfig& cfg, double beta,
                       std::size_t epoch);

/// Per-epoch batches, stratified: each class is shuffled and dealt round-robin
/// so every batch holds about the same class mix.
std::vector<std::vector<std::size_t>> stratified_batches(const ClassPartition& part,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed);

/// Fraction of examples whose arg-max prediction equals the observed label.
/// Throws InputError on an empty dataset.
double evaluate(const MlpParams& params, const LabeledDataset& data);

}  // namespace drfit
