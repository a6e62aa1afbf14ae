#include "drfit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "drfit/error.hpp"
#include "drfit/random.hpp"

namespace drfit {

namespace {

constexpr double kLogFloor = 1e-8;

struct BatchView {
  Matrix x;
  std::vector<int> y;
};

BatchView gather(const LabeledDataset& d, std::span<const std::size_t> idx) {
  BatchView b{d.features.select_rows(idx), {}};
  b.y.reserve(idx.size());
  for (std::size_t i : idx) b.y.push_back(d.labels[i]);
  return b;
}

std::vector<double> losses_of(const MlpParams& p, const LabeledDataset& d) {
  return per_example_loss(mlp_forward(p, d.features), d.labels);
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void check_finite(std::span<const double> v, const char* what, std::size_t epoch) {
  for (double x : v)
    if (!std::isfinite(x)) throw TrainingError(std::string("non-finite ") + what, epoch);
}

// theta <- theta - lr [ (1/|S|) sum_S w_i grad l_i + (lambda/n) theta ]
void theta_step(MlpParams& p, const BatchView& b, std::span<const double> w, double lambda,
                std::size_t n_total, double lr, std::size_t epoch) {
  const ForwardCache c = mlp_forward(p, b.x);
  check_finite(per_example_loss(c, b.y), "loss", epoch);
  const double s = static_cast<double>(b.y.size());
  auto g = weighted_backward(p, c, b.y, w, lambda * s / static_cast<double>(n_total));
  check_finite(g, "gradient", epoch);
  auto theta = p.flatten();
  const double step = lr / s;
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= step * g[j];
  p.assign(theta);
}

double accuracy_or_nan(const MlpParams& p, const LabeledDataset* d) {
  if (d == nullptr || d->size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return evaluate(p, *d);
}

class Runner {
 public:
  Runner(const TrainData& data, const ClassPartition& part, const DrFitConfig& cfg,
         const TrainConfig& tc, MlpParams init)
      : data_(data), part_(part), cfg_(cfg), tc_(tc), params_(std::move(init)) {
    if (data_.train == nullptr || data_.train->size() == 0)
      throw InputError("training set is empty");
    data_.train->validate();
    cfg_.validate(data_.train->num_classes);
    tc_.validate();
    if (part_.size() != data_.train->size())
      throw ShapeError("class partition does not cover the training set");
    if (params_.input_dim() != data_.train->features.cols())
      throw ShapeError("network input width does not match the features");
    omega_.resize(data_.train->size());
    for (std::size_t i = 0; i < omega_.size(); ++i) omega_[i] = cfg_.rho_for(data_.train->labels[i]);
  }

  TrainResult run() {
    const LabeledDataset& train = *data_.train;
    record(0);
    for (std::size_t epoch = 1; epoch <= tc_.epochs; ++epoch) {
      try {
        run_epoch(epoch);
      } catch (const NumericError& e) {
        throw TrainingError(e.what(), epoch);
      }
      record(epoch);
    }
    TrainResult out{params_, {}, std::move(trace_)};
    if (tc_.solver == Solver::analytic) {
      out.weights = analytic_weights(losses_of(params_, train), part_, cfg_);
    } else {
      out.weights.omega = omega_;
    }
    return out;
  }

 private:
  void run_epoch(std::size_t epoch) {
    const LabeledDataset& train = *data_.train;
    const auto batches =
        stratified_batches(part_, tc_.batch_size, derive_seed(tc_.seed, epoch));
    const bool update_omega = tc_.solver == Solver::numeric && epoch > tc_.burn_in &&
                              epoch % tc_.update_frequency == 0;
    for (const auto& idx : batches) {
      const BatchView b = gather(train, idx);
      std::vector<double> w(idx.size());
      if (tc_.solver == Solver::analytic) {
        const ForwardCache c = mlp_forward(params_, b.x);
        const auto loss = per_example_loss(c, b.y);
        check_finite(loss, "loss", epoch);
        const auto bp = ClassPartition::from_labels(b.y, train.num_classes).present_only();
        w = analytic_weights(loss, bp, cfg_).omega;
      } else {
        for (std::size_t i = 0; i < idx.size(); ++i) w[i] = omega_[idx[i]];
      }
      theta_step(params_, b, w, cfg_.lambda, train.size(), tc_.theta_lr, epoch);
      if (update_omega) {
        const auto loss = per_example_loss(mlp_forward(params_, b.x), b.y);
        check_finite(loss, "loss", epoch);
        omega_update_step(w, loss, b.y, cfg_, tc_.omega_lr, epoch);
        for (std::size_t i = 0; i < idx.size(); ++i) omega_[idx[i]] = w[i];
      }
    }
  }

  void record(std::size_t epoch) {
    const LabeledDataset& train = *data_.train;
    const ForwardCache c = mlp_forward(params_, train.features);
    const auto loss = per_example_loss(c, train.labels);
    check_finite(loss, "loss", epoch);
    EpochRecord r;
    r.epoch = epoch;
    r.train_loss = mean(loss);
    const double sq = params_.squared_norm();
    switch (tc_.solver) {
      case Solver::analytic:
        r.objective = reduced_loss(loss, sq, part_, cfg_);
        break;
      case Solver::numeric:
        r.objective = full_objective(loss, omega_, sq, cfg_);
        break;
      case Solver::plain: {
        double s = 0.0;
        for (std::size_t i = 0; i < loss.size(); ++i) s += omega_[i] * loss[i];
        r.objective = s + 0.5 * cfg_.lambda * sq;
        break;
      }
    }
    const auto pred = predict(c);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == train.labels[i];
    r.train_accuracy = static_cast<double>(hit) / static_cast<double>(pred.size());
    r.validation_accuracy = accuracy_or_nan(params_, data_.validation);
    r.test_accuracy = accuracy_or_nan(params_, data_.test);
    trace_.records.push_back(r);
  }

  const TrainData& data_;
  const ClassPartition& part_;
  const DrFitConfig& cfg_;
  const TrainConfig tc_;
  MlpParams params_;
  std::vector<double> omega_;
  TrainTrace trace_;
};

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (update_frequency == 0) throw ConfigError("update_frequency must be at least 1");
  if (!(theta_lr > 0.0)) throw ConfigError("theta_lr must be positive");
  if (!(omega_lr >= 0.0)) throw ConfigError("omega_lr must be nonnegative");
}

void omega_update_step(std::span<double> omega, std::span<const double> loss,
                       std::span<const int> labels, const DrFitConfig& cfg, double beta,
                       std::size_t epoch) {
  if (omega.size() != loss.size() || omega.size() != labels.size())
    throw ShapeError("weight, loss and label vectors differ in length");
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const double w = omega[i] - beta * (loss[i] + cfg.alpha * std::log(std::max(omega[i], kLogFloor)));
    omega[i] = w > 0.0 ? w : 0.0;
  }
  std::vector<int> present;
  for (int y : labels)
    if (std::find(present.begin(), present.end(), y) == present.end()) present.push_back(y);
  std::sort(present.begin(), present.end());
  for (int c : present) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < omega.size(); ++i)
      if (labels[i] == c) sum += omega[i], ++count;
    if (!(sum > 0.0))
      throw TrainingError("all weights of class " + std::to_string(c) +
                              " in a batch were clipped to zero",
                          epoch);
    const double factor = cfg.rho_for(c) * static_cast<double>(count) / sum;
    for (std::size_t i = 0; i < omega.size(); ++i)
      if (labels[i] == c) omega[i] *= factor;
  }
}

std::vector<std::vector<std::size_t>> stratified_batches(const ClassPartition& part,
                                                         std::size_t batch_size,
                                                         std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  const std::size_t n = part.size();
  if (n == 0) return {};
  const std::size_t count = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> batches(count);
  Rng rng(seed);
  std::size_t pos = 0;
  for (const auto& g : part.groups()) {
    std::vector<std::size_t> members = g.members;
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i : members) batches[pos++ % count].push_back(i);
  }
  return batches;
}

double evaluate(const MlpParams& params, const LabeledDataset& data) {
  if (data.size() == 0) throw InputError("cannot evaluate on an empty dataset");
  const auto pred = predict(mlp_forward(params, data.features));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

TrainResult train(const TrainData& data, const ClassPartition& part, const DrFitConfig& cfg,
                  const TrainConfig& tc, MlpParams init) {
  return Runner(data, part, cfg, tc, std::move(init)).run();
}

TrainResult train_analytic(const TrainData& data, const ClassPartition& part,
                           const DrFitConfig& cfg, TrainConfig tc, MlpParams init) {
  tc.solver = Solver::analytic;
  return train(data, part, cfg, tc, std::move(init));
}

TrainResult train_numeric(const TrainData& data, const ClassPartition& part,
                          const DrFitConfig& cfg, TrainConfig tc, MlpParams init) {
  tc.solver = Solver::numeric;
  return train(data, part, cfg, tc, std::move(init));
}

TrainResult train_plain(const TrainData& data, const ClassPartition& part,
                        const DrFitConfig& cfg, TrainConfig tc, MlpParams init) {
  tc.solver = Solver::plain;
  return train(data, part, cfg, tc, std::move(init));
}

}  // namespace drfit
