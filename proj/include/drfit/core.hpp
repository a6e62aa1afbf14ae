#pragma once

// Entropy-penalised observation weights and the reduced loss obtained by
// eliminating them.
//
// With n_k = rho_k |C_k|, minimising
//   sum_i w_i l_i + alpha sum_i (w_i log w_i - w_i) + lambda/2 |theta|^2
// over w subject to sum_{i in C_k} w_i = n_k gives
//   w_i = n_k exp(-l_i/alpha) / sum_{j in C_k} exp(-l_j/alpha)
// and the value
//   h = -alpha sum_k n_k log sum_{i in C_k} exp(-l_i/alpha) + lambda/2 |theta|^2
// up to the constant alpha sum_k (n_k log n_k - n_k).

#include <cstddef>
#include <span>
#include <vector>

#include "drfit/matrix.hpp"

namespace drfit {

struct DrFitConfig {
  double alpha = 1.0;
  double lambda = 0.0;
  /// Per-class budget scale, indexed by label. Empty means 1 for every class.
  std::vector<double> rho;

  double rho_for(int label) const;
  /// Throws ConfigError on alpha <= 0, lambda < 0, rho_k <= 0, or fewer rho
  /// entries than num_classes.
  void validate(std::size_t num_classes) const;
};

class ClassPartition {
 public:
  struct Group {
    int label;
    std::vector<std::size_t> members;  // ascending
  };

  /// One group per label in [0, num_classes), including empty ones.
  static ClassPartition from_labels(std::span<const int> labels, std::size_t num_classes);

  /// Same partition without the empty groups.
  ClassPartition present_only() const;

  const std::vector<Group>& groups() const noexcept { return groups_; }
  std::size_t size() const noexcept { return size_; }

 private:
  std::vector<Group> groups_;
  std::size_t size_ = 0;
};

struct ObservationWeights {
  std::vector<double> omega;
};

/// n_k = rho_k |C_k| for each group, in group order.
std::vector<double> class_budgets(const ClassPartition& part, const DrFitConfig& cfg);

/// Closed-form minimiser of the weight problem. Throws ConfigError on an empty group.
ObservationWeights analytic_weights(std::span<const double> loss, const ClassPartition& part,
                                    const DrFitConfig& cfg);

double reduced_loss(std::span<const double> loss, double theta_sq_norm,
                    const ClassPartition& part, const DrFitConfig& cfg);

/// sum_i w_i grad l_i + lambda theta, with w from analytic_weights(loss).
/// Row i of `grads` is grad l_i.
std::vector<double> reduced_loss_grad(std::span<const double> loss, const Matrix& grads,
                                      std::span<const double> theta, const ClassPartition& part,
                                      const DrFitConfig& cfg);

/// sum_i (w_i log w_i - w_i), with 0 log 0 = 0. Throws InputError on negative w.
double entropy_penalty(std::span<const double> omega);

double full_objective(std::span<const double> loss, std::span<const double> omega,
                      double theta_sq_norm, const DrFitConfig& cfg);

/// alpha sum_k (n_k log n_k - n_k): full_objective at the analytic weights minus reduced_loss.
double dropped_constant(const ClassPartition& part, const DrFitConfig& cfg);

}  // namespace drfit
