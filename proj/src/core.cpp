#include "drfit/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drfit/error.hpp"

namespace drfit {

namespace {

void check_cover(std::span<const double> loss, const ClassPartition& part) {
  if (loss.size() != part.size()) {
    throw ShapeError("loss vector has " + std::to_string(loss.size()) +
                     " entries, partition covers " + std::to_string(part.size()));
  }
}

double group_min(std::span<const double> loss, const ClassPartition::Group& g) {
  double m = loss[g.members.front()];
  for (std::size_t i : g.members) m = std::min(m, loss[i]);
  return m;
}

}  // namespace

double DrFitConfig::rho_for(int label) const {
  if (rho.empty()) return 1.0;
  if (label < 0 || static_cast<std::size_t>(label) >= rho.size())
    throw ConfigError("no rho entry for class " + std::to_string(label));
  return rho[static_cast<std::size_t>(label)];
}

void DrFitConfig::validate(std::size_t num_classes) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be nonnegative");
  if (!rho.empty() && rho.size() < num_classes)
    throw ConfigError("rho has " + std::to_string(rho.size()) + " entries for " +
                      std::to_string(num_classes) + " classes");
  for (double r : rho)
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("every rho must be positive");
}

ClassPartition ClassPartition::from_labels(std::span<const int> labels, std::size_t num_classes) {
  ClassPartition p;
  p.size_ = labels.size();
  p.groups_.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) p.groups_[k].label = static_cast<int>(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw InputError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    p.groups_[static_cast<std::size_t>(labels[i])].members.push_back(i);
  }
  return p;
}

ClassPartition ClassPartition::present_only() const {
  ClassPartition p;
  p.size_ = size_;
  for (const auto& g : groups_)
    if (!g.members.empty()) p.groups_.push_back(g);
  return p;
}

std::vector<double> class_budgets(const ClassPartition& part, const DrFitConfig& cfg) {
  std::vector<double> n;
  n.reserve(part.groups().size());
  for (const auto& g : part.groups())
    n.push_back(cfg.rho_for(g.label) * static_cast<double>(g.members.size()));
  return n;
}

ObservationWeights analytic_weights(std::span<const double> loss, const ClassPartition& part,
                                    const DrFitConfig& cfg) {
  check_cover(loss, part);
  const auto budget = class_budgets(part, cfg);
  ObservationWeights w{std::vector<double>(loss.size(), 0.0)};
  for (std::size_t k = 0; k < part.groups().size(); ++k) {
    const auto& g = part.groups()[k];
    if (g.members.empty()) throw ConfigError("class " + std::to_string(g.label) + " is empty");
    const double m = group_min(loss, g);
    double z = 0.0;
    for (std::size_t i : g.members) z += std::exp(-(loss[i] - m) / cfg.alpha);
    for (std::size_t i : g.members) w.omega[i] = budget[k] * std::exp(-(loss[i] - m) / cfg.alpha) / z;
  }
  return w;
}

double reduced_loss(std::span<const double> loss, double theta_sq_norm,
                    const ClassPartition& part, const DrFitConfig& cfg) {
  check_cover(loss, part);
  const auto budget = class_budgets(part, cfg);
  double h = 0.0;
  for (std::size_t k = 0; k < part.groups().size(); ++k) {
    const auto& g = part.groups()[k];
    if (g.members.empty()) continue;
    const double m = group_min(loss, g);
    double z = 0.0;
    for (std::size_t i : g.members) z += std::exp(-(loss[i] - m) / cfg.alpha);
    h += budget[k] * (m - cfg.alpha * std::log(z));
  }
  return h + 0.5 * cfg.lambda * theta_sq_norm;
}

std::vector<double> reduced_loss_grad(std::span<const double> loss, const Matrix& grads,
                                      std::span<const double> theta, const ClassPartition& part,
                                      const DrFitConfig& cfg) {
  if (grads.rows() != loss.size() || grads.cols() != theta.size())
    throw ShapeError("per-example gradients must be " + std::to_string(loss.size()) + "x" +
                     std::to_string(theta.size()));
  const auto w = analytic_weights(loss, part, cfg);
  std::vector<double> g(theta.size(), 0.0);
  for (std::size_t i = 0; i < loss.size(); ++i) {
    const auto row = grads.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += w.omega[i] * row[j];
  }
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += cfg.lambda * theta[j];
  return g;
}

double entropy_penalty(std::span<const double> omega) {
  double s = 0.0;
  for (double w : omega) {
    if (!(w >= 0.0)) throw InputError("observation weights must be nonnegative");
    if (w > 0.0) s += w * std::log(w) - w;
  }
  return s;
}

double full_objective(std::span<const double> loss, std::span<const double> omega,
                      double theta_sq_norm, const DrFitConfig& cfg) {
  if (loss.size() != omega.size()) throw ShapeError("loss and weight vectors differ in length");
  double data = 0.0;
  for (std::size_t i = 0; i < loss.size(); ++i) data += omega[i] * loss[i];
  return data + cfg.alpha * entropy_penalty(omega) + 0.5 * cfg.lambda * theta_sq_norm;
}

double dropped_constant(const ClassPartition& part, const DrFitConfig& cfg) {
  double c = 0.0;
  for (double n : class_budgets(part, cfg))
    if (n > 0.0) c += n * std::log(n) - n;
  return cfg.alpha * c;
}

}  // namespace drfit
