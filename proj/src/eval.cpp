#include "drfit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "drfit/error.hpp"

namespace drfit {

namespace {

void check_lengths(std::span<const double> omega, const std::vector<bool>& mask) {
  if (omega.size() != mask.size()) throw ShapeError("weights and mislabel mask differ in length");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

WeightHistogram weight_histogram(std::span<const double> omega, const std::vector<bool>& mask,
                                 std::size_t bins) {
  check_lengths(omega, mask);
  if (bins < 2) throw InputError("need at least two histogram bins");
  double top = 0.0;
  for (double w : omega) top = std::max(top, w);
  if (top <= 0.0) top = 1.0;
  WeightHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = top * static_cast<double>(b) / static_cast<double>(bins);
  h.correct.assign(bins, 0);
  h.mislabeled.assign(bins, 0);
  for (std::size_t i = 0; i < omega.size(); ++i) {
    auto b = static_cast<std::size_t>(std::max(0.0, omega[i]) / top * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    if (mask[i]) {
      ++h.mislabeled[b];
      h.mislabeled_empty = false;
    } else {
      ++h.correct[b];
      h.correct_empty = false;
    }
  }
  return h;
}

SeparationCurve separation_curve(std::span<const double> omega, const std::vector<bool>& mask,
                                 std::span<const double> thresholds) {
  check_lengths(omega, mask);
  const auto bad = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  const std::size_t good = mask.size() - bad;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SeparationCurve c;
  for (double t : thresholds) {
    std::size_t kept = 0, caught = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
      if (mask[i]) caught += omega[i] < t;
      else kept += omega[i] >= t;
    }
    c.points.push_back({t, good ? static_cast<double>(kept) / good : nan,
                        bad ? static_cast<double>(caught) / bad : nan});
  }
  return c;
}

std::vector<double> threshold_grid(std::span<const double> omega, std::size_t count) {
  if (count < 2) throw InputError("threshold grid needs at least two points");
  double top = 0.0;
  for (double w : omega) top = std::max(top, w);
  top = top > 0.0 ? std::nextafter(top, std::numeric_limits<double>::infinity()) : 1.0;
  std::vector<double> t(count);
  for (std::size_t i = 0; i < count; ++i) t[i] = top * static_cast<double>(i) / static_cast<double>(count - 1);
  return t;
}

std::vector<double> mean_weights(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) return {};
  std::vector<double> m(runs.front().size(), 0.0);
  for (const auto& r : runs) {
    if (r.size() != m.size()) throw ShapeError("runs have different weight counts");
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += r[i];
  }
  for (double& v : m) v /= static_cast<double>(runs.size());
  return m;
}

bool has_threshold_pair(const SeparationCurve& curve, double keep, double catch_) {
  return std::any_of(curve.points.begin(), curve.points.end(), [&](const SeparationPoint& p) {
    return p.correct_kept >= keep && p.mislabel_caught >= catch_;
  });
}

double detection_auc(std::span<const double> omega, const std::vector<bool>& mask) {
  check_lengths(omega, mask);
  const std::size_t n = omega.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return omega[a] < omega[b]; });
  // Rank-sum over the correct group with average ranks for ties.
  double rank_sum = 0.0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && omega[order[j]] == omega[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (!mask[order[k]]) rank_sum += avg, ++good;
    i = j;
  }
  const std::size_t bad = n - good;
  if (good == 0 || bad == 0) throw InputError("detection AUC is undefined with an empty group");
  const double g = static_cast<double>(good);
  return (rank_sum - g * (g + 1) / 2) / (g * static_cast<double>(bad));
}

bool crash_detector(const TrainTrace& trace, double chance, double tolerance) {
  const auto& r = trace.records;
  if (r.empty()) throw InputError("empty training trace");
  const std::size_t epochs = r.size() - 1;
  const std::size_t window = std::max<std::size_t>(1, (epochs + 1) / 2);
  for (std::size_t i = r.size() - window; i < r.size(); ++i)
    if (!(std::abs(r[i].validation_accuracy - chance) <= tolerance)) return false;
  return true;
}

void write_histogram_csv(const std::filesystem::path& path, const WeightHistogram& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin_lo,bin_hi,correct,mislabeled\n";
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
    out << fmt(h.edges[b]) << ',' << fmt(h.edges[b + 1]) << ',' << h.correct[b] << ',' << h.mislabeled[b] << '\n';
}

void write_separation_csv(const std::filesystem::path& path, const SeparationCurve& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,correct_kept,mislabel_caught\n";
  for (const auto& p : c.points)
    out << fmt(p.threshold) << ',' << fmt(p.correct_kept) << ',' << fmt(p.mislabel_caught) << '\n';
}

std::vector<double> ranking_agreement(std::span<const double> a, std::span<const double> b,
                                      std::span<const int> labels, std::size_t num_classes) {
  if (a.size() != b.size() || a.size() != labels.size())
    throw ShapeError("weight vectors and labels differ in length");
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw InputError("label out of range");
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  auto sign = [](double x) { return (x > 0) - (x < 0); };
  std::vector<double> out;
  for (const auto& m : members) {
    std::size_t same = 0, total = 0;
    for (std::size_t x = 0; x < m.size(); ++x)
      for (std::size_t y = x + 1; y < m.size(); ++y) {
        ++total;
        same += sign(a[m[x]] - a[m[y]]) == sign(b[m[x]] - b[m[y]]);
      }
    out.push_back(total ? static_cast<double>(same) / static_cast<double>(total)
                        : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace drfit
