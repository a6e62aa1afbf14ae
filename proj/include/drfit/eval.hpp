#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "drfit/trainer.hpp"

namespace drfit {

/// Counts over shared edges spanning [0, max w]; the last bin is closed.
struct WeightHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> correct;
  std::vector<std::size_t> mislabeled;
  bool correct_empty = true;
  bool mislabeled_empty = true;
};

WeightHistogram weight_histogram(std::span<const double> omega, const std::vector<bool>& mask,
                                 std::size_t bins = 50);

struct SeparationPoint {
  double threshold;
  double correct_kept;     // share of correct labels with w >= t (NaN if none)
  double mislabel_caught;  // share of mislabels with w < t (NaN if none)
};

struct SeparationCurve {
  std::vector<SeparationPoint> points;
};

SeparationCurve separation_curve(std::span<const double> omega, const std::vector<bool>& mask,
                                 std::span<const double> thresholds);

/// `count` evenly spaced thresholds from 0 to just above max w.
std::vector<double> threshold_grid(std::span<const double> omega, std::size_t count = 201);

/// Element-wise mean over runs of equal length.
std::vector<double> mean_weights(const std::vector<std::vector<double>>& runs);

/// True if some point keeps >= keep of the correct labels while catching >= catch_ of the mislabels.
bool has_threshold_pair(const SeparationCurve& curve, double keep, double catch_);

/// P(w of a random mislabel < w of a random correct label), ties counted 1/2.
/// Throws InputError when either group is empty.
double detection_auc(std::span<const double> omega, const std::vector<bool>& mask);

/// Per class: share of within-class pairs (i, j) that both weight vectors
/// order the same way (both ties, or the same strict order). NaN for a class
/// with fewer than two members.
std::vector<double> ranking_agreement(std::span<const double> a, std::span<const double> b,
                                      std::span<const int> labels, std::size_t num_classes);

/// True iff validation accuracy stays within +-tolerance of chance over the
/// final half of the epochs.
bool crash_detector(const TrainTrace& trace, double chance, double tolerance = 0.02);

void write_histogram_csv(const std::filesystem::path& path, const WeightHistogram& h);
void write_separation_csv(const std::filesystem::path& path, const SeparationCurve& c);

}  // namespace drfit
