#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "drfit/matrix.hpp"

namespace drfit {

/// Features plus observed labels; true labels and the mislabel mask are
/// present when the noise was injected by us.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::optional<std::vector<int>> true_labels;
  std::optional<std::vector<bool>> mislabel_mask;
  std::size_t num_classes = 2;

  std::size_t size() const noexcept { return labels.size(); }

  /// Throws ShapeError on row-count mismatch, InputError on out-of-range
  /// labels or a mask that disagrees with labels != true_labels.
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

}  // namespace drfit
