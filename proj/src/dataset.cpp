#include "drfit/dataset.hpp"

#include <string>

#include "drfit/error.hpp"

namespace drfit {

void LabeledDataset::validate() const {
  if (features.rows() != labels.size())
    throw ShapeError(std::to_string(features.rows()) + " feature rows for " +
                     std::to_string(labels.size()) + " labels");
  auto check = [&](const std::vector<int>& ys) {
    for (int y : ys)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw InputError("label " + std::to_string(y) + " outside [0, " +
                         std::to_string(num_classes) + ")");
  };
  check(labels);
  if (true_labels) {
    if (true_labels->size() != labels.size()) throw ShapeError("true label count mismatch");
    check(*true_labels);
  }
  if (mislabel_mask) {
    if (mislabel_mask->size() != labels.size()) throw ShapeError("mislabel mask length mismatch");
    if (true_labels) {
      for (std::size_t i = 0; i < labels.size(); ++i)
        if ((*mislabel_mask)[i] != (labels[i] != (*true_labels)[i]))
          throw InputError("mislabel mask disagrees with labels at index " + std::to_string(i));
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features = features.select_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  if (true_labels) {
    out.true_labels.emplace();
    for (std::size_t i : indices) out.true_labels->push_back((*true_labels)[i]);
  }
  if (mislabel_mask) {
    out.mislabel_mask.emplace();
    for (std::size_t i : indices) out.mislabel_mask->push_back((*mislabel_mask)[i]);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

}  // namespace drfit
