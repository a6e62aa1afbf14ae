#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "drfit/dataset.hpp"
#include "drfit/matrix.hpp"

namespace drfit {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

/// Images as rows of byte/255 values plus their digit labels.
struct RawImages {
  Matrix pixels;
  std::vector<int> labels;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct IdxImages {
  std::vector<std::uint8_t> bytes;
  std::size_t count = 0, height = 0, width = 0;
};

/// Parsers over a whole file's bytes. Throw ParseError with a specific kind.
IdxImages parse_idx_images(std::span<const std::uint8_t> file);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> file);

/// Reads a file, gunzipping transparently if it is gzip-compressed.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

RawImages load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Mean of each non-overlapping 2x2 block. Height and width must be even.
Matrix mean_pool_2x2(const Matrix& images, std::size_t height, std::size_t width);

/// Keeps digits 1 and 7 (relabelled 0 and 1) and pools 28x28 to 14x14.
LabeledDataset prepare_ones_vs_sevens(const RawImages& raw);

struct NoiseSpec {
  std::vector<double> rates;  // flip probability per true class, each in [0, 0.5)
  std::uint64_t seed = 1;
};

/// Flips exactly round(q(c) |class c|) labels of each class, chosen uniformly
/// without replacement. Binary: to the other class; otherwise uniform over the
/// others. Sets true_labels and mislabel_mask.
LabeledDataset inject_label_noise(LabeledDataset data, const NoiseSpec& spec);

/// rho_c = p(c) / (1 - q(c)) from true class sizes and flip rates, where p(c)
/// is the share of examples labelled c that truly are c.
std::vector<double> estimate_rho_from_rates(std::span<const std::size_t> class_sizes,
                                            std::span<const double> rates);

/// Same from a clean validation confusion table, confusion[true][observed].
std::vector<double> estimate_rho_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);

/// Confusion table of a dataset carrying true labels.
std::vector<std::vector<std::size_t>> confusion_counts(const LabeledDataset& data);

/// rho_c = 1 for every class.
std::vector<double> uniform_rho(std::size_t num_classes);

/// n/2 rows per class: class 1 ~ N(mu, sigma), class 0 ~ N(-mu, sigma).
/// With `mirror`, class 0 rows are exactly the negated class 1 rows.
LabeledDataset synthetic_gaussian_2class(std::size_t n, std::span<const double> mu,
                                         const Matrix& sigma, std::uint64_t seed,
                                         bool mirror = false);

/// Seeded split into (rest, held_out) with round(fraction * n) held out.
std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& data,
                                                        double fraction, std::uint64_t seed);

/// Seeded subsample of min(n, size) rows, kept in original order.
LabeledDataset subsample(const LabeledDataset& data, std::size_t n, std::uint64_t seed);

/// Columnar CSV: f0..f{d-1},label[,true_label,mislabeled]. Features use
/// 17 significant digits so values round-trip.
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes = 2);

}  // namespace drfit
