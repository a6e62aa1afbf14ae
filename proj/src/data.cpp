#include "drfit/data.hpp"

#include <zlib.h>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "drfit/error.hpp"
#include "drfit/random.hpp"

namespace drfit {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void check_magic(std::span<const std::uint8_t> file, std::uint32_t want, const char* what) {
  if (file.size() < 4) throw ParseError(ParseErrorKind::truncated, std::string(what) + ": file shorter than its header");
  const std::uint32_t magic = read_be32(file, 0);
  if (magic != want)
    throw ParseError(ParseErrorKind::unknown_magic,
                     std::string(what) + ": unknown magic " + std::to_string(magic));
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> file) {
  check_magic(file, kIdxImageMagic, "image file");
  if (file.size() < 16) throw ParseError(ParseErrorKind::truncated, "image file: header truncated");
  IdxImages out;
  out.count = read_be32(file, 4);
  out.height = read_be32(file, 8);
  out.width = read_be32(file, 12);
  if (out.height == 0 || out.width == 0)
    throw ParseError(ParseErrorKind::bad_dimensions, "image file: zero image dimension");
  const std::size_t need = out.count * out.height * out.width;
  if (file.size() - 16 < need)
    throw ParseError(ParseErrorKind::truncated, "image file: payload has " +
                                                    std::to_string(file.size() - 16) +
                                                    " bytes, header promises " + std::to_string(need));
  out.bytes.assign(file.begin() + 16, file.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> file) {
  check_magic(file, kIdxLabelMagic, "label file");
  if (file.size() < 8) throw ParseError(ParseErrorKind::truncated, "label file: header truncated");
  const std::size_t count = read_be32(file, 4);
  if (file.size() - 8 < count)
    throw ParseError(ParseErrorKind::truncated, "label file: payload shorter than its count");
  return {file.begin() + 8, file.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int got = gzread(f, buf, sizeof buf);
    if (got < 0) {
      gzclose(f);
      throw IoError("read error in " + path.string());
    }
    if (got == 0) break;
    out.insert(out.end(), buf, buf + got);
  }
  gzclose(f);
  return out;
}

RawImages load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxImages img = parse_idx_images(read_file_bytes(images));
  const auto lab = parse_idx_labels(read_file_bytes(labels));
  if (lab.size() != img.count)
    throw ParseError(ParseErrorKind::count_mismatch, std::to_string(img.count) + " images but " +
                                                         std::to_string(lab.size()) + " labels");
  RawImages raw;
  raw.height = img.height;
  raw.width = img.width;
  const std::size_t d = img.height * img.width;
  raw.pixels = Matrix(img.count, d);
  auto px = raw.pixels.values();
  for (std::size_t i = 0; i < img.bytes.size(); ++i) px[i] = img.bytes[i] / 255.0;
  raw.labels.assign(lab.begin(), lab.end());
  return raw;
}

Matrix mean_pool_2x2(const Matrix& images, std::size_t height, std::size_t width) {
  if (height % 2 != 0 || width % 2 != 0 || images.cols() != height * width)
    throw ShapeError("pooling needs even image sides matching the row width");
  const std::size_t h = height / 2, w = width / 2;
  Matrix out(images.rows(), h * w);
  for (std::size_t n = 0; n < images.rows(); ++n) {
    const auto src = images.row(n);
    auto dst = out.row(n);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t top = 2 * r * width + 2 * c;
        dst[r * w + c] = (src[top] + src[top + 1] + src[top + width] + src[top + width + 1]) / 4.0;
      }
  }
  return out;
}

LabeledDataset prepare_ones_vs_sevens(const RawImages& raw) {
  std::vector<std::size_t> keep;
  std::vector<int> labels;
  for (std::size_t i = 0; i < raw.labels.size(); ++i) {
    if (raw.labels[i] == 1 || raw.labels[i] == 7) {
      keep.push_back(i);
      labels.push_back(raw.labels[i] == 7 ? 1 : 0);
    }
  }
  const auto ones = std::count(labels.begin(), labels.end(), 0);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(labels.size()))
    throw InputError("need both digit 1 and digit 7 examples");
  LabeledDataset d;
  d.num_classes = 2;
  d.features = mean_pool_2x2(raw.pixels.select_rows(keep), raw.height, raw.width);
  d.labels = std::move(labels);
  return d;
}

LabeledDataset inject_label_noise(LabeledDataset data, const NoiseSpec& spec) {
  data.validate();
  const std::size_t k = data.num_classes;
  if (spec.rates.size() != k)
    throw InputError("need one flip rate per class (" + std::to_string(k) + ")");
  for (double q : spec.rates)
    if (!(q >= 0.0 && q < 0.5)) throw InputError("flip rates must lie in [0, 0.5)");
  if (!data.true_labels) data.true_labels = data.labels;
  const std::vector<int>& truth = *data.true_labels;
  std::vector<int> noisy = truth;
  Rng rng(spec.seed);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i] == static_cast<int>(c)) members.push_back(i);
    const auto flips = static_cast<std::size_t>(std::llround(spec.rates[c] * members.size()));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t j = 0; j < flips; ++j) {
      int target = 1 - static_cast<int>(c);
      if (k > 2) {
        target = static_cast<int>(rng.index(k - 1));
        if (target >= static_cast<int>(c)) ++target;
      }
      noisy[members[j]] = target;
    }
  }
  data.labels = std::move(noisy);
  std::vector<bool> mask(truth.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = data.labels[i] != truth[i];
  data.mislabel_mask = std::move(mask);
  return data;
}

namespace {

double rho_entry(double p, double q) {
  if (q >= 1.0) throw NumericError("rho: division by zero, every example of a class is mislabelled");
  return p / (1.0 - q);
}

}  // namespace

std::vector<double> estimate_rho_from_rates(std::span<const std::size_t> class_sizes,
                                            std::span<const double> rates) {
  const std::size_t k = class_sizes.size();
  if (rates.size() != k) throw InputError("need one flip rate per class");
  std::vector<double> pool(k, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const double n = static_cast<double>(class_sizes[t]);
    pool[t] += (1.0 - rates[t]) * n;
    for (std::size_t c = 0; c < k; ++c)
      if (c != t) pool[c] += rates[t] * n / static_cast<double>(k - 1);
  }
  std::vector<double> rho(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (!(pool[c] > 0.0)) throw InputError("no example is labelled as class " + std::to_string(c));
    const double p = (1.0 - rates[c]) * static_cast<double>(class_sizes[c]) / pool[c];
    rho[c] = rho_entry(p, rates[c]);
  }
  return rho;
}

std::vector<double> estimate_rho_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  std::vector<double> rho(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (confusion[c].size() != k) throw ShapeError("confusion table must be square");
    double labelled_c = 0.0, true_c = 0.0;
    for (std::size_t t = 0; t < k; ++t) labelled_c += static_cast<double>(confusion[t][c]);
    for (std::size_t o = 0; o < k; ++o) true_c += static_cast<double>(confusion[c][o]);
    if (labelled_c == 0.0 || true_c == 0.0)
      throw InputError("validation sample has no example for class " + std::to_string(c));
    const double p = static_cast<double>(confusion[c][c]) / labelled_c;
    const double q = (true_c - static_cast<double>(confusion[c][c])) / true_c;
    rho[c] = rho_entry(p, q);
  }
  return rho;
}

std::vector<std::vector<std::size_t>> confusion_counts(const LabeledDataset& data) {
  if (!data.true_labels) throw InputError("dataset has no true labels");
  std::vector<std::vector<std::size_t>> m(data.num_classes, std::vector<std::size_t>(data.num_classes, 0));
  for (std::size_t i = 0; i < data.size(); ++i)
    ++m.at(static_cast<std::size_t>((*data.true_labels)[i])).at(static_cast<std::size_t>(data.labels[i]));
  return m;
}

std::vector<double> uniform_rho(std::size_t num_classes) { return std::vector<double>(num_classes, 1.0); }

LabeledDataset synthetic_gaussian_2class(std::size_t n, std::span<const double> mu,
                                         const Matrix& sigma, std::uint64_t seed, bool mirror) {
  const std::size_t d = mu.size();
  if (sigma.rows() != d || sigma.cols() != d) throw ShapeError("covariance must be d x d");
  Eigen::MatrixXd s(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s(i, j) = sigma(i, j);
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success || !s.isApprox(s.transpose()))
    throw InputError("covariance is not symmetric positive definite");
  const Eigen::MatrixXd l = llt.matrixL();

  const std::size_t half = n / 2;
  LabeledDataset out;
  out.num_classes = 2;
  out.features = Matrix(2 * half, d);
  out.labels.resize(2 * half);
  Rng rng(seed);
  Eigen::VectorXd z(d);
  auto draw = [&](std::size_t row, double sign) {
    for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
    const Eigen::VectorXd x = l * z;
    for (std::size_t j = 0; j < d; ++j) out.features(row, j) = sign * mu[j] + x[j];
  };
  for (std::size_t i = 0; i < half; ++i) {
    draw(i, 1.0);
    out.labels[i] = 1;
  }
  for (std::size_t i = 0; i < half; ++i) {
    const std::size_t row = half + i;
    if (mirror) {
      for (std::size_t j = 0; j < d; ++j) out.features(row, j) = -out.features(i, j);
    } else {
      draw(row, -1.0);
    }
    out.labels[row] = 0;
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& data,
                                                        double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto held = static_cast<std::size_t>(std::llround(fraction * data.size()));
  std::vector<std::size_t> hold(order.begin(), order.begin() + held);
  std::vector<std::size_t> rest(order.begin() + held, order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(rest.begin(), rest.end());
  return {data.subset(rest), data.subset(hold)};
}

LabeledDataset subsample(const LabeledDataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.size()) return data;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(n);
  std::sort(order.begin(), order.end());
  return data.subset(order);
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t d = data.features.cols();
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "label";
  if (data.true_labels) out << ",true_label";
  if (data.mislabel_mask) out << ",mislabeled";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      out << buf << ',';
    }
    out << data.labels[i];
    if (data.true_labels) out << ',' << (*data.true_labels)[i];
    if (data.mislabel_mask) out << ',' << ((*data.mislabel_mask)[i] ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(ParseErrorKind::malformed, "empty CSV file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  const std::vector<std::string> tail(header.begin() + static_cast<std::ptrdiff_t>(d), header.end());
  const bool has_true = tail.size() >= 2 && tail[1] == "true_label";
  const bool has_mask = (tail.size() == 3 && tail[2] == "mislabeled") || (tail.size() == 2 && tail[1] == "mislabeled");
  if (tail.empty() || tail[0] != "label" || tail.size() != std::size_t{1} + has_true + has_mask)
    throw ParseError(ParseErrorKind::malformed, "unexpected CSV header in " + path.string());

  std::vector<double> values;
  LabeledDataset out;
  out.num_classes = num_classes;
  if (has_true) out.true_labels.emplace();
  if (has_mask) out.mislabel_mask.emplace();
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size())
      throw ParseError(ParseErrorKind::malformed, "row " + std::to_string(rows + 1) + " has " +
                                                      std::to_string(cells.size()) + " cells");
    try {
      for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(cells[j]));
      out.labels.push_back(std::stoi(cells[d]));
      if (has_true) out.true_labels->push_back(std::stoi(cells[d + 1]));
      if (has_mask) out.mislabel_mask->push_back(std::stoi(cells.back()) != 0);
    } catch (const std::logic_error&) {
      throw ParseError(ParseErrorKind::malformed, "bad number in row " + std::to_string(rows + 1));
    }
    ++rows;
  }
  out.features = Matrix(rows, d, std::move(values));
  out.validate();
  return out;
}

}  // namespace drfit
