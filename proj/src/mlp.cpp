#include "drfit/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drfit/error.hpp"
#include "drfit/kernels.hpp"
#include "drfit/random.hpp"

namespace drfit {

namespace {

void check_labels(std::span<const int> labels, std::size_t n, std::size_t classes) {
  if (labels.size() != n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " examples");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                       ")");
    }
  }
}

void check_finite(const Matrix& m, std::size_t layer, const char* what) {
  if (!m.all_finite()) {
    throw NumericError(std::string("non-finite ") + what + " in layer " + std::to_string(layer),
                       static_cast<std::ptrdiff_t>(layer));
  }
}

// dL/dlogits for every example, already multiplied by the example weight.
Matrix logit_deltas(const ForwardCache& cache, std::span<const int> labels,
                    std::span<const double> weights) {
  const std::size_t n = cache.batch_size();
  const std::size_t k = cache.num_classes();
  Matrix delta(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const double target = static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0;
      delta(i, c) = weights[i] * (cache.scores(i, c) - target);
    }
  }
  return delta;
}

// Gradient w.r.t. the last layer's pre-activation.
Matrix output_deltas(const MlpParams& params, const Matrix& logit_delta) {
  if (params.output == OutputKind::softmax) return logit_delta;
  Matrix out(logit_delta.rows(), 1);
  for (std::size_t i = 0; i < logit_delta.rows(); ++i) out(i, 0) = logit_delta(i, 1) - logit_delta(i, 0);
  return out;
}

// Accumulates parameter gradients into `grad` (flattened layout) for examples
// [first, last). `delta_out` holds the weighted output deltas for all examples.
void backprop_range(const MlpParams& params, const ForwardCache& cache, const Matrix& delta_out,
                    std::size_t first, std::size_t last, std::span<double> grad) {
  const std::size_t depth = params.layers.size();
  std::vector<std::size_t> offset(depth);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    offset[l] = pos;
    pos += params.layers[l].weight.size() + params.layers[l].bias.size();
  }

  const std::size_t rows = last - first;
  Matrix delta(rows, delta_out.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto src = delta_out.row(first + i);
    std::copy(src.begin(), src.end(), delta.row(i).begin());
  }

  for (std::size_t l = depth; l-- > 0;) {
    const DenseLayer& layer = params.layers[l];
    const std::size_t out = layer.weight.rows();
    const std::size_t in = layer.weight.cols();
    const Matrix& input = cache.act[l];
    double* dw = grad.data() + offset[l];
    double* db = dw + out * in;
    for (std::size_t i = 0; i < rows; ++i) {
      const auto a = input.row(first + i);
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta(i, j);
        kernels::axpy(d, a, std::span<double>(dw + j * in, in));
        db[j] += d;
      }
    }
    for (std::size_t q = offset[l]; q < offset[l] + out * in + out; ++q) {
      if (!std::isfinite(grad[q])) {
        throw NumericError("non-finite gradient in layer " + std::to_string(l),
                           static_cast<std::ptrdiff_t>(l));
      }
    }
    if (l == 0) break;

    Matrix prev(rows, in);
    for (std::size_t i = 0; i < rows; ++i) {
      auto dst = prev.row(i);
      for (std::size_t j = 0; j < out; ++j) kernels::axpy(delta(i, j), layer.weight.row(j), dst);
      if (params.activation == Activation::relu) kernels::relu_grad(cache.pre[l - 1].row(first + i), dst);
    }
    check_finite(prev, l - 1, "backpropagated delta");
    delta = std::move(prev);
  }
}

}  // namespace

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t MlpParams::num_classes() const {
  if (layers.empty()) return 0;
  return output == OutputKind::logistic2 ? 2 : layers.back().weight.rows();
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

double MlpParams::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (double w : l.weight.values()) s += w * w;
    for (double b : l.bias) s += b * b;
  }
  return s;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void MlpParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " entries, network has " + std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for (auto& l : layers) {
    auto w = l.weight.values();
    std::copy_n(flat.begin() + pos, w.size(), w.begin());
    pos += w.size();
    std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows())
      throw ShapeError("bias length mismatch in layer " + std::to_string(l));
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
      throw ShapeError("layer " + std::to_string(l) + " input does not match previous output");
  }
  if (output == OutputKind::logistic2 && layers.back().weight.rows() != 1)
    throw ShapeError("logistic output needs exactly one unit in the last layer");
}

MlpParams make_mlp(std::span<const std::size_t> widths, Activation activation, OutputKind output) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  MlpParams p;
  p.activation = activation;
  p.output = output;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    p.layers.push_back({Matrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)});
  }
  p.validate();
  return p;
}

MlpParams init_mlp(std::span<const std::size_t> widths, Activation activation, OutputKind output,
                   std::uint64_t seed) {
  MlpParams p = make_mlp(widths, activation, output);
  Rng rng(seed);
  for (auto& layer : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
  }
  return p;
}

ForwardCache mlp_forward(const MlpParams& params, const Matrix& batch) {
  params.validate();
  if (batch.cols() != params.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " features, network expects " +
                     std::to_string(params.input_dim()));
  }
  const std::size_t n = batch.rows();
  const std::size_t depth = params.layers.size();
  ForwardCache cache;
  cache.act.reserve(depth + 1);
  cache.act.push_back(batch);

  for (std::size_t l = 0; l < depth; ++l) {
    const DenseLayer& layer = params.layers[l];
    const Matrix wt = layer.weight.transposed();  // in x out, rows contiguous
    const Matrix& input = cache.act[l];
    Matrix z(n, layer.weight.rows());
    for (std::size_t i = 0; i < n; ++i) {
      auto zi = z.row(i);
      std::copy(layer.bias.begin(), layer.bias.end(), zi.begin());
      const auto xi = input.row(i);
      for (std::size_t k = 0; k < xi.size(); ++k) kernels::axpy(xi[k], wt.row(k), zi);
    }
    check_finite(z, l, "pre-activation");
    Matrix a(n, z.cols());
    const bool hidden = l + 1 < depth;
    if (hidden && params.activation == Activation::relu) {
      kernels::relu(z.values(), a.values());
    } else {
      a = z;
    }
    cache.pre.push_back(std::move(z));
    cache.act.push_back(std::move(a));
  }

  const Matrix& out = cache.act.back();
  if (params.output == OutputKind::logistic2) {
    cache.logits = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      cache.logits(i, 0) = -out(i, 0);
      cache.logits(i, 1) = out(i, 0);
    }
  } else {
    cache.logits = out;
  }

  const std::size_t k = cache.logits.cols();
  cache.scores = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = cache.logits.row(i);
    const double m = *std::max_element(li.begin(), li.end());
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(li[c] - m);
    for (std::size_t c = 0; c < k; ++c) cache.scores(i, c) = std::exp(li[c] - m) / total;
  }
  return cache;
}

std::vector<double> per_example_loss(const ForwardCache& cache, std::span<const int> labels) {
  const std::size_t n = cache.batch_size();
  check_labels(labels, n, cache.num_classes());
  std::vector<double> loss(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = cache.logits.row(i);
    const double m = *std::max_element(li.begin(), li.end());
    double total = 0.0;
    for (double v : li) total += std::exp(v - m);
    // max(0, .) absorbs the last-ulp negative that log-sum-exp can produce.
    loss[i] = std::max(0.0, m + std::log(total) - li[static_cast<std::size_t>(labels[i])]);
  }
  return loss;
}

std::vector<double> weighted_backward(const MlpParams& params, const ForwardCache& cache,
                                      std::span<const int> labels,
                                      std::span<const double> weights, double lambda) {
  const std::size_t n = cache.batch_size();
  check_labels(labels, n, cache.num_classes());
  if (weights.size() != n) throw ShapeError("weight vector length does not match batch");
  for (double w : weights)
    if (!(w >= 0.0)) throw InputError("observation weights must be nonnegative");

  std::vector<double> grad(params.parameter_count(), 0.0);
  const Matrix delta = output_deltas(params, logit_deltas(cache, labels, weights));
  backprop_range(params, cache, delta, 0, n, grad);
  if (lambda != 0.0) {
    const std::vector<double> theta = params.flatten();
    for (std::size_t q = 0; q < grad.size(); ++q) grad[q] += lambda * theta[q];
  }
  return grad;
}

Matrix per_example_gradients(const MlpParams& params, const ForwardCache& cache,
                             std::span<const int> labels) {
  const std::size_t n = cache.batch_size();
  check_labels(labels, n, cache.num_classes());
  const std::vector<double> ones(n, 1.0);
  const Matrix delta = output_deltas(params, logit_deltas(cache, labels, ones));
  Matrix out(n, params.parameter_count());
  for (std::size_t i = 0; i < n; ++i) backprop_range(params, cache, delta, i, i + 1, out.row(i));
  return out;
}

std::vector<int> predict(const ForwardCache& cache) {
  std::vector<int> out(cache.batch_size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto s = cache.scores.row(i);
    out[i] = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }
  return out;
}

}  // namespace drfit
