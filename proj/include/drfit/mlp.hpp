#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drfit/matrix.hpp"

namespace drfit {

enum class Activation { relu, identity };

/// logistic2: the last layer has one unit z and the class scores are (-z, z),
/// so P(y=1|x) = e^z / (e^z + e^-z). softmax: one unit per class.
enum class OutputKind { logistic2, softmax };

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::relu;  // hidden layers only
  OutputKind output = OutputKind::softmax;

  std::size_t input_dim() const;
  std::size_t num_classes() const;
  std::size_t parameter_count() const;
  double squared_norm() const;

  /// Layer by layer: weights row-major, then bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  /// Throws ShapeError if layer dimensions do not chain.
  void validate() const;
};

/// widths = {input, hidden..., output units}. All parameters zero.
MlpParams make_mlp(std::span<const std::size_t> widths, Activation activation, OutputKind output);

/// Uniform He-style init: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), bias 0.
MlpParams init_mlp(std::span<const std::size_t> widths, Activation activation, OutputKind output,
                   std::uint64_t seed);

struct ForwardCache {
  std::vector<Matrix> pre;  // pre[l]: batch x out_l
  std::vector<Matrix> act;  // act[0] = input, act[l + 1] = activation of pre[l]
  Matrix logits;            // batch x K
  Matrix scores;            // batch x K class probabilities

  std::size_t batch_size() const noexcept { return scores.rows(); }
  std::size_t num_classes() const noexcept { return scores.cols(); }
};

ForwardCache mlp_forward(const MlpParams& params, const Matrix& batch);

/// Cross-entropy per example, -log P(label), via max-shifted log-sum-exp.
std::vector<double> per_example_loss(const ForwardCache& cache, std::span<const int> labels);

/// Gradient of sum_i w_i * loss_i + (lambda / 2) * ||theta||^2, flattened like
/// MlpParams::flatten. Sums over examples run in index order.
std::vector<double> weighted_backward(const MlpParams& params, const ForwardCache& cache,
                                      std::span<const int> labels,
                                      std::span<const double> weights, double lambda);

/// Row i holds the gradient of loss_i alone (no ridge term).
Matrix per_example_gradients(const MlpParams& params, const ForwardCache& cache,
                             std::span<const int> labels);

/// Arg-max class per example; ties go to the lower index.
std::vector<int> predict(const ForwardCache& cache);

}  // namespace drfit
