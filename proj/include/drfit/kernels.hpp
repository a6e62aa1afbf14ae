#pragma once

// Inner-loop kernels for the dense network.
//
// Every kernel is element-wise: output element i depends only on input element
// i (and scalars). Accumulations over a reduction axis are written by callers
// as a sequence of axpy calls, so each output element is summed left to right
// in a fixed order no matter which variant runs. With -ffp-contract=off and no
// FMA instructions, the SIMD variants are bit-identical to the scalar ones.

#include <span>
#include <string_view>
#include <vector>

namespace drfit::kernels {

struct KernelTable {
  const char* name;
  /// y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// y[i] *= a
  void (*scale)(double a, double* y, std::size_t n);
  /// y[i] = max(x[i], 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  /// g[i] = pre[i] > 0 ? g[i] : 0
  void (*relu_grad)(const double* pre, double* g, std::size_t n);
  /// y[i] = x[i]
  void (*copy)(const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

/// Variants usable on this CPU, scalar first.
std::vector<const KernelTable*> available();

/// The table selected for this process. Chosen once: DRFIT_SIMD=scalar|avx2|neon
/// forces a variant, otherwise the widest supported one wins.
const KernelTable& active();

/// Replaces the active table; returns the previous one. Meant for equivalence
/// tests that run the same computation under every variant.
const KernelTable& set_active(const KernelTable& table);

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), y.size());
}
inline void scale(double a, std::span<double> y) { active().scale(a, y.data(), y.size()); }
inline void relu(std::span<const double> x, std::span<double> y) {
  active().relu(x.data(), y.data(), y.size());
}
inline void relu_grad(std::span<const double> pre, std::span<double> g) {
  active().relu_grad(pre.data(), g.data(), g.size());
}

}  // namespace drfit::kernels
