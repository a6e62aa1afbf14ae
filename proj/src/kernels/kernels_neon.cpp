#include "drfit/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace drfit::kernels {
namespace {

// vmulq/vaddq instead of vfmaq: the fused form would round differently from
// the scalar reference.
void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_neon(double a, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), va));
  for (; i < n; ++i) y[i] *= a;
}

void relu_neon(const double* x, double* y, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vx = vld1q_f64(x + i);
    const uint64x2_t keep = vcgtq_f64(vx, zero);
    vst1q_f64(y + i, vreinterpretq_f64_u64(vandq_u64(keep, vreinterpretq_u64_f64(vx))));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_neon(const double* pre, double* g, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t keep = vcgtq_f64(vld1q_f64(pre + i), zero);
    vst1q_f64(g + i,
              vreinterpretq_f64_u64(vandq_u64(keep, vreinterpretq_u64_f64(vld1q_f64(g + i)))));
  }
  for (; i < n; ++i) g[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void copy_neon(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vld1q_f64(x + i));
  for (; i < n; ++i) y[i] = x[i];
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{"neon", axpy_neon, scale_neon, relu_neon, relu_grad_neon,
                                 copy_neon};
  return table;
}

}  // namespace drfit::kernels
#endif
