#include "drfit/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace drfit::kernels {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& select() {
  const auto options = available();
  if (const char* forced = std::getenv("DRFIT_SIMD"); forced != nullptr && *forced != '\0') {
    const std::string want(forced);
    for (const KernelTable* t : options) {
      if (want == t->name) return *t;
    }
    // Unknown or unsupported request: fall back to the reference kernels.
    return scalar_table();
  }
  return *options.back();
}

}  // namespace

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_table()};
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2()) out.push_back(&avx2_table());
#endif
#if defined(__aarch64__)
  out.push_back(&neon_table());
#endif
  return out;
}

namespace {
std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{&select()};
  return current;
}
}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

const KernelTable& set_active(const KernelTable& table) {
  return *slot().exchange(&table, std::memory_order_acq_rel);
}

}  // namespace drfit::kernels
