#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drfit::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre on [-1, 1] (Golub-Welsch). Cached per n.
const Rule& gauss_legendre(std::size_t n);

/// n-point Gauss-Hermite for weight exp(-x^2) (Golub-Welsch). Cached per n.
const Rule& gauss_hermite(std::size_t n);

/// Nodes and weights integrating over [lo, hi] by Gauss-Legendre panels
/// between consecutive sorted breakpoints (which must include lo and hi).
struct Points {
  std::vector<double> x;
  std::vector<double> w;
};
Points composite(std::span<const double> breakpoints, std::size_t nodes_per_panel);

/// Breakpoints on [lo, hi]: `uniform` equal panels, plus 0 and +-h 2^k inside
/// the interval when h > 0, so integrands varying on scale h near 0 are resolved.
std::vector<double> graded_breakpoints(double lo, double hi, double h, std::size_t uniform);

}  // namespace drfit::quad
