#include "drfit/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "drfit/error.hpp"

namespace drfit::quad {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix with off-diagonal
// `beta`, weights mu0 times the squared first eigenvector components.
Rule golub_welsch(std::size_t n, double mu0, double (*beta)(std::size_t)) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto a = static_cast<Eigen::Index>(k);
    j(a, a - 1) = j(a - 1, a) = beta(k);
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = static_cast<Eigen::Index>(k);
    r.nodes[k] = es.eigenvalues()(a);
    const double v = es.eigenvectors()(0, a);
    r.weights[k] = mu0 * v * v;
  }
  // Symmetrise: the exact rules are symmetric about 0.
  for (std::size_t k = 0; k < n / 2; ++k) {
    const std::size_t m = n - 1 - k;
    const double x = 0.5 * (r.nodes[m] - r.nodes[k]);
    const double w = 0.5 * (r.weights[m] + r.weights[k]);
    r.nodes[k] = -x, r.nodes[m] = x;
    r.weights[k] = r.weights[m] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

double legendre_beta(std::size_t k) {
  const double kk = static_cast<double>(k);
  return kk / std::sqrt(4.0 * kk * kk - 1.0);
}

double hermite_beta(std::size_t k) { return std::sqrt(static_cast<double>(k) / 2.0); }

const Rule& cached(std::map<std::size_t, Rule>& cache, std::size_t n, double mu0,
                   double (*beta)(std::size_t)) {
  static std::mutex mu;
  if (n == 0) throw InputError("quadrature needs at least one node");
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, golub_welsch(n, mu0, beta)).first;
  return it->second;
}

}  // namespace

const Rule& gauss_legendre(std::size_t n) {
  static std::map<std::size_t, Rule> cache;
  return cached(cache, n, 2.0, legendre_beta);
}

const Rule& gauss_hermite(std::size_t n) {
  static std::map<std::size_t, Rule> cache;
  return cached(cache, n, std::sqrt(std::numbers::pi), hermite_beta);
}

Points composite(std::span<const double> breakpoints, std::size_t nodes_per_panel) {
  if (breakpoints.size() < 2) throw InputError("composite rule needs at least two breakpoints");
  if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
    throw InputError("composite breakpoints must be ascending");
  const Rule& r = gauss_legendre(nodes_per_panel);
  Points p;
  p.x.reserve((breakpoints.size() - 1) * nodes_per_panel);
  p.w.reserve(p.x.capacity());
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double a = breakpoints[i], b = breakpoints[i + 1];
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
      p.x.push_back(mid + half * r.nodes[k]);
      p.w.push_back(half * r.weights[k]);
    }
  }
  return p;
}

std::vector<double> graded_breakpoints(double lo, double hi, double h, std::size_t uniform) {
  std::vector<double> bp;
  uniform = std::max<std::size_t>(uniform, 1);
  for (std::size_t i = 0; i <= uniform; ++i)
    bp.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(uniform));
  if (h > 0.0 && std::isfinite(h)) {
    if (lo < 0.0 && hi > 0.0) bp.push_back(0.0);
    const double reach = std::max(std::abs(lo), std::abs(hi));
    for (double d = h; d < reach; d *= 2.0) {
      if (d > lo && d < hi) bp.push_back(d);
      if (-d > lo && -d < hi) bp.push_back(-d);
    }
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end(), [](double a, double b) { return b - a <= 1e-14 * (1 + std::abs(a)); }),
           bp.end());
  bp.front() = lo;
  bp.back() = hi;
  return bp;
}

}  // namespace drfit::quad
