#pragma once

// Population-level logistic regression under label noise. The model is
// P(y = 1 | x) = e^{s x} / (e^{s x} + e^{-s x}); b = 1/alpha throughout.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace drfit::theory {

struct Atom {
  double value;
  double prob;
};
struct Discrete {
  std::vector<Atom> atoms;
};
struct Uniform {
  double a, b;
};
struct Gaussian {
  double mean, variance;
};
using CovariateDist = std::variant<Discrete, Uniform, Gaussian>;

struct MvGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
struct MvUniformBox {
  std::vector<std::pair<double, double>> intervals;
};
using MvDist = std::variant<MvGaussian, MvUniformBox>;

/// Throws InputError if probabilities do not sum to 1, a variance is not
/// positive, an interval is empty, or a covariance is not SPD.
void validate(const CovariateDist& d);
void validate(const MvDist& d);

enum class QuadratureKind { gauss_hermite, gauss_legendre, discrete_sum, tensor_product };

struct QuadratureRule {
  QuadratureKind kind = QuadratureKind::gauss_legendre;
  std::size_t nodes = 64;  // per dimension, or per panel for the estimators
};

/// The natural rule for a distribution: Hermite for Gaussian, Legendre for
/// uniform, exact sum for discrete.
QuadratureRule default_rule(const CovariateDist& d, std::size_t nodes = 64);

/// E[f(X)]. Throws NumericError if f is non-finite at a node.
double expect(const CovariateDist& d, const std::function<double(double)>& f,
              const QuadratureRule& rule);
double expect(const CovariateDist& d, const std::function<double(double)>& f);

struct PopulationProblem {
  CovariateDist dist1 = Gaussian{1.0, 1.0};  // X*_1
  /// When set, X*_0 has the law of -X*_1 and dist0 is ignored.
  bool symmetric_negation = true;
  CovariateDist dist0 = Gaussian{-1.0, 1.0};
  double p_star_1 = 0.5;
  double q1 = 0.0;  // P(observed 0 | true 1)
  double q0 = 0.0;  // P(observed 1 | true 0)

  /// Symmetric negation, p*_1 = 1/2 and q1 == q0: the setting of the
  /// uniqueness and multivariate results.
  bool symmetric() const;
  void validate() const;
};

/// Convenience: symmetric problem with class-independent flip rate q.
PopulationProblem symmetric_problem(CovariateDist dist1, double q);

double clean_estimator_1d(const PopulationProblem& prob, const QuadratureRule& rule = {});
double noisy_estimator_1d(const PopulationProblem& prob, const QuadratureRule& rule = {});

struct WeightedEstimate {
  bool divergent = false;
  double value = 0.0;  // meaningful when !divergent
};

/// Smallest positive stationary point of the weighted objective; Divergent if
/// the score keeps its sign up to s = 1e4.
WeightedEstimate weighted_estimator_1d(const PopulationProblem& prob, double b,
                                       const QuadratureRule& rule = {});

/// Symmetric-case stationarity function M(b, s) = E[X_1 g(s X_1, b)] with
/// g(t, b) = e^{-2t} / (1 + e^{-2t})^{b+1} and X_1 the noisy class-1 law.
double stationarity_m(const PopulationProblem& prob, double b, double s,
                      const QuadratureRule& rule = {});

/// Weighted objective O_b(s) = p_1 log E[sigma(2 s X_1)^b] + p_0 log E[sigma(-2 s X_0)^b].
double weighted_objective(const PopulationProblem& prob, double b, double s,
                          const QuadratureRule& rule = {});

struct BStar {
  double b = 0.0;
  double s = 0.0;         // s_w(b)
  double residual = 0.0;  // |s_w(b) - s*|
};

/// Root of s_w(b) - s* over b in [0, 1). Throws InputError if s_w(0) > s*.
BStar find_bstar_1d(const PopulationProblem& prob, const QuadratureRule& rule = {});

struct MvGaussianCase {
  Eigen::VectorXd u;       // Sigma^{-1} mu / |Sigma^{-1} mu|
  Eigen::VectorXd s_star;  // Sigma^{-1} mu
  PopulationProblem reduced;  // 1-D problem for U = u^T X*_1
  BStar bstar;             // on the reduced problem
  std::vector<std::pair<double, double>> curve;  // (b, c(b)) on the requested grid
};

/// Throws InputError on a singular covariance.
MvGaussianCase mv_gaussian_case(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double q,
                                const std::vector<double>& b_grid = {},
                                const QuadratureRule& rule = {});

/// c(b) for the reduced problem (Divergent for b >= 1).
WeightedEstimate reduced_c(const MvGaussianCase& mv, double b, const QuadratureRule& rule = {});

struct MvProblem {
  MvDist dist1;  // X*_1 in R^2; X*_0 = -X*_1 in law
  double q = 0.0;
};

struct MvOptions {
  std::size_t starts = 6;
  std::uint64_t seed = 7;
  std::size_t ascent_iterations = 400;
  std::size_t newton_iterations = 60;
  double gradient_tolerance = 1e-11;
  QuadratureRule rule{};  // nodes/4 per panel along s, nodes/2 Gauss-Hermite across
};

/// Maximiser of the weighted objective over s in R^2. Throws
/// OptimisationError (with the best point) if no start converges.
Eigen::Vector2d general_mv_estimator(const MvProblem& prob, double b, const MvOptions& opt = {});

/// Stationarity vector E[X*_1 (p g(s.X*_1) - q g(-s.X*_1))] and the objective,
/// exposed for tests.
Eigen::Vector2d mv_stationarity(const MvProblem& prob, double b, const Eigen::Vector2d& s,
                                const QuadratureRule& rule = {});
double mv_objective(const MvProblem& prob, double b, const Eigen::Vector2d& s,
                    const QuadratureRule& rule = {});

struct MvBStar {
  Eigen::Vector2d s_star;
  Eigen::Vector2d s_zero;  // b = 0
  double b = 0.0;
  Eigen::Vector2d s_b;
  double ratio = 0.0;  // |s(b*) - s*| / |s(0) - s*|
};

/// b* minimising |s(b) - s*| over b in [0, b_max], with s* from the q = 0 problem.
MvBStar mv_bstar(const MvProblem& prob, double b_max = 0.95, const MvOptions& opt = {});

struct ScanPoint {
  double alpha;
  double argmax;                     // global maximiser of the objective in s
  std::vector<double> local_maxima;  // refined, ascending
};

struct JumpReport {
  std::vector<ScanPoint> points;
  std::optional<double> jump_alpha;  // midpoint of the alpha step where the global maximiser changes branch
  std::optional<double> bistable_from, bistable_to;  // alpha range with >= 2 local maxima
};

struct ScanOptions {
  double s_lo = 0.0;
  double s_hi = 20.0;
  std::size_t s_points = 4001;
};

/// For each alpha, scans the objective with b = 1/alpha over s, refines every
/// grid-local maximum, and reports where the global maximiser jumps.
JumpReport discontinuity_scan(const PopulationProblem& prob, const std::vector<double>& alphas,
                              const ScanOptions& opt = {});

/// The discrete example: X*_0 = +-1 w.p. 1/2; X*_1 in {-1, 1, 10} w.p. {0.1, 0.1, 0.8}.
PopulationProblem counterexample_problem(double q = 0.2);

struct ReportEntry {
  std::string key;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

std::vector<ReportEntry> check_1d(const CovariateDist& dist1, double q);
std::vector<ReportEntry> check_mv_gaussian(const Eigen::MatrixXd& sigma, double q);
std::vector<ReportEntry> check_mv_boxes(double q);
std::vector<ReportEntry> check_counterexample(double q = 0.2);

}  // namespace drfit::theory
