// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any selected criterion fails. Usage: drfit_acceptance [criterion ...]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "drfit/core.hpp"
#include "drfit/data.hpp"
#include "drfit/error.hpp"
#include "drfit/eval.hpp"
#include "drfit/experiment.hpp"
#include "drfit/mlp.hpp"
#include "drfit/random.hpp"
#include "drfit/theory.hpp"
#include "support/oracles.hpp"

using namespace drfit;

namespace {

// Tolerances, as stated by the acceptance criteria.
constexpr double kIdentityRelTol = 1e-10;      // 1
constexpr double kGridStep = 0.01;             // 1
constexpr double kCleanTol = 1e-6;             // 2
constexpr double kProp3SMax = 30.0;            // 3
constexpr double kRatioFloor = 3.0;            // 4
constexpr double kResidualTol = 1e-6;          // 4
constexpr double kAngleTol = 1e-3;             // 5
constexpr double kSStarTol = 1e-5;             // 5
constexpr double kReductionTol = 1e-4;         // 5
constexpr double kBoxRatioA = 0.064, kBoxRatioB = 0.046, kBoxRatioTol = 0.005;  // 6
constexpr double kBoxBStar = 0.54, kBoxBStarTol = 0.05;                         // 6
constexpr double kJumpAlpha = 1.62, kJumpTol = 0.02;                            // 7
constexpr double kBistableLo = 1.54, kBistableHi = 1.69;                        // 7
constexpr double kFdRelTol = 1e-5;             // 8
constexpr std::size_t kFdMaxParams = 200;      // 8
constexpr double kNoOverfitPoints = 0.01;      // 9
constexpr double kBaselineDropPoints = 0.03;   // 9
constexpr double kAucFloor = 0.95;             // 10
constexpr double kPairShare = 0.90;            // 10
constexpr double kRankAgreement = 0.95;       // 11
constexpr double kRho0 = 1.25, kRho1 = 1.0 / 1.2, kRhoTol = 1e-10;  // 12
constexpr double kRelaxedAuc = 0.90;           // 12

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::filesystem::path out_root() {
  if (const char* e = std::getenv("DRFIT_ACCEPTANCE_DIR"); e && *e) return e;
  return std::filesystem::current_path() / "acceptance_runs";
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------- theory

Outcome c1_prop1() {
  Rng rng(20240101);
  double worst_identity = 0.0;
  int beaten = 0;
  std::string why;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 2 + rng.index(7);  // 2..8
    const std::size_t k = 1 + rng.index(2);  // 1..2
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i < k ? i : rng.index(k));
    std::vector<double> loss(n);
    for (double& l : loss) l = rng.uniform(0.0, 3.0);
    DrFitConfig cfg;
    cfg.alpha = rng.uniform(0.2, 2.0);
    const double rho_choices[3] = {0.75, 1.0, 1.25};
    for (std::size_t c = 0; c < k; ++c) cfg.rho.push_back(rho_choices[rng.index(3)]);
    const auto part = ClassPartition::from_labels(y, k);
    const auto w = analytic_weights(loss, part, cfg);
    const double full = full_objective(loss, w.omega, 0.0, cfg);
    const double rhs = reduced_loss(loss, 0.0, part, cfg) + dropped_constant(part, cfg);
    worst_identity = std::max(worst_identity, std::abs(full - rhs) / std::max(std::abs(full), 1e-300));
    double grid = 0.0;
    for (const auto& g : part.groups()) {
      std::vector<double> l;
      for (std::size_t i : g.members) l.push_back(loss[i]);
      const double budget = cfg.rho_for(g.label) * static_cast<double>(l.size());
      const double greedy = oracle::class_grid_min_greedy(l, budget, cfg.alpha, kGridStep);
      if (l.size() <= 3) {
        const double brute = oracle::class_grid_min(l, budget, cfg.alpha, kGridStep);
        if (std::abs(brute - greedy) > 1e-9 * std::max(1.0, std::abs(brute)))
          why = "greedy and exhaustive grid minima disagree";
      }
      grid += greedy;
    }
    if (full <= grid + 1e-12 * std::max(1.0, std::abs(grid))) ++beaten;
  }
  const bool ok = beaten == 20 && worst_identity <= kIdentityRelTol && why.empty();
  return {ok, "analytic beats grid on " + std::to_string(beaten) + "/20; identity rel err " +
                  f("%.2e", worst_identity) + (why.empty() ? "" : "; " + why)};
}

Outcome c2_prop2() {
  bool ok = true;
  std::string d;
  for (double q : {0.1, 0.2, 0.3}) {
    const auto p = theory::symmetric_problem(theory::Gaussian{1.0, 1.0}, q);
    const double clean = theory::clean_estimator_1d(p);
    const double noisy = theory::noisy_estimator_1d(p);
    ok = ok && std::abs(clean - 1.0) <= kCleanTol && noisy < clean;
    d += "q=" + f("%.1f", q) + " s_hat=" + f("%.6f", noisy) + " s*=" + f("%.9f", clean) + "; ";
  }
  return {ok, d};
}

Outcome c3_prop3() {
  bool ok = true;
  std::string d;
  const auto p = theory::symmetric_problem(theory::Gaussian{1.0, 1.0}, 0.2);
  for (double b : {1.0, 1.5}) {
    const bool div = theory::weighted_estimator_1d(p, b).divergent;
    bool inc = true;
    double prev = theory::weighted_objective(p, b, 0.0);
    for (int i = 1; 0.5 * i <= kProp3SMax; ++i) {
      const double cur = theory::weighted_objective(p, b, 0.5 * i);
      inc = inc && cur > prev;
      prev = cur;
    }
    ok = ok && div && inc;
    d += "b=" + f("%.1f", b) + (div ? " divergent" : " FINITE") + (inc ? " increasing; " : " NOT increasing; ");
  }
  return {ok, d};
}

Outcome c4_prop4() {
  const auto p = theory::symmetric_problem(theory::Gaussian{1.0, 1.0}, 0.2);
  std::vector<double> grid;
  for (int i = 0; i <= 9; ++i) grid.push_back(0.1 * i);
  grid.push_back(0.95);
  std::vector<double> s;
  for (double b : grid) s.push_back(theory::weighted_estimator_1d(p, b).value);
  bool inc = true;
  for (std::size_t i = 1; i < s.size(); ++i) inc = inc && s[i] > s[i - 1];
  const double ratio = s.back() / s.front();
  const auto bs = theory::find_bstar_1d(p);
  const bool ok = inc && ratio > kRatioFloor && bs.residual < kResidualTol;
  return {ok, std::string(inc ? "increasing" : "NOT increasing") + "; ratio " + f("%.3f", ratio) + "; b* " +
                  f("%.10f", bs.b) + " residual " + f("%.2e", bs.residual)};
}

Outcome c5_thm5() {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.0, 0.3, 0.3, 1.0;
  const Eigen::VectorXd mu = Eigen::VectorXd::Ones(2);
  const auto mv = theory::mv_gaussian_case(mu, sigma, 0.2, {});
  const theory::MvProblem noisy{theory::MvGaussian{mu, sigma}, 0.2};
  double worst_angle = 0.0;
  for (double b : {0.0, 0.3, 0.6, 0.9}) {
    const Eigen::Vector2d s = theory::general_mv_estimator(noisy, b);
    const double ang = std::atan2(std::abs(s.x() * mv.u(1) - s.y() * mv.u(0)), s.dot(mv.u));
    worst_angle = std::max(worst_angle, ang);
  }
  const Eigen::Vector2d clean = theory::general_mv_estimator({theory::MvGaussian{mu, sigma}, 0.0}, 0.0);
  const Eigen::Vector2d exact = sigma.ldlt().solve(mu);  // independent linear solve
  const double s_err = (clean - exact).norm();
  const Eigen::Vector2d full = theory::general_mv_estimator(noisy, mv.bstar.b);
  const double red_err = (full - mv.bstar.s * mv.u).norm();
  const bool ok = worst_angle < kAngleTol && s_err < kSStarTol && red_err < kReductionTol;
  return {ok, "max angle " + f("%.2e", worst_angle) + " rad; |s*-Sigma^-1 1| " + f("%.2e", s_err) +
                  "; reduction gap at b*=" + f("%.6f", mv.bstar.b) + " is " + f("%.2e", red_err)};
}

Outcome c6_boxes() {
  const auto a = theory::mv_bstar({theory::MvUniformBox{{{-1.0, 3.0}, {-2.0, 4.0}}}, 0.2});
  const auto b = theory::mv_bstar({theory::MvUniformBox{{{-1.0, 3.0}, {-0.25, 1.25}}}, 0.2});
  const bool ok = std::abs(a.ratio - kBoxRatioA) <= kBoxRatioTol && std::abs(a.b - kBoxBStar) <= kBoxBStarTol &&
                  std::abs(b.ratio - kBoxRatioB) <= kBoxRatioTol;
  return {ok, "box A ratio " + f("%.4f", a.ratio) + " (want 0.064+-0.005) at b* " + f("%.4f", a.b) +
                  " (want 0.54+-0.05); box B ratio " + f("%.4f", b.ratio) + " (want 0.046+-0.005) at b* " +
                  f("%.4f", b.b)};
}

Outcome c7_counterexample() {
  std::vector<double> alphas;
  for (int i = 0; i <= 100; ++i) alphas.push_back(1.30 + 0.005 * i);
  const auto rep = theory::discontinuity_scan(theory::counterexample_problem(0.2), alphas);
  bool two = false;
  std::size_t most = 0;
  for (const auto& p : rep.points) {
    most = std::max(most, p.local_maxima.size());
    if (p.alpha >= kBistableLo - 1e-12 && p.alpha <= kBistableHi + 1e-12 && p.local_maxima.size() >= 2) two = true;
  }
  const bool jump_ok = rep.jump_alpha && std::abs(*rep.jump_alpha - kJumpAlpha) <= kJumpTol;
  std::string d = rep.jump_alpha ? "jump at alpha " + f("%.4f", *rep.jump_alpha) : "no jump over alpha in [1.30, 1.80]";
  d += "; max local maxima at any alpha " + std::to_string(most) + (two ? "; bistable in [1.54, 1.69]" : "; no bistability in [1.54, 1.69]");
  return {jump_ok && two, d};
}

// ---------------------------------------------------------------- training

double fd_error(const std::function<double(const MlpParams&)>& fn, const MlpParams& p, const std::vector<double>& g) {
  const double h = 1e-6;
  std::vector<double> theta = p.flatten();
  MlpParams q = p;
  double worst = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double keep = theta[j];
    theta[j] = keep + h;
    q.assign(theta);
    const double up = fn(q);
    theta[j] = keep - h;
    q.assign(theta);
    const double down = fn(q);
    theta[j] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[j]) / std::max({std::abs(fd), std::abs(g[j]), 1e-4}));
  }
  return worst;
}

Outcome c8_gradients() {
  double worst_w = 0.0, worst_h = 0.0;
  std::size_t largest = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(derive_seed(777, seed));
    const std::size_t in = 3 + rng.index(6), hid = 3 + rng.index(8), batch = 6 + rng.index(10);
    const bool softmax = seed % 2 == 0;
    const std::vector<std::size_t> widths{in, hid, softmax ? std::size_t{2} : std::size_t{1}};
    const MlpParams p = init_mlp(widths, Activation::relu, softmax ? OutputKind::softmax : OutputKind::logistic2, seed);
    largest = std::max(largest, p.parameter_count());
    Matrix x(batch, in);
    for (double& v : x.values()) v = rng.normal();
    std::vector<int> y(batch);
    for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<int>(i % 2 == 0 ? 0 : rng.index(2));
    std::vector<double> w(batch);
    for (double& v : w) v = rng.uniform(0.0, 2.0);
    const double lambda = 0.05 * static_cast<double>(seed % 3);
    // Weighted loss.
    const auto cache = mlp_forward(p, x);
    const auto g = weighted_backward(p, cache, y, w, lambda);
    worst_w = std::max(worst_w, fd_error(
                                    [&](const MlpParams& q) {
                                      const auto l = per_example_loss(mlp_forward(q, x), y);
                                      double s = 0.5 * lambda * q.squared_norm();
                                      for (std::size_t i = 0; i < l.size(); ++i) s += w[i] * l[i];
                                      return s;
                                    },
                                    p, g));
    // Reduced loss.
    DrFitConfig cfg;
    cfg.alpha = 0.3 + 0.2 * static_cast<double>(seed % 4);
    cfg.lambda = lambda;
    cfg.rho = {1.25, 0.8};
    const auto part = ClassPartition::from_labels(y, 2);
    const auto loss = per_example_loss(cache, y);
    const auto gh = reduced_loss_grad(loss, per_example_gradients(p, cache, y), p.flatten(), part, cfg);
    worst_h = std::max(worst_h, fd_error(
                                    [&](const MlpParams& q) {
                                      return reduced_loss(per_example_loss(mlp_forward(q, x), y), q.squared_norm(),
                                                          part, cfg);
                                    },
                                    p, gh));
  }
  const bool ok = worst_w < kFdRelTol && worst_h < kFdRelTol && largest <= kFdMaxParams;
  return {ok, "max rel err weighted " + f("%.2e", worst_w) + ", reduced " + f("%.2e", worst_h) +
                  "; largest net " + std::to_string(largest) + " params"};
}

ExperimentConfig mnist_config(Solver solver, RhoMode rho, const std::string& tag) {
  ExperimentConfig c;
  c.kind = ExperimentKind::mnist_1v7;
  c.drfit.alpha = 1.0;
  c.drfit.lambda = 0.0;
  c.train.epochs = 400;
  c.train.batch_size = 64;
  c.train.theta_lr = 0.1;
  c.train.solver = solver;
  c.noise = {{0.3, 0.1}, 1};
  c.rho_mode = rho;
  c.data.train_size = 2000;
  c.data.validation_fraction = 0.1;
  c.model.hidden = {8};
  c.replications = 10;
  c.seed = 1;
  c.workers = workers();
  c.output_dir = (out_root() / tag).string();
  return c;
}

const TrainingSummary& cached_run(const ExperimentConfig& cfg) {
  static std::map<std::string, TrainingSummary> cache;
  const std::string key = config_digest(cfg) + cfg.output_dir;
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, run_training(cfg, data_root())).first;
  return it->second;
}

Outcome contrast(RhoMode rho, const std::string& tag) {
  const auto& a = cached_run(mnist_config(Solver::analytic, rho, tag));
  const auto& b = cached_run(mnist_config(Solver::plain, rho, tag));
  const bool a_ok = a.failed == 0 && a.mean_final_test >= a.mean_peak_test - kNoOverfitPoints;
  const bool b_ok = b.failed == 0 && b.mean_final_test <= b.mean_peak_test - kBaselineDropPoints;
  return {a_ok && b_ok, "analytic final " + f("%.4f", a.mean_final_test) + " peak " + f("%.4f", a.mean_peak_test) +
                            "; baseline final " + f("%.4f", b.mean_final_test) + " peak " +
                            f("%.4f", b.mean_peak_test) + " (runs failed " + std::to_string(a.failed + b.failed) + ")"};
}

Outcome detection(RhoMode rho, const std::string& tag, double floor) {
  const auto& a = cached_run(mnist_config(Solver::analytic, rho, tag));
  double lo = 1.0;
  std::size_t n = 0;
  for (const auto& r : a.runs)
    if (r.ok && r.auc) lo = std::min(lo, *r.auc), ++n;
  const bool ok = n == a.runs.size() && lo >= floor && a.threshold_pair_90;
  return {ok, "per-run AUC min " + f("%.4f", lo) + " mean " + f("%.4f", a.mean_auc.value_or(NAN)) +
                  "; 90/90 threshold on mean weights: " + (a.threshold_pair_90 ? "yes" : "no")};
}

Outcome c9_mnist() { return contrast(RhoMode::rates, "c9"); }
Outcome c10_detection() { return detection(RhoMode::rates, "c9", kAucFloor); }

ExperimentConfig synthetic_config(Solver solver) {
  ExperimentConfig c;
  c.kind = ExperimentKind::synthetic_train;
  c.data.synthetic_n = 400;
  c.data.validation_fraction = 0.0;
  c.noise = {{0.2, 0.2}, 1};
  c.drfit.alpha = 20.0;
  c.train.epochs = 30;
  c.train.omega_lr = 0.05;
  c.train.solver = solver;
  c.output_dir = (out_root() / "c11").string();
  return c;
}

Outcome c11_solvers() {
  const auto a = cached_run(synthetic_config(Solver::analytic));
  const auto n = cached_run(synthetic_config(Solver::numeric));
  if (a.failed || n.failed) return {false, "a run failed: " + a.runs[0].error + n.runs[0].error};
  const auto data = prepare_data(synthetic_config(Solver::analytic), data_root());
  const auto r = ranking_agreement(a.runs[0].omega, n.runs[0].omega, data.train.labels, 2);
  const bool ok = r[0] >= kRankAgreement && r[1] >= kRankAgreement;
  return {ok, "pair agreement class 0 " + f("%.4f", r[0]) + ", class 1 " + f("%.4f", r[1])};
}

Outcome c12_rho() {
  const std::vector<std::size_t> sizes{1000, 1000};
  const std::vector<double> rates{0.3, 0.1};
  const auto rho = estimate_rho_from_rates(sizes, rates);
  const bool arith = std::abs(rho[0] - kRho0) <= kRhoTol && std::abs(rho[1] - kRho1) <= kRhoTol;
  const Outcome c = contrast(RhoMode::uniform, "c12");
  const Outcome d = detection(RhoMode::uniform, "c12", kRelaxedAuc);
  return {arith && c.pass && d.pass, "rho (" + f("%.12f", rho[0]) + ", " + f("%.12f", rho[1]) + "); rho=1 runs: " +
                                         c.detail + "; " + d.detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Compares every CSV under two output trees.
bool same_csvs(const std::filesystem::path& a, const std::filesystem::path& b, std::size_t& count, std::string& diff) {
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    ++count;
    if (!std::filesystem::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) {
      diff = rel.string();
      return false;
    }
  }
  return count > 0;
}

Outcome c13_determinism() {
  std::size_t count = 0;
  std::string diff;
  // A shortened MNIST run, serial versus parallel workers.
  auto m1 = mnist_config(Solver::analytic, RhoMode::rates, "c13/serial");
  m1.train.epochs = 40;
  m1.replications = 3;
  m1.workers = 1;
  auto m2 = m1;
  m2.workers = 3;
  m2.output_dir = (out_root() / "c13/parallel").string();
  std::filesystem::remove_all(m1.output_dir);
  std::filesystem::remove_all(m2.output_dir);
  run_training(m1, data_root());
  run_training(m2, data_root());
  bool ok = same_csvs(m1.output_dir, m2.output_dir, count, diff);
  // The numeric solver on synthetic data, twice.
  auto s1 = synthetic_config(Solver::numeric);
  s1.output_dir = (out_root() / "c13/syn_a").string();
  auto s2 = s1;
  s2.output_dir = (out_root() / "c13/syn_b").string();
  std::filesystem::remove_all(s1.output_dir);
  std::filesystem::remove_all(s2.output_dir);
  run_training(s1, data_root());
  run_training(s2, data_root());
  ok = ok && same_csvs(s1.output_dir, s2.output_dir, count, diff);
  return {ok, std::to_string(count) + " CSV files compared" + (diff.empty() ? ", all identical" : "; differs: " + diff)};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "analytic weights minimise the full objective; identity with the reduced loss", c1_prop1},
    {2, "noisy logistic estimate underestimates the clean one", c2_prop2},
    {3, "no finite weighted estimate for b >= 1", c3_prop3},
    {4, "weighted estimate increases in b; b* found", c4_prop4},
    {5, "multivariate Gaussian direction invariance and reduction", c5_thm5},
    {6, "uniform box ratios 0.064 and 0.046", c6_boxes},
    {7, "counterexample jump at alpha 1.62", c7_counterexample},
    {8, "gradients match central differences", c8_gradients},
    {9, "MNIST 1 vs 7: no overfitting versus baseline drop", c9_mnist},
    {10, "mislabel detection AUC and 90/90 threshold", c10_detection},
    {11, "numeric and analytic solvers rank weights alike", c11_solvers},
    {12, "rho arithmetic; rho = 1 still passes 9-10 (AUC >= 0.90)", c12_rho},
    {13, "same seed gives byte-identical metric files", c13_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool all = true;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s criterion %2d: %s | %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
