#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "drfit/data.hpp"
#include "drfit/error.hpp"
#include "drfit/random.hpp"
#include "drfit/trainer.hpp"

using namespace drfit;

namespace {

LabeledDataset blobs(std::size_t n, std::uint64_t seed) {
  const std::vector<double> mu{1.5, 1.0};
  return synthetic_gaussian_2class(n, mu, Matrix(2, 2, {1.0, 0.2, 0.2, 1.0}), seed);
}

MlpParams small_net(std::uint64_t seed) {
  const std::vector<std::size_t> widths{2, 6, 1};
  return init_mlp(widths, Activation::relu, OutputKind::logistic2, seed);
}

TrainConfig quick(Solver s, std::size_t epochs = 8) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 32;
  tc.theta_lr = 0.2;
  tc.omega_lr = 0.05;
  tc.seed = 77;
  tc.solver = s;
  return tc;
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  const auto x = a.flatten(), y = b.flatten();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(OmegaUpdate, HandExample) {
  std::vector<double> w{1.0, 1.0, 1.0};
  const std::vector<double> loss{0.2, 0.9, 0.1};
  const std::vector<int> y{0, 0, 0};
  DrFitConfig cfg;
  cfg.alpha = 1.3;
  // Pre-normalisation: 1 - 0.5 l = (0.9, 0.55, 0.95), sum 2.4, scale 3 / 2.4.
  omega_update_step(w, loss, y, cfg, 0.5, 4);
  EXPECT_NEAR(w[0], 1.125, 1e-15);
  EXPECT_NEAR(w[1], 0.6875, 1e-15);
  EXPECT_NEAR(w[2], 1.1875, 1e-15);
}

TEST(OmegaUpdate, ClipsAndRenormalisesPerClass) {
  Rng rng(4);
  DrFitConfig cfg;
  cfg.alpha = 0.8;
  cfg.rho = {1.25, 0.8};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(20);
    std::vector<double> w(n), loss(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 2.0);
      loss[i] = rng.uniform(0.0, 3.0);
      y[i] = static_cast<int>(rng.index(2));
    }
    try {
      omega_update_step(w, loss, y, cfg, rng.uniform(0.0, 1.0), 5);
    } catch (const TrainingError&) {
      continue;
    }
    for (int c = 0; c < 2; ++c) {
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (y[i] == c) s += w[i], ++k;
      if (k) {
        EXPECT_NEAR(s / k, cfg.rho_for(c), 1e-10);
      }
    }
    for (double v : w) EXPECT_GE(v, 0.0);
  }
}

TEST(OmegaUpdate, AllClippedIsTrainingError) {
  std::vector<double> w{1.0, 1.0};
  DrFitConfig cfg;
  EXPECT_THROW(omega_update_step(w, std::vector<double>{5.0, 6.0}, std::vector<int>{1, 1}, cfg, 1.0, 9),
               TrainingError);
}

TEST(Batches, PartitionAndStratify) {
  std::vector<int> y;
  for (int i = 0; i < 103; ++i) y.push_back(i % 3 == 0 ? 1 : 0);
  const auto part = ClassPartition::from_labels(y, 2);
  const auto batches = stratified_batches(part, 10, 5);
  EXPECT_EQ(batches.size(), 11u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    std::set<int> classes;
    for (std::size_t i : b) {
      EXPECT_TRUE(seen.insert(i).second);
      classes.insert(y[i]);
    }
    EXPECT_EQ(classes.size(), 2u);
  }
  EXPECT_EQ(seen.size(), y.size());
}

TEST(Evaluate, Examples) {
  LabeledDataset d = blobs(20, 1);
  const std::vector<std::size_t> widths{2, 1};
  MlpParams zero = make_mlp(widths, Activation::identity, OutputKind::logistic2);
  EXPECT_DOUBLE_EQ(evaluate(zero, d), 0.5);  // ties predict class 0
  MlpParams exact = zero;
  exact.layers[0].weight(0, 0) = 1.0;
  LabeledDataset sep;
  sep.features = Matrix(4, 2, {1, 0, 2, 0, -1, 0, -3, 0});
  sep.labels = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(evaluate(exact, sep), 1.0);
  EXPECT_THROW(evaluate(exact, LabeledDataset{Matrix(0, 2), {}, {}, {}, 2}), InputError);
  const auto p = small_net(3);
  EXPECT_EQ(evaluate(p, d), evaluate(p, d));
}

TEST(Train, ZeroEpochs) {
  const auto d = blobs(60, 2);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  const auto init = small_net(4);
  const auto r = train_analytic({&d, nullptr, nullptr}, part, cfg, quick(Solver::analytic, 0), init);
  EXPECT_TRUE(same_params(r.params, init));
  ASSERT_EQ(r.trace.records.size(), 1u);
  const auto want = analytic_weights(per_example_loss(mlp_forward(init, d.features), d.labels), part, cfg);
  EXPECT_EQ(r.weights.omega, want.omega);
  EXPECT_TRUE(std::isnan(r.trace.records[0].validation_accuracy));
}

TEST(Train, HugeAlphaMatchesPlain) {
  const auto d = blobs(120, 5);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  cfg.alpha = 1e9;
  const auto a = train_analytic({&d, &d, nullptr}, part, cfg, quick(Solver::analytic), small_net(6));
  const auto p = train_plain({&d, &d, nullptr}, part, cfg, quick(Solver::plain), small_net(6));
  ASSERT_EQ(a.trace.records.size(), p.trace.records.size());
  for (std::size_t e = 0; e < a.trace.records.size(); ++e)
    EXPECT_NEAR(a.trace.records[e].train_loss, p.trace.records[e].train_loss, 1e-6);
  const auto ta = a.params.flatten(), tp = p.params.flatten();
  for (std::size_t j = 0; j < ta.size(); ++j) EXPECT_NEAR(ta[j], tp[j], 1e-6);
}

TEST(Train, BurnInCoveringAllEpochsMatchesPlain) {
  const auto d = blobs(100, 7);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  cfg.rho = {1.25, 0.8};
  auto tc = quick(Solver::numeric);
  tc.burn_in = tc.epochs;
  const auto n = train(TrainData{&d, nullptr, nullptr}, part, cfg, tc, small_net(8));
  const auto p = train_plain({&d, nullptr, nullptr}, part, cfg, tc, small_net(8));
  EXPECT_TRUE(same_params(n.params, p.params));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(n.weights.omega[i], cfg.rho_for(d.labels[i]));
}

TEST(Train, ZeroBetaMatchesPlain) {
  const auto d = blobs(100, 9);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  auto tc = quick(Solver::numeric);
  tc.omega_lr = 0.0;
  tc.burn_in = 0;
  const auto n = train(TrainData{&d, nullptr, nullptr}, part, cfg, tc, small_net(10));
  const auto p = train_plain({&d, nullptr, nullptr}, part, cfg, tc, small_net(10));
  EXPECT_TRUE(same_params(n.params, p.params));
  for (double w : n.weights.omega) EXPECT_EQ(w, 1.0);
}

TEST(Train, ReducedLossNonIncreasingFullBatch) {
  const auto d = blobs(40, 11);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  cfg.alpha = 0.5;
  cfg.lambda = 0.1;
  auto tc = quick(Solver::analytic, 50);
  tc.batch_size = d.size();
  tc.theta_lr = 1e-3;
  const auto r = train(TrainData{&d, nullptr, nullptr}, part, cfg, tc, small_net(12));
  for (std::size_t e = 1; e < r.trace.records.size(); ++e)
    EXPECT_LE(r.trace.records[e].objective, r.trace.records[e - 1].objective);
}

TEST(Train, NumericWeightsStayFeasible) {
  const auto d = inject_label_noise(blobs(200, 13), {{0.2, 0.2}, 14});
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  cfg.alpha = 0.5;
  cfg.rho = {1.1, 0.9};
  auto tc = quick(Solver::numeric, 10);
  tc.burn_in = 2;
  const auto r = train(TrainData{&d, nullptr, nullptr}, part, cfg, tc, small_net(15));
  for (double w : r.weights.omega) EXPECT_GE(w, 0.0);
  // Batch means equal rho, so full-class means do too (batches partition the class).
  for (const auto& g : part.groups()) {
    double s = 0.0;
    for (std::size_t i : g.members) s += r.weights.omega[i];
    EXPECT_NEAR(s / g.members.size(), cfg.rho_for(g.label), 1e-10);
  }
}

TEST(Train, DeterministicTrace) {
  const auto d = inject_label_noise(blobs(150, 16), {{0.2, 0.2}, 17});
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  for (Solver s : {Solver::analytic, Solver::numeric, Solver::plain}) {
    const auto a = train(TrainData{&d, &d, &d}, part, cfg, quick(s), small_net(18));
    const auto b = train(TrainData{&d, &d, &d}, part, cfg, quick(s), small_net(18));
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
    EXPECT_EQ(std::memcmp(a.trace.records.data(), b.trace.records.data(),
                          a.trace.records.size() * sizeof(EpochRecord)),
              0);
    EXPECT_EQ(a.weights.omega, b.weights.omega);
  }
}

TEST(Train, DivergenceReportsEpoch) {
  const auto d = blobs(60, 19);
  const auto part = ClassPartition::from_labels(d.labels, 2);
  DrFitConfig cfg;
  auto tc = quick(Solver::plain, 5);
  tc.theta_lr = 1e300;
  try {
    train(TrainData{&d, nullptr, nullptr}, part, cfg, tc, small_net(20));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1u);
  }
}

TEST(Train, NoisyBlobsStayCloseToCleanRun) {
  const auto clean = blobs(600, 21);
  const auto test = blobs(2000, 22);
  const auto noisy = inject_label_noise(clean, {{0.2, 0.2}, 23});
  DrFitConfig cfg;
  cfg.alpha = 0.5;
  auto tc = quick(Solver::analytic, 30);
  tc.theta_lr = 0.1;
  const auto ref = train(TrainData{&clean, nullptr, &test},
                         ClassPartition::from_labels(clean.labels, 2), cfg, tc, small_net(24));
  const auto got = train(TrainData{&noisy, nullptr, &test},
                         ClassPartition::from_labels(noisy.labels, 2), cfg, tc, small_net(24));
  EXPECT_NEAR(got.trace.records.back().test_accuracy, ref.trace.records.back().test_accuracy, 0.01);
}
