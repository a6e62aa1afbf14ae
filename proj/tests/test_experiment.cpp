#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>

#include "drfit/error.hpp"
#include "drfit/experiment.hpp"

using namespace drfit;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("drfit_test_experiment_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_synthetic() {
  ExperimentConfig c;
  c.kind = ExperimentKind::synthetic_train;
  c.data.synthetic_n = 60;
  c.data.synthetic_test_n = 100;
  c.noise = {{0.2, 0.2}, 3};
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.replications = 2;
  return c;
}

}  // namespace

TEST(Config, JsonRoundTripKeepsDigest) {
  ExperimentConfig c = small_synthetic();
  c.drfit.alpha = 0.7;
  c.train.solver = Solver::numeric;
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(config_digest(c), config_digest(back));
  EXPECT_EQ(to_json(c), to_json(back));
}

TEST(Config, DigestIgnoresKeyOrder) {
  const json a = json::parse(R"({"kind":"synthetic-train","drfit":{"alpha":0.5,"lambda":0.1},"seed":4})");
  const json b = json::parse(R"({"seed":4,"drfit":{"lambda":0.1,"alpha":0.5},"kind":"synthetic-train"})");
  EXPECT_EQ(config_digest(config_from_json(a)), config_digest(config_from_json(b)));
}

TEST(Config, DigestTracksRelevantFieldsOnly) {
  const ExperimentConfig base = small_synthetic();
  const std::string d = config_digest(base);
  EXPECT_EQ(d.size(), 16u);
  ExperimentConfig c = base;
  c.output_dir = "elsewhere";
  c.workers = 7;
  EXPECT_EQ(config_digest(c), d);
  c = base;
  c.drfit.alpha = 2.0;
  EXPECT_NE(config_digest(c), d);
  c = base;
  c.seed = 9;
  EXPECT_NE(config_digest(c), d);
  c = base;
  c.train.epochs = 4;
  EXPECT_NE(config_digest(c), d);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(json::parse(R"({"drfit":{"alpah":1}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"extra":1})")), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  ExperimentConfig c = small_synthetic();
  c.drfit.alpha = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_synthetic();
  c.noise.rates = {0.6, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_synthetic();
  c.replications = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Override, ParsesJsonAndFallsBackToString) {
  json doc = json::object();
  apply_override(doc, "train.epochs=50");
  apply_override(doc, "drfit.rho=[1.25,0.8]");
  apply_override(doc, "train.solver=numeric");
  EXPECT_EQ(doc["train"]["epochs"], 50);
  EXPECT_EQ(doc["drfit"]["rho"], json::parse("[1.25,0.8]"));
  EXPECT_EQ(doc["train"]["solver"], "numeric");
  const ExperimentConfig c = config_from_json(doc);
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_EQ(c.train.solver, Solver::numeric);
}

TEST(Override, MalformedAssignmentRejected) {
  json doc = json::object();
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST(Sweep, SelectBestSkipsDeadPointsAndBreaksTiesUpward) {
  std::vector<SweepPoint> grid{{0.5, 0.0, 0.90, 2, 0}, {1.0, 0.0, 0.99, 0, 2}, {2.0, 0.0, 0.90, 2, 0},
                               {2.0, 0.1, 0.90, 1, 1}, {0.25, 0.1, 0.85, 2, 0}};
  const auto best = select_best(grid);
  ASSERT_TRUE(best);
  EXPECT_EQ(best->alpha, 2.0);
  EXPECT_EQ(best->lambda, 0.1);
  std::reverse(grid.begin(), grid.end());
  const auto again = select_best(grid);
  ASSERT_TRUE(again);
  EXPECT_EQ(again->alpha, 2.0);
  EXPECT_EQ(again->lambda, 0.1);
}

TEST(Sweep, AllCrashedGivesNoBest) {
  const std::vector<SweepPoint> grid{{0.5, 0.0, 0.5, 0, 3}, {1.0, 0.0, 0.5, 0, 3}};
  EXPECT_FALSE(select_best(grid));
}

TEST(Training, WritesArtifactsWithFixedHeaders) {
  ExperimentConfig c = small_synthetic();
  c.output_dir = scratch("artifacts").string();
  const auto s = run_training(c, data_root());
  ASSERT_EQ(s.failed, 0u);
  const auto agg = std::filesystem::path(c.output_dir) / s.digest;
  for (const char* f : {"resolved_config.json", "mean_accuracy.csv", "mean_weights.csv", "summary.json"})
    EXPECT_TRUE(std::filesystem::exists(agg / f)) << f;
  const auto run = std::filesystem::path(c.output_dir) / (s.digest + "-seed1");
  const std::string metrics = slurp(run / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "epoch,train_loss,objective,train_accuracy,validation_accuracy,test_accuracy");
  const std::string weights = slurp(run / "weights.csv");
  EXPECT_EQ(weights.substr(0, weights.find('\n')), "index,label,true_label,mislabeled,omega");
  // Record 0 plus one line per epoch.
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1 + 1 + 3);
  std::filesystem::remove_all(c.output_dir);
}

TEST(Training, ZeroEpochsRecordsInitialStateOnly) {
  ExperimentConfig c = small_synthetic();
  c.train.epochs = 0;
  c.replications = 1;
  const auto s = run_training(c, data_root(), false);
  ASSERT_EQ(s.failed, 0u);
  ASSERT_EQ(s.runs[0].trace.records.size(), 1u);
  EXPECT_EQ(s.runs[0].trace.records[0].epoch, 0u);
}

TEST(Training, ReplicationsAreReproducibleAcrossWorkerCounts) {
  ExperimentConfig a = small_synthetic();
  a.replications = 3;
  a.workers = 1;
  a.output_dir = scratch("serial").string();
  ExperimentConfig b = a;
  b.workers = 3;
  b.output_dir = scratch("parallel").string();
  const auto sa = run_training(a, data_root());
  const auto sb = run_training(b, data_root());
  ASSERT_EQ(sa.digest, sb.digest);
  for (std::uint64_t r = 0; r < 3; ++r) {
    const std::string dir = sa.digest + "-seed" + std::to_string(a.seed + r);
    EXPECT_EQ(slurp(std::filesystem::path(a.output_dir) / dir / "metrics.csv"),
              slurp(std::filesystem::path(b.output_dir) / dir / "metrics.csv"));
    EXPECT_EQ(slurp(std::filesystem::path(a.output_dir) / dir / "weights.csv"),
              slurp(std::filesystem::path(b.output_dir) / dir / "weights.csv"));
  }
  std::filesystem::remove_all(a.output_dir);
  std::filesystem::remove_all(b.output_dir);
}

TEST(Detect, RejectsWrongHeader) {
  const auto dir = scratch("detect");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "weights.csv") << "a,b\n1,2\n";
  EXPECT_THROW(run_detect(dir / "weights.csv", dir), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Detect, ReproducesStoredRunAnalysis) {
  ExperimentConfig c = small_synthetic();
  c.replications = 1;
  c.output_dir = scratch("detect_run").string();
  const auto s = run_training(c, data_root());
  ASSERT_TRUE(s.runs[0].auc);
  const auto run = std::filesystem::path(c.output_dir) / (s.digest + "-seed1");
  const auto rep = run_detect(run / "weights.csv", run);
  EXPECT_NEAR(rep.auc, *s.runs[0].auc, 1e-12);
  EXPECT_TRUE(std::filesystem::exists(run / "separation_curve.csv"));
  std::filesystem::remove_all(c.output_dir);
}
