#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "drfit/error.hpp"
#include "drfit/experiment.hpp"

using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> kind;
  std::optional<double> alpha, lambda;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications, workers, epochs;
  std::optional<std::string> solver, output_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "JSON experiment config");
  cmd->add_option("--set", f.sets, "Override a config key, e.g. --set train.epochs=50")->take_all();
  cmd->add_option("--kind", f.kind, "kind");
  cmd->add_option("--alpha", f.alpha, "drfit.alpha");
  cmd->add_option("--lambda", f.lambda, "drfit.lambda");
  cmd->add_option("--seed", f.seed, "seed");
  cmd->add_option("--replications", f.replications, "replications");
  cmd->add_option("--workers", f.workers, "workers");
  cmd->add_option("--epochs", f.epochs, "train.epochs");
  cmd->add_option("--solver", f.solver, "train.solver (analytic | numeric | plain)");
  cmd->add_option("-o,--output-dir", f.output_dir, "output_dir");
}

// File first, then --set, then the named flags.
drfit::ExperimentConfig resolve_config(const CommonFlags& f) {
  json doc = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw drfit::IoError("cannot open config " + f.config);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw drfit::ParseError(drfit::ParseErrorKind::malformed, f.config + ": " + e.what());
    }
  }
  for (const auto& s : f.sets) drfit::apply_override(doc, s);
  if (f.kind) doc["kind"] = *f.kind;
  if (f.alpha) doc["drfit"]["alpha"] = *f.alpha;
  if (f.lambda) doc["drfit"]["lambda"] = *f.lambda;
  if (f.seed) doc["seed"] = *f.seed;
  if (f.replications) doc["replications"] = *f.replications;
  if (f.workers) doc["workers"] = *f.workers;
  if (f.epochs) doc["train"]["epochs"] = *f.epochs;
  if (f.solver) doc["train"]["solver"] = *f.solver;
  if (f.output_dir) doc["output_dir"] = *f.output_dir;
  return drfit::config_from_json(doc);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drfit: training with entropy-penalised observation weights"};
  app.require_subcommand(1);

  CommonFlags train_f, theory_f, sweep_f, prep_f;
  auto* train_cmd = app.add_subcommand("train", "Run seeded training replications");
  add_common(train_cmd, train_f);

  auto* theory_cmd = app.add_subcommand("theory", "Population-level checks; writes report.json and report.csv");
  add_common(theory_cmd, theory_f);

  auto* sweep_cmd = app.add_subcommand("sweep", "Grid search over alpha and lambda by validation accuracy");
  add_common(sweep_cmd, sweep_f);
  std::vector<double> alphas, lambdas;
  sweep_cmd->add_option("--alphas", alphas, "alpha grid")->delimiter(',');
  sweep_cmd->add_option("--lambdas", lambdas, "lambda grid")->delimiter(',');

  auto* detect_cmd = app.add_subcommand("detect", "Re-run mislabel analysis on a stored weights.csv");
  std::string weights_path, detect_out;
  detect_cmd->add_option("weights", weights_path, "weights.csv from a run directory")->required();
  detect_cmd->add_option("-o,--out", detect_out, "output directory (default: next to weights.csv)");

  auto* prep_cmd = app.add_subcommand("mnist-prep", "Write the filtered, subsampled, corrupted data as CSV");
  add_common(prep_cmd, prep_f);
  std::string prep_out;
  prep_cmd->add_option("--out", prep_out, "snapshot directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = resolve_config(train_f);
      const auto s = drfit::run_training(cfg, drfit::data_root());
      std::cout << "digest " << s.digest << "\n"
                << "runs " << s.runs.size() << " failed " << s.failed << " crashed " << s.crashed << "\n"
                << "mean_final_test_accuracy " << num(s.mean_final_test) << "\n"
                << "mean_peak_test_accuracy " << num(s.mean_peak_test) << "\n";
      if (s.mean_auc) std::cout << "mean_detection_auc " << num(*s.mean_auc) << "\n";
      for (const auto& r : s.runs)
        if (!r.ok) std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
    } else if (*theory_cmd) {
      const auto cfg = resolve_config(theory_f);
      bool all = true;
      for (const auto& e : drfit::run_theory(cfg)) {
        std::cout << (e.pass ? "PASS " : "FAIL ") << e.key << " = " << e.value;
        if (e.tolerance > 0) std::cout << " (expected " << e.expected << " +- " << e.tolerance << ")";
        if (!e.note.empty()) std::cout << "  # " << e.note;
        std::cout << "\n";
        all = all && e.pass;
      }
      std::cout << "report " << cfg.output_dir << "/" << drfit::config_digest(cfg) << "/report.json\n";
      return all ? 0 : 1;
    } else if (*sweep_cmd) {
      if (!alphas.empty()) sweep_f.sets.push_back("sweep.alphas=" + json(alphas).dump());
      if (!lambdas.empty()) sweep_f.sets.push_back("sweep.lambdas=" + json(lambdas).dump());
      if (!sweep_f.kind) sweep_f.kind = "hyper-sweep";
      const auto cfg = resolve_config(sweep_f);
      const auto res = drfit::run_sweep(cfg, drfit::data_root());
      for (const auto& p : res.grid)
        std::cout << "alpha " << p.alpha << " lambda " << p.lambda << " validation " << num(p.mean_validation)
                  << " ok " << p.ok << " crashed " << p.crashed << "\n";
      if (!res.best) throw drfit::TrainingError("every grid point crashed", 0);
      std::cout << "best alpha " << res.best->alpha << " lambda " << res.best->lambda << "\n";
    } else if (*detect_cmd) {
      const std::filesystem::path w(weights_path);
      const auto out = detect_out.empty() ? w.parent_path() : std::filesystem::path(detect_out);
      const auto rep = drfit::run_detect(w, out);
      std::cout << "detection_auc " << num(rep.auc) << "\n"
                << "threshold_pair_90 " << (rep.threshold_pair_90 ? "yes" : "no") << "\n";
    } else if (*prep_cmd) {
      const auto cfg = resolve_config(prep_f);
      drfit::run_mnist_prep(cfg, drfit::data_root(), prep_out);
      std::cout << "wrote " << prep_out << "\n";
    }
  } catch (const drfit::Error& e) {
    std::cerr << "error [" << drfit::to_string(e.category()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  }
  return 0;
}
