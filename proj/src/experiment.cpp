#include "drfit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "drfit/error.hpp"
#include "drfit/random.hpp"

#ifndef DRFIT_DEFAULT_DATA_ROOT
#define DRFIT_DEFAULT_DATA_ROOT "data"
#endif

namespace drfit {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> items;
  std::string name(E e) const {
    for (const auto& [k, n] : items)
      if (k == e) return n;
    throw ConfigError("unnamed enum value");
  }
  E parse(const std::string& s, const char* what) const {
    for (const auto& [k, n] : items)
      if (s == n) return k;
    std::string opts;
    for (const auto& it : items) opts += std::string(opts.empty() ? "" : ", ") + it.second;
    throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + opts + ")");
  }
};

const EnumNames<ExperimentKind> kKinds{{{ExperimentKind::mnist_1v7, "mnist-1v7"},
                                        {ExperimentKind::synthetic_train, "synthetic-train"},
                                        {ExperimentKind::theory_1d, "theory-1d"},
                                        {ExperimentKind::theory_mv, "theory-mv"},
                                        {ExperimentKind::theory_counterexample, "theory-counterexample"},
                                        {ExperimentKind::hyper_sweep, "hyper-sweep"}}};
const EnumNames<Solver> kSolvers{{{Solver::analytic, "analytic"}, {Solver::numeric, "numeric"}, {Solver::plain, "plain"}}};
const EnumNames<OutputKind> kOutputs{{{OutputKind::softmax, "softmax"}, {OutputKind::logistic2, "logistic2"}}};
const EnumNames<RhoMode> kRhoModes{{{RhoMode::rates, "rates"}, {RhoMode::confusion, "confusion"}, {RhoMode::uniform, "uniform"}}};

bool is_training(ExperimentKind k) { return k == ExperimentKind::mnist_1v7 || k == ExperimentKind::synthetic_train; }

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Reads a JSON object section, rejecting keys it does not know.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  // Call after the last get; throws on any key not read.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + path_ + k);
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + path_ + key + ": " + e.what());
    }
  }
  template <class E>
  void get_enum(const char* key, E& out, const EnumNames<E>& names) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = names.parse(s, key);
  }
  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return std::optional<Section>(std::in_place, j_.at(key), path_ + key + ".");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json data_json(const DataConfig& d, ExperimentKind kind, bool all) {
  json j;
  const bool mnist = all || kind == ExperimentKind::mnist_1v7;
  const bool synth = all || kind == ExperimentKind::synthetic_train;
  if (mnist) {
    j["train_images"] = d.train_images;
    j["train_labels"] = d.train_labels;
    j["test_images"] = d.test_images;
    j["test_labels"] = d.test_labels;
    j["snapshot_dir"] = d.snapshot_dir;
    j["train_size"] = d.train_size;
  }
  if (synth) {
    j["synthetic_n"] = d.synthetic_n;
    j["synthetic_test_n"] = d.synthetic_test_n;
    j["synthetic_mu"] = d.synthetic_mu;
    j["synthetic_sigma"] = d.synthetic_sigma;
  }
  j["validation_fraction"] = d.validation_fraction;
  j["seed"] = d.seed;
  return j;
}

json train_json(const ExperimentConfig& c) {
  return {{"epochs", c.train.epochs},         {"batch_size", c.train.batch_size},
          {"theta_lr", c.train.theta_lr},     {"omega_lr", c.train.omega_lr},
          {"burn_in", c.train.burn_in},       {"update_frequency", c.train.update_frequency},
          {"solver", kSolvers.name(c.train.solver)}};
}

json theory_json(const TheoryConfig& t, ExperimentKind kind, bool all) {
  json j{{"q", t.q}};
  if (all || kind == ExperimentKind::theory_1d) {
    j["dist"] = t.dist;
    if (all || t.dist == "gaussian") j["mean"] = t.mean, j["variance"] = t.variance;
    if (all || t.dist == "uniform") j["a"] = t.a, j["b"] = t.b;
  }
  if (all || kind == ExperimentKind::theory_mv) {
    j["mv_case"] = t.mv_case;
    if (all || t.mv_case == "gaussian") j["cov"] = t.cov;
  }
  return j;
}

// Only the fields that influence the experiment named by `kind`, unless `all`.
json build_json(const ExperimentConfig& c, bool all) {
  json j;
  j["kind"] = kKinds.name(c.kind);
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  const ExperimentKind train_kind = c.kind == ExperimentKind::hyper_sweep ? c.sweep.base : c.kind;
  if (all || is_training(train_kind)) {
    j["drfit"] = {{"alpha", c.drfit.alpha}, {"lambda", c.drfit.lambda}, {"rho", c.drfit.rho}};
    j["train"] = train_json(c);
    j["noise"] = {{"rates", c.noise.rates}, {"seed", c.noise.seed}};
    j["rho_mode"] = kRhoModes.name(c.rho_mode);
    j["data"] = data_json(c.data, train_kind, all);
    j["model"] = {{"hidden", c.model.hidden}, {"output", kOutputs.name(c.model.output)}};
  }
  if (all || !is_training(c.kind)) {
    if (c.kind != ExperimentKind::hyper_sweep || all) j["theory"] = theory_json(c.theory, c.kind, all);
  }
  if (all || c.kind == ExperimentKind::hyper_sweep)
    j["sweep"] = {{"base", kKinds.name(c.sweep.base)}, {"alphas", c.sweep.alphas}, {"lambdas", c.sweep.lambdas}};
  if (all) {
    j["output_dir"] = c.output_dir;
    j["workers"] = c.workers;
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& rel) {
  const std::filesystem::path p(rel);
  return p.is_absolute() ? p : root / p;
}

std::vector<double> resolve_rho(const ExperimentConfig& cfg, const LabeledDataset& train,
                                const LabeledDataset& validation) {
  const std::size_t k = train.num_classes;
  if (!cfg.drfit.rho.empty()) return cfg.drfit.rho;
  switch (cfg.rho_mode) {
    case RhoMode::uniform:
      return uniform_rho(k);
    case RhoMode::confusion:
      if (!validation.true_labels) throw ConfigError("rho_mode confusion needs clean validation labels");
      return estimate_rho_from_confusion(confusion_counts(validation));
    case RhoMode::rates: {
      std::vector<std::size_t> sizes(k, 0);
      const auto& truth = train.true_labels ? *train.true_labels : train.labels;
      for (int y : truth) ++sizes[static_cast<std::size_t>(y)];
      std::vector<double> rates = cfg.noise.rates;
      if (rates.empty()) rates.assign(k, 0.0);
      return estimate_rho_from_rates(sizes, rates);
    }
  }
  throw ConfigError("unknown rho mode");
}

LabeledDataset noisy(LabeledDataset d, const NoiseSpec& spec) {
  if (spec.rates.empty()) return d;
  return inject_label_noise(std::move(d), spec);
}

double majority_share(const LabeledDataset& d) {
  if (d.size() == 0) return kNaN;
  const auto counts = d.class_counts();
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(d.size());
}

// Runs f(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F f) {
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  for (auto& th : pool) th.join();
}

json run_record_json(const std::string& digest, const RunOutcome& r) {
  json j{{"digest", digest},
         {"seed", r.seed},
         {"status", r.ok ? "ok" : "failed"},
         {"error", r.error},
         {"crashed", r.crashed},
         {"wall_seconds", r.wall_seconds},
         {"metrics_file", "metrics.csv"},
         {"weights_file", "weights.csv"}};
  if (r.ok && !r.trace.records.empty()) {
    const auto& last = r.trace.records.back();
    j["epochs"] = last.epoch;
    j["final"] = {{"train_loss", last.train_loss},
                  {"test_accuracy", std::isnan(last.test_accuracy) ? json(nullptr) : json(last.test_accuracy)},
                  {"validation_accuracy",
                   std::isnan(last.validation_accuracy) ? json(nullptr) : json(last.validation_accuracy)}};
  }
  if (r.auc) j["detection_auc"] = *r.auc;
  return j;
}

void write_weights_csv(const std::filesystem::path& path, std::span<const double> omega, const LabeledDataset& d) {
  std::ostringstream out;
  const bool truth = d.true_labels.has_value() && d.mislabel_mask.has_value();
  out << "index,label" << (truth ? ",true_label,mislabeled" : "") << ",omega\n";
  for (std::size_t i = 0; i < omega.size(); ++i) {
    out << i << ',' << d.labels[i];
    if (truth) out << ',' << (*d.true_labels)[i] << ',' << ((*d.mislabel_mask)[i] ? 1 : 0);
    out << ',' << fmt(omega[i]) << '\n';
  }
  write_text(path, out.str());
}

void write_extremes_csv(const std::filesystem::path& path, std::span<const double> omega, const LabeledDataset& d,
                        std::size_t count) {
  std::vector<std::size_t> order(omega.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return omega[a] < omega[b]; });
  count = std::min(count, order.size());
  std::ostringstream out;
  out << "kind,rank,index,label,true_label,omega\n";
  auto row = [&](const char* kind, std::size_t rank, std::size_t i) {
    out << kind << ',' << rank << ',' << i << ',' << d.labels[i] << ','
        << (d.true_labels ? (*d.true_labels)[i] : -1) << ',' << fmt(omega[i]) << '\n';
  };
  for (std::size_t r = 0; r < count; ++r) row("lowest", r, order[r]);
  for (std::size_t r = 0; r < count; ++r) row("highest", r, order[order.size() - 1 - r]);
  write_text(path, out.str());
}

TrainingSummary run_training_prepared(const ExperimentConfig& cfg, const PreparedData& data, bool write) {
  TrainingSummary s;
  s.digest = config_digest(cfg);
  s.runs.resize(cfg.replications);
  parallel_for(cfg.replications, cfg.workers,
               [&](std::size_t r) { s.runs[r] = run_once(cfg, data, cfg.seed + r); });

  std::vector<const RunOutcome*> good;
  for (const auto& r : s.runs) {
    if (!r.ok) ++s.failed;
    else {
      good.push_back(&r);
      if (r.crashed) ++s.crashed;
    }
  }
  if (!good.empty()) {
    const std::size_t epochs = good.front()->trace.records.size();
    s.mean_curve.resize(epochs);
    for (std::size_t e = 0; e < epochs; ++e) {
      EpochRecord m{};
      m.epoch = e;
      for (const RunOutcome* r : good) {
        const auto& x = r->trace.records[e];
        m.train_loss += x.train_loss;
        m.objective += x.objective;
        m.train_accuracy += x.train_accuracy;
        m.validation_accuracy += x.validation_accuracy;
        m.test_accuracy += x.test_accuracy;
      }
      const double n = static_cast<double>(good.size());
      m.train_loss /= n, m.objective /= n, m.train_accuracy /= n, m.validation_accuracy /= n, m.test_accuracy /= n;
      s.mean_curve[e] = m;
    }
    s.mean_final_test = s.mean_curve.back().test_accuracy;
    s.mean_final_validation = s.mean_curve.back().validation_accuracy;
    s.mean_peak_test = -std::numeric_limits<double>::infinity();
    for (const auto& m : s.mean_curve) s.mean_peak_test = std::max(s.mean_peak_test, m.test_accuracy);

    std::vector<std::vector<double>> all;
    double auc_sum = 0.0;
    std::size_t auc_n = 0;
    for (const RunOutcome* r : good) {
      all.push_back(r->omega);
      if (r->auc) auc_sum += *r->auc, ++auc_n;
    }
    s.mean_omega = mean_weights(all);
    if (auc_n) s.mean_auc = auc_sum / static_cast<double>(auc_n);
    if (data.train.mislabel_mask) {
      const auto& mask = *data.train.mislabel_mask;
      const bool both = std::count(mask.begin(), mask.end(), true) > 0 && std::count(mask.begin(), mask.end(), false) > 0;
      if (both) {
        s.pooled_auc = detection_auc(s.mean_omega, mask);
        s.threshold_pair_90 =
            has_threshold_pair(separation_curve(s.mean_omega, mask, threshold_grid(s.mean_omega)), 0.9, 0.9);
      }
    }
  }

  if (!write) return s;
  const std::filesystem::path out(cfg.output_dir);
  const json resolved = build_json(cfg, true);
  for (const auto& r : s.runs) {
    const auto dir = out / (s.digest + "-seed" + std::to_string(r.seed));
    ensure_dir(dir);
    write_metrics_csv(dir / "metrics.csv", r.trace.records);
    if (r.ok) write_weights_csv(dir / "weights.csv", r.omega, data.train);
    write_text(dir / "run_record.json", run_record_json(s.digest, r).dump(2) + "\n");
    write_text(dir / "resolved_config.json", resolved.dump(2) + "\n");
  }
  const auto agg = out / s.digest;
  ensure_dir(agg);
  write_text(agg / "resolved_config.json", resolved.dump(2) + "\n");
  write_metrics_csv(agg / "mean_accuracy.csv", s.mean_curve);
  if (!s.mean_omega.empty()) {
    write_weights_csv(agg / "mean_weights.csv", s.mean_omega, data.train);
    write_extremes_csv(agg / "extreme_weights.csv", s.mean_omega, data.train, 10);
    if (data.train.mislabel_mask) {
      const auto& mask = *data.train.mislabel_mask;
      write_histogram_csv(agg / "weight_histogram.csv", weight_histogram(s.mean_omega, mask));
      write_separation_csv(agg / "separation_curve.csv",
                           separation_curve(s.mean_omega, mask, threshold_grid(s.mean_omega)));
    }
  }
  json summary{{"digest", s.digest},
               {"replications", cfg.replications},
               {"failed", s.failed},
               {"crashed", s.crashed},
               {"mean_final_test_accuracy", s.mean_final_test},
               {"mean_peak_test_accuracy", s.mean_peak_test},
               {"mean_final_validation_accuracy", s.mean_final_validation},
               {"threshold_pair_90", s.threshold_pair_90}};
  if (s.mean_auc) summary["mean_detection_auc"] = *s.mean_auc;
  if (s.pooled_auc) summary["mean_weight_detection_auc"] = *s.pooled_auc;
  for (auto& [k, v] : summary.items())
    if (v.is_number_float() && !std::isfinite(v.get<double>())) v = nullptr;
  write_text(agg / "summary.json", summary.dump(2) + "\n");
  return s;
}

}  // namespace

std::string to_string(ExperimentKind kind) { return kKinds.name(kind); }
ExperimentKind parse_kind(const std::string& s) { return kKinds.parse(s, "experiment kind"); }

void ExperimentConfig::validate() const {
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  const ExperimentKind train_kind = kind == ExperimentKind::hyper_sweep ? sweep.base : kind;
  if (kind == ExperimentKind::hyper_sweep) {
    if (!is_training(sweep.base)) throw ConfigError("sweep.base must be a training experiment");
    if (sweep.alphas.empty() || sweep.lambdas.empty()) throw ConfigError("sweep grids must be nonempty");
    for (double a : sweep.alphas)
      if (!(a > 0.0)) throw ConfigError("sweep alphas must be positive");
    for (double l : sweep.lambdas)
      if (!(l >= 0.0)) throw ConfigError("sweep lambdas must be nonnegative");
  }
  if (is_training(train_kind)) {
    train.validate();
    if (!(drfit.alpha > 0.0)) throw ConfigError("drfit.alpha must be positive");
    if (!(drfit.lambda >= 0.0)) throw ConfigError("drfit.lambda must be nonnegative");
    for (double q : noise.rates)
      if (!(q >= 0.0 && q < 0.5)) throw ConfigError("noise rates must lie in [0, 0.5)");
    if (!noise.rates.empty() && noise.rates.size() != 2) throw ConfigError("noise.rates needs one rate per class");
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0))
      throw ConfigError("data.validation_fraction must lie in [0, 1)");
    if (model.hidden.empty()) throw ConfigError("model.hidden needs at least one layer");
    for (std::size_t h : model.hidden)
      if (h == 0) throw ConfigError("hidden widths must be positive");
    if (train_kind == ExperimentKind::synthetic_train) {
      if (data.synthetic_n < 2) throw ConfigError("data.synthetic_n must be at least 2");
      if (data.synthetic_mu.empty()) throw ConfigError("data.synthetic_mu is empty");
      if (!(data.synthetic_sigma > 0.0)) throw ConfigError("data.synthetic_sigma must be positive");
    }
  } else {
    if (!(theory.q >= 0.0 && theory.q < 0.5)) throw ConfigError("theory.q must lie in [0, 0.5)");
    if (kind == ExperimentKind::theory_1d && theory.dist != "gaussian" && theory.dist != "uniform")
      throw ConfigError("theory.dist must be gaussian or uniform");
    if (kind == ExperimentKind::theory_mv) {
      if (theory.mv_case != "gaussian" && theory.mv_case != "boxes")
        throw ConfigError("theory.mv_case must be gaussian or boxes");
      if (theory.cov.size() != 4) throw ConfigError("theory.cov must hold four entries (2x2 row-major)");
    }
  }
}

json to_json(const ExperimentConfig& cfg) { return build_json(cfg, true); }

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  {
    Section top(j, "");
    top.get_enum("kind", c.kind, kKinds);
    top.get("replications", c.replications);
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);
    top.get("workers", c.workers);
    top.get_enum("rho_mode", c.rho_mode, kRhoModes);
    if (auto s = top.sub("drfit")) {
      s->get("alpha", c.drfit.alpha);
      s->get("lambda", c.drfit.lambda);
      s->get("rho", c.drfit.rho);
      s->finish();
    }
    if (auto s = top.sub("train")) {
      s->get("epochs", c.train.epochs);
      s->get("batch_size", c.train.batch_size);
      s->get("theta_lr", c.train.theta_lr);
      s->get("omega_lr", c.train.omega_lr);
      s->get("burn_in", c.train.burn_in);
      s->get("update_frequency", c.train.update_frequency);
      s->get_enum("solver", c.train.solver, kSolvers);
      s->finish();
    }
    if (auto s = top.sub("noise")) {
      s->get("rates", c.noise.rates);
      s->get("seed", c.noise.seed);
      s->finish();
    }
    if (auto s = top.sub("data")) {
      s->get("train_images", c.data.train_images);
      s->get("train_labels", c.data.train_labels);
      s->get("test_images", c.data.test_images);
      s->get("test_labels", c.data.test_labels);
      s->get("snapshot_dir", c.data.snapshot_dir);
      s->get("train_size", c.data.train_size);
      s->get("validation_fraction", c.data.validation_fraction);
      s->get("synthetic_n", c.data.synthetic_n);
      s->get("synthetic_test_n", c.data.synthetic_test_n);
      s->get("synthetic_mu", c.data.synthetic_mu);
      s->get("synthetic_sigma", c.data.synthetic_sigma);
      s->get("seed", c.data.seed);
      s->finish();
    }
    if (auto s = top.sub("model")) {
      s->get("hidden", c.model.hidden);
      s->get_enum("output", c.model.output, kOutputs);
      s->finish();
    }
    if (auto s = top.sub("theory")) {
      s->get("dist", c.theory.dist);
      s->get("mean", c.theory.mean);
      s->get("variance", c.theory.variance);
      s->get("a", c.theory.a);
      s->get("b", c.theory.b);
      s->get("q", c.theory.q);
      s->get("mv_case", c.theory.mv_case);
      s->get("cov", c.theory.cov);
      s->finish();
    }
    if (auto s = top.sub("sweep")) {
      s->get_enum("base", c.sweep.base, kKinds);
      s->get("alphas", c.sweep.alphas);
      s->get("lambdas", c.sweep.lambdas);
      s->finish();
    }
    top.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseErrorKind::malformed, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty path component in override " + key);
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override path crosses a non-object at " + part);
      *node = json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

std::string config_digest(const ExperimentConfig& cfg) {
  const std::string text = build_json(cfg, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::filesystem::path data_root() {
  if (const char* env = std::getenv("DRFIT_DATA_ROOT"); env && *env) return env;
  return DRFIT_DEFAULT_DATA_ROOT;
}

PreparedData prepare_data(const ExperimentConfig& cfg, const std::filesystem::path& root) {
  const ExperimentKind kind = cfg.kind == ExperimentKind::hyper_sweep ? cfg.sweep.base : cfg.kind;
  PreparedData out;
  if (kind == ExperimentKind::mnist_1v7 && !cfg.data.snapshot_dir.empty()) {
    const auto dir = resolve(root, cfg.data.snapshot_dir);
    out.train = read_dataset_csv(dir / "train.csv");
    out.validation = read_dataset_csv(dir / "validation.csv");
    out.test = read_dataset_csv(dir / "test.csv");
  } else {
    LabeledDataset pool, test;
    if (kind == ExperimentKind::mnist_1v7) {
      const auto tr = load_mnist_idx(resolve(root, cfg.data.train_images), resolve(root, cfg.data.train_labels));
      const auto te = load_mnist_idx(resolve(root, cfg.data.test_images), resolve(root, cfg.data.test_labels));
      pool = subsample(prepare_ones_vs_sevens(tr), cfg.data.train_size, cfg.data.seed);
      test = prepare_ones_vs_sevens(te);
    } else if (kind == ExperimentKind::synthetic_train) {
      const std::size_t d = cfg.data.synthetic_mu.size();
      Matrix sigma(d, d);
      for (std::size_t i = 0; i < d; ++i) sigma(i, i) = cfg.data.synthetic_sigma;
      pool = synthetic_gaussian_2class(cfg.data.synthetic_n, cfg.data.synthetic_mu, sigma, cfg.data.seed);
      test = synthetic_gaussian_2class(cfg.data.synthetic_test_n, cfg.data.synthetic_mu, sigma,
                                       derive_seed(cfg.data.seed, 2));
    } else {
      throw ConfigError(to_string(kind) + " has no training data");
    }
    pool = noisy(std::move(pool), cfg.noise);
    if (cfg.data.validation_fraction > 0.0) {
      auto [rest, held] = split_holdout(pool, cfg.data.validation_fraction, derive_seed(cfg.data.seed, 1));
      out.train = std::move(rest);
      out.validation = std::move(held);
    } else {
      out.train = std::move(pool);
    }
    out.test = std::move(test);
  }
  out.train.validate();
  out.input_dim = out.train.features.cols();
  out.rho = resolve_rho(cfg, out.train, out.validation);
  return out;
}

RunOutcome run_once(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  RunOutcome r;
  r.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::vector<std::size_t> widths{data.input_dim};
    widths.insert(widths.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
    widths.push_back(cfg.model.output == OutputKind::softmax ? data.train.num_classes : 1);
    MlpParams init = init_mlp(widths, Activation::relu, cfg.model.output, derive_seed(seed, 0));
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    DrFitConfig dc = cfg.drfit;
    dc.rho = data.rho;
    const auto part = ClassPartition::from_labels(data.train.labels, data.train.num_classes);
    TrainData td{&data.train, data.validation.size() ? &data.validation : nullptr,
                 data.test.size() ? &data.test : nullptr};
    TrainResult res = train(td, part, dc, tc, std::move(init));
    r.trace = std::move(res.trace);
    r.omega = std::move(res.weights.omega);
    r.ok = true;
    r.crashed = crash_detector(r.trace, majority_share(data.validation));
    if (data.train.mislabel_mask) {
      const auto& m = *data.train.mislabel_mask;
      if (std::count(m.begin(), m.end(), true) > 0 && std::count(m.begin(), m.end(), false) > 0)
        r.auc = detection_auc(r.omega, m);
    }
  } catch (const Error& e) {
    r.ok = false;
    r.error = std::string(to_string(e.category())) + ": " + e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

TrainingSummary run_training(const ExperimentConfig& cfg, const std::filesystem::path& root, bool write) {
  cfg.validate();
  if (!is_training(cfg.kind)) throw ConfigError("train needs a mnist-1v7 or synthetic-train config");
  const PreparedData data = prepare_data(cfg, root);
  return run_training_prepared(cfg, data, write);
}

std::optional<SweepPoint> select_best(const std::vector<SweepPoint>& grid) {
  std::optional<SweepPoint> best;
  for (const SweepPoint& p : grid) {
    if (p.ok == 0 || !std::isfinite(p.mean_validation)) continue;
    if (!best || p.mean_validation > best->mean_validation ||
        (p.mean_validation == best->mean_validation &&
         (p.alpha > best->alpha || (p.alpha == best->alpha && p.lambda > best->lambda))))
      best = p;
  }
  return best;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& root, bool write) {
  cfg.validate();
  if (cfg.kind != ExperimentKind::hyper_sweep) throw ConfigError("sweep needs a hyper-sweep config");
  ExperimentConfig base = cfg;
  base.kind = cfg.sweep.base;
  const PreparedData data = prepare_data(base, root);
  SweepResult res;
  for (double alpha : cfg.sweep.alphas)
    for (double lambda : cfg.sweep.lambdas) {
      ExperimentConfig point = base;
      point.drfit.alpha = alpha;
      point.drfit.lambda = lambda;
      const TrainingSummary s = run_training_prepared(point, data, write);
      SweepPoint sp{alpha, lambda, 0.0, 0, s.failed + s.crashed};
      double sum = 0.0;
      for (const RunOutcome& r : s.runs) {
        if (!r.ok || r.crashed) continue;
        sum += r.trace.records.back().validation_accuracy;
        ++sp.ok;
      }
      sp.mean_validation = sp.ok ? sum / static_cast<double>(sp.ok) : kNaN;
      res.grid.push_back(sp);
    }
  res.best = select_best(res.grid);
  if (write) {
    const auto dir = std::filesystem::path(cfg.output_dir) / config_digest(cfg);
    ensure_dir(dir);
    std::ostringstream csv;
    csv << "alpha,lambda,mean_validation_accuracy,runs_ok,runs_crashed_or_failed\n";
    for (const auto& p : res.grid)
      csv << fmt(p.alpha) << ',' << fmt(p.lambda) << ',' << fmt(p.mean_validation) << ',' << p.ok << ','
          << p.crashed << '\n';
    write_text(dir / "sweep.csv", csv.str());
    json best = nullptr;
    if (res.best)
      best = {{"alpha", res.best->alpha}, {"lambda", res.best->lambda},
              {"mean_validation_accuracy", res.best->mean_validation}};
    write_text(dir / "best.json", json{{"digest", config_digest(cfg)}, {"best", best}}.dump(2) + "\n");
    write_text(dir / "resolved_config.json", build_json(cfg, true).dump(2) + "\n");
  }
  return res;
}

std::vector<theory::ReportEntry> run_theory(const ExperimentConfig& cfg, bool write) {
  cfg.validate();
  std::vector<theory::ReportEntry> rep;
  const TheoryConfig& t = cfg.theory;
  switch (cfg.kind) {
    case ExperimentKind::theory_1d:
      rep = t.dist == "gaussian" ? theory::check_1d(theory::Gaussian{t.mean, t.variance}, t.q)
                                 : theory::check_1d(theory::Uniform{t.a, t.b}, t.q);
      break;
    case ExperimentKind::theory_mv:
      if (t.mv_case == "gaussian") {
        Eigen::MatrixXd sigma(2, 2);
        sigma << t.cov[0], t.cov[1], t.cov[2], t.cov[3];
        rep = theory::check_mv_gaussian(sigma, t.q);
      } else {
        rep = theory::check_mv_boxes(t.q);
      }
      break;
    case ExperimentKind::theory_counterexample:
      rep = theory::check_counterexample(t.q);
      break;
    default:
      throw ConfigError("theory needs a theory-1d, theory-mv or theory-counterexample config");
  }
  if (write) {
    const auto dir = std::filesystem::path(cfg.output_dir) / config_digest(cfg);
    ensure_dir(dir);
    json arr = json::array();
    std::ostringstream csv;
    csv << "key,value,expected,tolerance,pass,note\n";
    for (const auto& e : rep) {
      auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
      arr.push_back({{"key", e.key}, {"value", num(e.value)}, {"expected", num(e.expected)},
                     {"tolerance", num(e.tolerance)}, {"pass", e.pass}, {"note", e.note}});
      csv << e.key << ',' << fmt(e.value) << ',' << fmt(e.expected) << ',' << fmt(e.tolerance) << ','
          << (e.pass ? "true" : "false") << ",\"" << e.note << "\"\n";
    }
    write_text(dir / "report.json", json{{"digest", config_digest(cfg)}, {"kind", to_string(cfg.kind)}, {"entries", arr}}.dump(2) + "\n");
    write_text(dir / "report.csv", csv.str());
    write_text(dir / "resolved_config.json", build_json(cfg, true).dump(2) + "\n");
  }
  return rep;
}

DetectReport run_detect(const std::filesystem::path& weights_csv, const std::filesystem::path& out_dir) {
  std::ifstream in(weights_csv);
  if (!in) throw IoError("cannot open " + weights_csv.string());
  std::string line;
  std::getline(in, line);
  if (line != "index,label,true_label,mislabeled,omega")
    throw ParseError(ParseErrorKind::malformed, weights_csv.string() + ": expected header index,label,true_label,mislabeled,omega");
  std::vector<double> omega;
  std::vector<bool> mask;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ParseError(ParseErrorKind::malformed, "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields");
    try {
      mask.push_back(std::stoi(cells[3]) != 0);
      omega.push_back(std::stod(cells[4]));
    } catch (const std::exception&) {
      throw ParseError(ParseErrorKind::malformed, "row " + std::to_string(row) + " is not numeric");
    }
  }
  DetectReport rep;
  rep.auc = detection_auc(omega, mask);
  const auto curve = separation_curve(omega, mask, threshold_grid(omega));
  rep.threshold_pair_90 = has_threshold_pair(curve, 0.9, 0.9);
  ensure_dir(out_dir);
  write_histogram_csv(out_dir / "weight_histogram.csv", weight_histogram(omega, mask));
  write_separation_csv(out_dir / "separation_curve.csv", curve);
  write_text(out_dir / "detect.json",
             json{{"weights", weights_csv.string()}, {"detection_auc", rep.auc}, {"threshold_pair_90", rep.threshold_pair_90}}.dump(2) + "\n");
  return rep;
}

void run_mnist_prep(const ExperimentConfig& cfg, const std::filesystem::path& root,
                    const std::filesystem::path& out_dir) {
  ExperimentConfig c = cfg;
  c.data.snapshot_dir.clear();
  const PreparedData d = prepare_data(c, root);
  ensure_dir(out_dir);
  write_dataset_csv(out_dir / "train.csv", d.train);
  write_dataset_csv(out_dir / "validation.csv", d.validation);
  write_dataset_csv(out_dir / "test.csv", d.test);
  write_text(out_dir / "rho.json", json{{"rho", d.rho}, {"digest", config_digest(c)}}.dump(2) + "\n");
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& records) {
  std::ostringstream out;
  out << "epoch,train_loss,objective,train_accuracy,validation_accuracy,test_accuracy\n";
  for (const auto& r : records)
    out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.objective) << ',' << fmt(r.train_accuracy) << ','
        << fmt(r.validation_accuracy) << ',' << fmt(r.test_accuracy) << '\n';
  write_text(path, out.str());
}

}  // namespace drfit
