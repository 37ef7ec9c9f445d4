#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "calibrax/bench.hpp"
#include "calibrax/error.hpp"
#include "calibrax/experiment.hpp"
#include "calibrax/model_io.hpp"
#include "calibrax/online.hpp"
#include "calibrax/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace calibrax;
using namespace calibrax::bench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--seed", c.seed, "Random seed");
  cmd.add_option("--out-dir", c.out_dir, "Directory receiving the artifacts");
  cmd.add_option("--config", c.config, "JSON experiment config; its values override flags");
}

// Keys present in the config file win over the corresponding flags.
std::optional<json> read_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  json doc = read_json(c.config);
  experiment_config_from_json(doc);  // validates keys and types
  return doc;
}

fs::path prepare_out_dir(const Common& c) {
  fs::path dir(c.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::size_t thread_limit() {
  const char* env = std::getenv("CALIBRAX_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw DataError("CALIBRAX_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

Dataset select_portion(const Dataset& data, const std::string& portion, const SplitFractions& fractions,
                       std::uint64_t seed) {
  if (portion == "all") return data;
  Split parts = split(data, fractions, seed);
  if (portion == "train") return std::move(parts.train);
  if (portion == "recal") return std::move(parts.recal);
  if (portion == "test") return std::move(parts.test);
  throw DomainError("unknown split portion '" + portion + "' (train | recal | test | all)");
}

SplitFractions fractions_from(const std::optional<json>& cfg, SplitFractions f) {
  if (cfg && cfg->contains("split")) f = experiment_config_from_json(*cfg).fractions;
  return f;
}

std::uint64_t seed_from(const std::optional<json>& cfg, std::uint64_t seed) {
  if (cfg && cfg->contains("seeds")) {
    const auto seeds = experiment_config_from_json(*cfg).seeds;
    if (!seeds.empty()) return seeds.front();
  }
  return seed;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string kind = "heteroscedastic";
  std::size_t n = 1000;
  double shrink = 0.5;
  std::size_t classes = kMulticlassClasses;
  double distortion = kLogitDistortion;
};

int run_synth(const SynthArgs& a) {
  const auto cfg = read_config(a.common);
  GeneratorSpec spec;
  spec.kind = generator_kind_from_string(a.kind);
  spec.n = a.n;
  spec.seed = a.common.seed;
  spec.shrink = a.shrink;
  spec.num_classes = a.classes;
  spec.distortion = a.distortion;
  if (cfg && cfg->contains("generator")) spec = *experiment_config_from_json(*cfg).generator;
  spec.validate();
  const fs::path dir = prepare_out_dir(a.common);
  save_csv(generate(spec), dir / "data.csv");
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << spec.n << " rows, " << to_string(spec.kind)
            << ")\n";
  return kExitOk;
}

// --- fit -------------------------------------------------------------------

struct FitArgs {
  Common common;
  std::string data;
  std::string model = "auto";
  std::string portion = "train";
  std::size_t degree = 3;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t epochs = TrainConfig{}.epochs;
  double step_size = TrainConfig{}.step_size;
  SplitFractions fractions;
};

int run_fit(const FitArgs& a) {
  const auto cfg = read_config(a.common);
  BaseModelSpec spec;
  spec.kind = a.model;
  spec.poly_degree = a.degree;
  spec.shape.hidden = a.hidden;
  spec.train.epochs = a.epochs;
  spec.train.step_size = a.step_size;
  if (cfg && cfg->contains("base_model")) spec = experiment_config_from_json(*cfg).base_model;
  const std::uint64_t seed = seed_from(cfg, a.common.seed);
  spec.train.seed = seed;
  const SplitFractions fractions = fractions_from(cfg, a.fractions);

  const Dataset data = load_csv(a.data);
  const Dataset train = select_portion(data, a.portion, fractions, seed);
  const BaseModel model = fit_base_model(spec, train);

  const fs::path dir = prepare_out_dir(a.common);
  json doc = {{"features", data.feature_names},
              {"target", data.target_name},
              {"seed", seed},
              {"split", {{"train", fractions.train}, {"recal", fractions.recal}, {"test", fractions.test}}},
              {"base_model", to_json(model)}};
  write_json(dir / "model.json", doc);
  std::cout << "fitted " << base_model_kind(model) << " on " << train.size() << " rows -> "
            << (dir / "model.json").string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  CsvSchema schema;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  BaseModel model;
};

LoadedModel load_model(const std::string& path) {
  const json doc = read_json(path);
  try {
    LoadedModel m;
    m.schema.features = doc.at("features").get<std::vector<std::string>>();
    m.schema.target = doc.at("target").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    const json& s = doc.at("split");
    m.fractions = {s.at("train").get<double>(), s.at("recal").get<double>(), s.at("test").get<double>()};
    m.model = base_model_from_json(doc.at("base_model"));
    return m;
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed model file: " + e.what());
  }
}

// --- recalibrate -----------------------------------------------------------

struct RecalArgs {
  Common common;
  std::string data;
  std::string model = "model.json";
  std::string method;
  std::string portion = "recal";
  std::size_t epochs = TrainConfig{}.epochs;
  double step_size = TrainConfig{}.step_size;
};

int run_recalibrate(const RecalArgs& a) {
  const auto cfg = read_config(a.common);
  const LoadedModel base = load_model(a.model);
  const Dataset data = load_csv(a.data, base.schema);

  std::string method = a.method.empty() ? default_methods(data).back() : a.method;
  TrainConfig train;
  train.epochs = a.epochs;
  train.step_size = a.step_size;
  if (cfg) {
    const ExperimentConfig ec = experiment_config_from_json(*cfg);
    if (cfg->contains("methods") && !ec.methods.empty()) method = ec.methods.front();
    if (cfg->contains("recal_train")) train = ec.recal_train;
  }
  const std::uint64_t seed = seed_from(cfg, a.common.seed);
  train.seed = seed;

  const Dataset recal = select_portion(data, a.portion, base.fractions, base.seed);
  const auto forecasts = predict_all(base.model, recal.x);
  const Recalibrator r = fit_recalibrator(method, forecasts, recal, train);

  const fs::path dir = prepare_out_dir(a.common);
  write_json(dir / "recalibrator.json", {{"method", method}, {"seed", seed}, {"recalibrator", to_json(r)}});
  std::cout << "fitted " << method << " on " << recal.size() << " rows -> " << (dir / "recalibrator.json").string()
            << '\n';
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string data;
  std::string model;
  std::string recalibrator;
  std::string portion = "test";
  std::vector<std::string> metrics;
};

int run_evaluate(const EvalArgs& a) {
  if (a.model.empty()) {
    // Full pipeline from an experiment config.
    if (a.common.config.empty()) throw DomainError("evaluate needs --model or --config");
    const auto cfg = read_config(a.common);
    ExperimentConfig ec = experiment_config_from_json(*cfg);
    if (!a.data.empty() && !ec.generator && ec.csv_path.empty()) ec.csv_path = a.data;
    if (!cfg->contains("seeds")) ec.seeds = {a.common.seed};
    const fs::path dir = prepare_out_dir(a.common);
    const auto result = run_experiment(ec, dir);
    std::cout << "wrote " << result.rows.size() << " metric rows to " << (dir / "metrics.csv").string() << '\n';
    return kExitOk;
  }

  const LoadedModel base = load_model(a.model);
  const Dataset data = load_csv(a.data, base.schema);
  const Dataset test = select_portion(data, a.portion, base.fractions, base.seed);
  auto forecasts = predict_all(base.model, test.x);
  std::string method = "uncalibrated";
  if (!a.recalibrator.empty()) {
    const json doc = read_json(a.recalibrator);
    if (!doc.contains("recalibrator")) throw DataError(a.recalibrator + ": missing recalibrator block");
    method = doc.value("method", std::string("recalibrated"));
    forecasts = apply_all(recalibrator_from_json(doc.at("recalibrator")), forecasts);
  }
  const auto metric_names = a.metrics.empty() ? default_metrics(test) : a.metrics;

  std::vector<MetricRow> rows;
  const std::string dataset = fs::path(a.data).stem().string();
  for (const auto& m : evaluate_metrics(forecasts, test, metric_names)) {
    rows.push_back({dataset, method, m.name, m.value, base.seed});
  }
  const fs::path dir = prepare_out_dir(a.common);
  write_text(dir / "metrics.csv", metrics_csv(rows));
  write_text(dir / ("reliability_" + method + ".svg"),
             reliability_svg(dataset + ": " + method, reliability_points(forecasts, test), test.is_classification()));
  for (const auto& r : rows) std::cout << r.method << ' ' << r.metric << ' ' << format_double(r.value) << '\n';
  return kExitOk;
}

// --- online-sim ------------------------------------------------------------

struct OnlineArgs {
  Common common;
  std::size_t n = online::SimulationConfig{}.n;
  std::size_t m = online::SimulationConfig{}.m;
  std::size_t steps = online::SimulationConfig{}.steps;
};

int run_online(const OnlineArgs& a) {
  const auto cfg = read_config(a.common);
  online::SimulationConfig sim;
  sim.n = a.n;
  sim.m = a.m;
  sim.steps = a.steps;
  sim.seed = seed_from(cfg, a.common.seed);
  const auto ledger = online::simulate_distorted_stream(sim);
  const auto summary = online::summarize(ledger);

  const fs::path dir = prepare_out_dir(a.common);
  write_text(dir / "trace.csv", online::trace_csv(ledger));
  json doc = online::to_json(summary);
  doc["config"] = {{"N", sim.n}, {"M", sim.m}, {"T", sim.steps}, {"seed", sim.seed}};
  write_json(dir / "ledger.json", doc);
  std::cout << "C_l1 " << format_double(summary.calibration_l1) << "  external regret per step "
            << format_double(summary.external_regret_misclassification) << '\n';
  return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  Common common;
  std::vector<std::string> manifests;
  bool rerun = false;
};

struct ManifestOutcome {
  std::string path;
  std::string status;
  std::string error;
  std::vector<MetricRow> rows;
  std::optional<bool> rerun_identical;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ManifestOutcome process_manifest(const std::string& arg, bool rerun, const fs::path& rerun_dir) {
  ManifestOutcome out;
  fs::path path(arg);
  if (fs::is_directory(path)) path /= "manifest.json";
  out.path = path.string();
  try {
    const json manifest = read_json(path);
    out.status = manifest.value("status", std::string("unknown"));
    if (out.status != "ok") {
      out.error = manifest.value("error", std::string());
      return out;
    }
    const json metrics = read_json(path.parent_path() / "metrics.json");
    for (const auto& r : metrics.at("rows")) {
      out.rows.push_back({r.at("dataset").get<std::string>(), r.at("method").get<std::string>(),
                          r.at("metric").get<std::string>(), r.at("value").get<double>(),
                          r.at("seed").get<std::uint64_t>()});
    }
    if (rerun) {
      const auto result = run_experiment(config_from_manifest(manifest), rerun_dir);
      (void)result;
      out.rerun_identical = read_file(rerun_dir / "metrics.csv") == read_file(path.parent_path() / "metrics.csv");
    }
  } catch (const std::exception& e) {
    out.status = "error";
    out.error = e.what();
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_report(const ReportArgs& a) {
  const auto threads = std::min(thread_limit(), std::max<std::size_t>(1, a.manifests.size()));
  const fs::path dir = prepare_out_dir(a.common);
  std::vector<ManifestOutcome> outcomes(a.manifests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < a.manifests.size(); i = next++) {
      outcomes[i] = process_manifest(a.manifests[i], a.rerun, dir / ("rerun_" + std::to_string(i)));
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // (dataset, method, metric) -> values over seeds and manifests.
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  json runs = json::array();
  bool all_ok = true;
  for (const auto& o : outcomes) {
    for (const auto& r : o.rows) groups[{r.dataset, r.method, r.metric}].push_back(r.value);
    json entry = {{"path", o.path}, {"status", o.status}, {"rows", o.rows.size()}};
    if (!o.error.empty()) entry["error"] = o.error;
    if (o.rerun_identical) {
      entry["rerun_identical"] = *o.rerun_identical;
      all_ok = all_ok && *o.rerun_identical;
    }
    all_ok = all_ok && o.status == "ok";
    runs.push_back(entry);
  }

  std::ostringstream csv;
  csv << "dataset,method,metric,median,min,max,count\n";
  for (const auto& [key, values] : groups) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    csv << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
        << format_double(median(values)) << ',' << format_double(*lo) << ',' << format_double(*hi) << ','
        << values.size() << '\n';
  }
  write_text(dir / "report.csv", csv.str());
  write_json(dir / "report.json", {{"tool", kToolName}, {"version", kToolVersion}, {"runs", runs}});
  std::cout << csv.str();
  for (const auto& o : outcomes) {
    if (o.status != "ok") std::cerr << o.path << ": " << o.status << (o.error.empty() ? "" : ": " + o.error) << '\n';
    if (o.rerun_identical && !*o.rerun_identical) std::cerr << o.path << ": rerun differs from recorded metrics\n";
  }
  return all_ok ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recalibration of probabilistic forecasts: synthetic benchmarks, offline and online recalibrators"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset to <out-dir>/data.csv");
  add_common(*synth_cmd, synth.common);
  synth_cmd->add_option("--kind", synth.kind, "heteroscedastic | variance_misscaled | distorted_binary | distorted_multiclass");
  synth_cmd->add_option("--n", synth.n, "Number of rows");
  synth_cmd->add_option("--shrink", synth.shrink, "Forecast sd multiplier (variance_misscaled)");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes (distorted_multiclass)");
  synth_cmd->add_option("--distortion", synth.distortion, "Logit multiplier (distorted_multiclass)");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a base model; writes <out-dir>/model.json");
  add_common(*fit_cmd, fit.common);
  fit_cmd->add_option("--data", fit.data, "Input CSV")->required();
  fit_cmd->add_option("--model", fit.model, "auto | oracle | bayesian_ridge | mlp_gaussian | softmax_classifier");
  fit_cmd->add_option("--portion", fit.portion, "Rows used for fitting: train | recal | test | all");
  fit_cmd->add_option("--degree", fit.degree, "Polynomial degree of bayesian_ridge features");
  fit_cmd->add_option("--hidden", fit.hidden, "Hidden layer widths of the neural models");
  fit_cmd->add_option("--epochs", fit.epochs, "Training epochs of the neural models");
  fit_cmd->add_option("--step-size", fit.step_size, "Initial SGD step size");
  fit_cmd->add_option("--train-frac", fit.fractions.train, "Split fraction for training");
  fit_cmd->add_option("--recal-frac", fit.fractions.recal, "Split fraction for recalibration");
  fit_cmd->add_option("--test-frac", fit.fractions.test, "Split fraction for testing");

  RecalArgs recal;
  auto* recal_cmd = app.add_subcommand("recalibrate", "Fit a recalibrator; writes <out-dir>/recalibrator.json");
  add_common(*recal_cmd, recal.common);
  recal_cmd->add_option("--data", recal.data, "Input CSV (same columns as the model)")->required();
  recal_cmd->add_option("--model", recal.model, "Base model written by fit");
  recal_cmd->add_option("--method", recal.method,
                        "isotonic | quantile_nn | platt | temperature | kde | simplex | uncalibrated "
                        "(empty: quantile_nn or simplex)");
  recal_cmd->add_option("--portion", recal.portion, "Rows used for fitting: train | recal | test | all");
  recal_cmd->add_option("--epochs", recal.epochs, "Training epochs of the neural recalibrators");
  recal_cmd->add_option("--step-size", recal.step_size, "Initial SGD step size");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Score forecasts on held-out rows; with only --config runs the whole experiment");
  add_common(*eval_cmd, eval.common);
  eval_cmd->add_option("--data", eval.data, "Input CSV (same columns as the model)");
  eval_cmd->add_option("--model", eval.model, "Base model written by fit");
  eval_cmd->add_option("--recalibrator", eval.recalibrator, "Recalibrator written by recalibrate");
  eval_cmd->add_option("--portion", eval.portion, "Rows scored: train | recal | test | all");
  eval_cmd->add_option("--metrics", eval.metrics, "Metric names (empty: defaults for the task)");

  OnlineArgs onl;
  auto* onl_cmd = app.add_subcommand("online-sim", "Online recalibration of a distorted binary stream");
  add_common(*onl_cmd, onl.common);
  onl_cmd->add_option("--N", onl.n, "Grid resolution of each sub-forecaster");
  onl_cmd->add_option("--M", onl.m, "Number of buckets over the raw forecast");
  onl_cmd->add_option("--T", onl.steps, "Stream length");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Summarize experiment manifests into <out-dir>/report.csv");
  add_common(*report_cmd, report.common);
  report_cmd->add_option("manifests", report.manifests, "manifest.json files or their directories")->required();
  report_cmd->add_flag("--rerun", report.rerun, "Re-run each manifest and check the metrics are byte-identical");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (recal_cmd->parsed()) return run_recalibrate(recal);
    if (eval_cmd->parsed()) return run_evaluate(eval);
    if (onl_cmd->parsed()) return run_online(onl);
    if (report_cmd->parsed()) return run_report(report);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
