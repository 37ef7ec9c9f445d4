#include "calibrax/experiment.hpp"

#include <Eigen/Core>
#include <fstream>
#include <set>

#include "calibrax/error.hpp"
#include "calibrax/model_io.hpp"

namespace calibrax::bench {
namespace {

using nlohmann::json;

void reject_unknown_keys(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  if (!doc.is_object()) throw DataError(where + ": expected a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.count(key)) throw DataError(where + ": unknown key '" + key + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

json generator_json(const GeneratorSpec& g) {
  return {{"kind", to_string(g.kind)}, {"n", g.n},
          {"seed", g.seed},            {"shrink", g.shrink},
          {"num_classes", g.num_classes}, {"distortion", g.distortion}};
}

GeneratorSpec generator_from_json(const json& doc) {
  reject_unknown_keys(doc, {"kind", "n", "seed", "shrink", "num_classes", "distortion"}, "config.generator");
  GeneratorSpec g;
  g.kind = generator_kind_from_string(doc.at("kind").get<std::string>());
  g.n = doc.value("n", g.n);
  g.seed = doc.value("seed", g.seed);
  g.shrink = doc.value("shrink", g.shrink);
  g.num_classes = doc.value("num_classes", g.num_classes);
  g.distortion = doc.value("distortion", g.distortion);
  return g;
}

json libraries_json() {
  return {{"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (generator.has_value() == !csv_path.empty()) {
    throw DomainError("experiment: give exactly one of a generator or a CSV path");
  }
  if (generator) generator->validate();
  if (seeds.empty()) throw DomainError("experiment: at least one seed is required");
  const double total = fractions.train + fractions.recal + fractions.test;
  if (fractions.train <= 0.0 || fractions.recal <= 0.0 || fractions.test <= 0.0 || std::abs(total - 1.0) > 1e-9) {
    throw DomainError("experiment: split fractions must be positive and sum to 1");
  }
  recal_train.validate();
  base_model.train.validate();
}

std::string ExperimentConfig::dataset_name() const {
  if (generator) return to_string(generator->kind);
  return std::filesystem::path(csv_path).stem().string();
}

json to_json(const ExperimentConfig& c) {
  json doc;
  if (c.generator) doc["generator"] = generator_json(*c.generator);
  if (!c.csv_path.empty()) doc["csv"] = c.csv_path;
  doc["base_model"] = {{"kind", c.base_model.kind},
                       {"poly_degree", c.base_model.poly_degree},
                       {"hidden", c.base_model.shape.hidden},
                       {"dense_skip", c.base_model.shape.dense_skip},
                       {"train", to_json(c.base_model.train)},
                       {"shrink", c.base_model.shrink},
                       {"distortion", c.base_model.distortion}};
  doc["methods"] = c.methods;
  doc["metrics"] = c.metrics;
  doc["split"] = {{"train", c.fractions.train}, {"recal", c.fractions.recal}, {"test", c.fractions.test}};
  doc["seeds"] = c.seeds;
  doc["recal_train"] = to_json(c.recal_train);
  return doc;
}

ExperimentConfig experiment_config_from_json(const json& doc) {
  try {
    reject_unknown_keys(doc, {"generator", "csv", "base_model", "methods", "metrics", "split", "seeds", "recal_train"},
                        "config");
    ExperimentConfig c;
    if (doc.contains("generator")) {
      c.generator = generator_from_json(doc.at("generator"));
      c.base_model.shrink = c.generator->shrink;
      c.base_model.distortion = c.generator->distortion;
    }
    c.csv_path = doc.value("csv", std::string());
    if (doc.contains("base_model")) {
      const json& b = doc.at("base_model");
      reject_unknown_keys(b, {"kind", "poly_degree", "hidden", "dense_skip", "train", "shrink", "distortion"},
                          "config.base_model");
      c.base_model.kind = b.value("kind", c.base_model.kind);
      c.base_model.poly_degree = b.value("poly_degree", c.base_model.poly_degree);
      c.base_model.shape.hidden = b.value("hidden", c.base_model.shape.hidden);
      c.base_model.shape.dense_skip = b.value("dense_skip", c.base_model.shape.dense_skip);
      if (b.contains("train")) c.base_model.train = train_config_from_json(b.at("train"));
      c.base_model.shrink = b.value("shrink", c.base_model.shrink);
      c.base_model.distortion = b.value("distortion", c.base_model.distortion);
    }
    c.methods = doc.value("methods", c.methods);
    c.metrics = doc.value("metrics", c.metrics);
    if (doc.contains("split")) {
      const json& s = doc.at("split");
      reject_unknown_keys(s, {"train", "recal", "test"}, "config.split");
      c.fractions.train = s.value("train", c.fractions.train);
      c.fractions.recal = s.value("recal", c.fractions.recal);
      c.fractions.test = s.value("test", c.fractions.test);
    }
    c.seeds = doc.value("seeds", c.seeds);
    if (doc.contains("recal_train")) c.recal_train = train_config_from_json(doc.at("recal_train"));
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

ExperimentConfig config_from_manifest(const json& manifest) {
  if (!manifest.is_object() || !manifest.contains("config")) throw DataError("manifest: missing config block");
  return experiment_config_from_json(manifest.at("config"));
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "dataset,method,metric,value,seed\n";
  for (const auto& r : rows) {
    out += r.dataset + ',' + r.method + ',' + r.metric + ',' + format_double(r.value) + ',' + std::to_string(r.seed) +
           '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  ExperimentResult result;
  result.manifest = {{"tool", kToolName},
                     {"version", kToolVersion},
                     {"libraries", libraries_json()},
                     {"config", to_json(config)},
                     {"seeds", config.seeds}};
  std::vector<std::string> outputs;
  if (out_dir) std::filesystem::create_directories(*out_dir);

  auto write_manifest = [&](const std::string& status, const std::string& error) {
    result.manifest["status"] = status;
    result.manifest["outputs"] = outputs;
    if (!error.empty()) result.manifest["error"] = error;
    if (out_dir) write_json(*out_dir / "manifest.json", result.manifest);
  };

  try {
    const std::string dataset_name = config.dataset_name();
    std::optional<Dataset> csv_data;
    if (!config.csv_path.empty()) csv_data = load_csv(config.csv_path);

    for (std::size_t run = 0; run < config.seeds.size(); ++run) {
      const std::uint64_t seed = config.seeds[run];
      Dataset data;
      if (csv_data) {
        data = *csv_data;
      } else {
        GeneratorSpec g = *config.generator;
        g.seed += seed;
        data = generate(g);
      }
      const auto methods = config.methods.empty() ? default_methods(data) : config.methods;
      const auto metrics = config.metrics.empty() ? default_metrics(data) : config.metrics;

      const Split parts = split(data, config.fractions, seed);
      BaseModelSpec base_spec = config.base_model;
      base_spec.train.seed = seed;
      const BaseModel base = fit_base_model(base_spec, parts.train);
      const auto recal_base = predict_all(base, parts.recal.x);
      const auto test_base = predict_all(base, parts.test.x);

      TrainConfig recal_train = config.recal_train;
      recal_train.seed = seed;
      for (const auto& method : methods) {
        const Recalibrator r = fit_recalibrator(method, recal_base, parts.recal, recal_train);
        const auto forecasts = apply_all(r, test_base);
        for (const auto& m : evaluate_metrics(forecasts, parts.test, metrics)) {
          result.rows.push_back({dataset_name, method, m.name, m.value, seed});
        }
        if (out_dir && run == 0) {
          const std::string file = "reliability_" + method + ".svg";
          const auto points = reliability_points(forecasts, parts.test);
          write_text(*out_dir / file,
                     reliability_svg(dataset_name + ": " + method, points, parts.test.is_classification()));
          outputs.push_back(file);
        }
      }
    }

    if (out_dir) {
      write_text(*out_dir / "metrics.csv", metrics_csv(result.rows));
      outputs.push_back("metrics.csv");
      json rows = json::array();
      for (const auto& r : result.rows) {
        rows.push_back({{"dataset", r.dataset}, {"method", r.method}, {"metric", r.metric}, {"value", r.value},
                        {"seed", r.seed}});
      }
      outputs.push_back("metrics.json");
      result.manifest["status"] = "ok";
      result.manifest["outputs"] = outputs;
      write_json(*out_dir / "metrics.json", {{"manifest", result.manifest}, {"rows", rows}});
    }
    write_manifest("ok", "");
  } catch (const std::exception& e) {
    write_manifest("failed", e.what());
    throw;
  }
  return result;
}

}  // namespace calibrax::bench
