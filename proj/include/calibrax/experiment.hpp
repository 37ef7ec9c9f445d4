#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "calibrax/bench.hpp"
#include "calibrax/pipeline.hpp"

namespace calibrax::bench {

inline constexpr const char* kToolName = "calibrax";
inline constexpr const char* kToolVersion = "0.1.0";

struct ExperimentConfig {
  /// Exactly one data source. For generators, run seed s draws data with
  /// seed generator.seed + s.
  std::optional<GeneratorSpec> generator;
  std::string csv_path;
  BaseModelSpec base_model;
  /// Empty selects default_methods() / default_metrics() for the data.
  std::vector<std::string> methods;
  std::vector<std::string> metrics;
  SplitFractions fractions;
  std::vector<std::uint64_t> seeds = {0};
  /// Training settings of the neural recalibrators; the run seed replaces seed.
  TrainConfig recal_train;

  void validate() const;
  std::string dataset_name() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys raise DataError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

struct MetricRow {
  std::string dataset;
  std::string method;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  nlohmann::json manifest;
};

/// Runs every seed: split, fit the base model on train, fit each method on
/// recal, score the test set. With an output directory, writes
///   metrics.csv (dataset,method,metric,value,seed), metrics.json,
///   reliability_<method>.svg (first seed) and manifest.json.
/// On failure the manifest is written with status "failed" and the error is rethrown.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Reads the config block of a manifest written by run_experiment.
ExperimentConfig config_from_manifest(const nlohmann::json& manifest);

std::string metrics_csv(const std::vector<MetricRow>& rows);

}  // namespace calibrax::bench
