#pragma once

#include <filesystem>
#include "json.hpp"

#include "calibrax/models.hpp"
#include "calibrax/recalibrate.hpp"

namespace calibrax {

// Models are stored as JSON documents:
//   {"format": "calibrax-model", "version": 1, "type": <kind>, ...payload}
// Networks carry their full shape (input_dim, hidden, output_dim, dense_skip)
// next to the flat parameter vector, so loading validates the parameter count.

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const NeuralNet& net);
NeuralNet net_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const BayesianRidgeModel& model);
nlohmann::json to_json(const GaussianMlp& model);
nlohmann::json to_json(const SoftmaxClassifier& model);

BayesianRidgeModel bayesian_ridge_from_json(const nlohmann::json& doc);
GaussianMlp gaussian_mlp_from_json(const nlohmann::json& doc);
SoftmaxClassifier softmax_classifier_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const QuantileRecalibrator& r);
nlohmann::json to_json(const KdeRecalibrator& r);
nlohmann::json to_json(const SimplexRecalibrator& r);
nlohmann::json to_json(const PlattScaler& r);
nlohmann::json to_json(const TemperatureScaler& r);
nlohmann::json to_json(const MulticlassPlatt& r);

QuantileRecalibrator quantile_recalibrator_from_json(const nlohmann::json& doc);
KdeRecalibrator kde_recalibrator_from_json(const nlohmann::json& doc);
SimplexRecalibrator simplex_recalibrator_from_json(const nlohmann::json& doc);
PlattScaler platt_from_json(const nlohmann::json& doc);
TemperatureScaler temperature_from_json(const nlohmann::json& doc);
MulticlassPlatt multiclass_platt_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// Wraps a payload with the format header.
nlohmann::json model_document(const std::string& type, nlohmann::json payload);
/// Checks the header and type, throwing DataError on mismatch; returns the payload.
const nlohmann::json& model_payload(const nlohmann::json& doc, const std::string& type);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace calibrax
