#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "calibrax/bench.hpp"
#include "calibrax/dataset.hpp"
#include "calibrax/models.hpp"
#include "calibrax/recalibrate.hpp"

namespace calibrax::bench {

// --- Base models -----------------------------------------------------------

/// The generators' own forecasters, selected by the dataset's feature columns:
///   x        -> N(mu(x), shrink * sigma(x))
///   score    -> (1 - score, score)
///   z1..zK   -> softmax(distortion * z)
struct OracleBase {
  enum class Kind { kMisscaled, kDistortedBinary, kDistortedMulticlass };
  Kind kind = Kind::kMisscaled;
  double shrink = 0.5;
  double distortion = kLogitDistortion;
  std::size_t num_classes = 2;

  PredictiveDistribution predict(std::span<const double> x) const;
};

/// Bayesian ridge on per-column powers 1..degree of the standardized features.
struct PolyRidge {
  std::size_t degree = 3;
  Standardizer x_scale;
  BayesianRidgeModel model;

  std::vector<double> features(std::span<const double> x) const;
  GaussianDist predict(std::span<const double> x) const;
};

using BaseModel = std::variant<OracleBase, PolyRidge, GaussianMlp, SoftmaxClassifier>;

struct BaseModelSpec {
  /// auto | oracle | bayesian_ridge | mlp_gaussian | softmax_classifier.
  /// auto picks oracle when the feature columns match a generator, otherwise
  /// bayesian_ridge (regression) or softmax_classifier (classification).
  std::string kind = "auto";
  std::size_t poly_degree = 3;
  MlpShape shape;
  TrainConfig train;
  double shrink = 0.5;
  double distortion = kLogitDistortion;
};

std::string base_model_kind(const BaseModel& model);
BaseModel fit_base_model(const BaseModelSpec& spec, const Dataset& train);
PredictiveDistribution predict(const BaseModel& model, std::span<const double> x);
std::vector<PredictiveDistribution> predict_all(const BaseModel& model, const Matrix& x);

nlohmann::json to_json(const BaseModel& model);
BaseModel base_model_from_json(const nlohmann::json& doc);

// --- Recalibrators ---------------------------------------------------------

using Recalibrator = std::variant<IdentityRecalibrator, IsotonicRecalibrator, QuantileRecalibrator, KdeRecalibrator,
                                  PlattScaler, MulticlassPlatt, TemperatureScaler, SimplexRecalibrator>;

/// Regression: uncalibrated, isotonic, quantile_nn.
/// Classification: uncalibrated, platt (multi-class Platt when K > 2),
/// temperature, kde (binary only), simplex.
Recalibrator fit_recalibrator(const std::string& method, std::span<const PredictiveDistribution> base,
                              const Dataset& recal, const TrainConfig& train);
PredictiveDistribution apply(const Recalibrator& r, const PredictiveDistribution& base);
std::vector<PredictiveDistribution> apply_all(const Recalibrator& r, std::span<const PredictiveDistribution> base);

nlohmann::json to_json(const Recalibrator& r);
Recalibrator recalibrator_from_json(const nlohmann::json& doc);

std::vector<std::string> default_methods(const Dataset& data);

// --- Metrics ---------------------------------------------------------------

/// Regression: mae, mape, chk (mean pinball over deciles), crps, nll, qce.
/// Classification: accuracy, nll, brier, ece, cal_error, and cal_l1 for K = 2.
std::vector<std::string> default_metrics(const Dataset& data);

struct MetricValue {
  std::string name;
  double value = 0.0;
};

std::vector<MetricValue> evaluate_metrics(std::span<const PredictiveDistribution> forecasts, const Dataset& test,
                                          std::span<const std::string> metrics);

/// Points of a reliability diagram: (nominal level, empirical coverage) at
/// the deciles for regression; (mean confidence, accuracy) over 10 bins for
/// classification, on P(class 1) when K = 2 and on the top class otherwise.
std::vector<std::pair<double, double>> reliability_points(std::span<const PredictiveDistribution> forecasts,
                                                          const Dataset& test);

/// SVG 1.1 reliability diagram with the diagonal for reference.
std::string reliability_svg(const std::string& title, std::span<const std::pair<double, double>> points,
                            bool classification);

}  // namespace calibrax::bench
