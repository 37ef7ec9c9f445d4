#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "calibrax/dataset.hpp"
#include "calibrax/error.hpp"
#include "calibrax/models.hpp"
#include "calibrax/nn.hpp"
#include "calibrax/prob_core.hpp"
#include "calibrax/rng.hpp"

namespace calibrax {

/// Learns a quantile function R(tau; phi) over base-model featurizations by
/// minimizing the check score at randomly drawn tau.
struct QuantileRecalibrator {
  /// Inputs: standardized tau, the base quantile at tau in standardized target
  /// units, then the standardized featurization.
  NeuralNet net;
  FeaturizationKind kind = FeaturizationKind::kQuantileGrid;
  std::vector<double> input_levels;  // featurization levels (quantile-grid kind)
  std::vector<double> out_levels;    // levels emitted by apply()
  Standardizer phi_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
  TrainConfig config;

  /// Quantile of the base forecast described by phi, at level tau.
  double base_quantile(double tau, std::span<const double> phi) const;
  /// Raw network value at level tau (before monotonization).
  double evaluate(double tau, std::span<const double> phi) const;
  /// Featurizes the base forecast the same way as during fitting.
  Featurization featurize_base(const PredictiveDistribution& base) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

/// Default output levels: k/20 for k = 1..19 (contains the deciles).
std::vector<double> default_out_levels();

/// Hidden layout used by the neural recalibrators.
inline const std::vector<std::size_t> kRecalibratorHidden = {20, 20};

/// Needs at least 50 examples. input_levels must be given for quantile-grid
/// featurizations and empty otherwise.
QuantileRecalibrator fit_quantile_recalibrator(std::span<const Featurization> phis, std::span<const double> ys,
                                               const TrainConfig& config, std::span<const double> input_levels,
                                               TrainingLog* log = nullptr);

/// Network outputs at each level, sorted ascending.
QuantileGridDist apply_quantile_recalibrator(const QuantileRecalibrator& r, const Featurization& phi,
                                             std::span<const double> out_levels);

/// Nadaraya-Watson estimate of P(Y = 1 | score) with a Gaussian kernel.
struct KdeRecalibrator {
  std::vector<double> scores;  // sorted ascending
  std::vector<double> labels;  // 0/1, aligned with scores
  double bandwidth = 0.0;
  double clip = 0.0;
  /// Set when the scores have no spread; apply() then returns the base rate.
  bool constant_fallback = false;
  double base_rate = 0.0;

  double apply(double score) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

enum class BandwidthRule { kSilverman };

/// h = 1.06 * sd(scores) * T^(-1/5); clip eps = 1 / (2T). Needs T >= 20.
KdeRecalibrator fit_kde_recalibrator(std::span<const double> scores, std::span<const int> labels,
                                     BandwidthRule rule = BandwidthRule::kSilverman);

/// Dense network from the simplex to the simplex: standardized log
/// probabilities in, softmax out. Initialized to the identity map.
struct SimplexRecalibrator {
  NeuralNet net;
  Standardizer input_scale;

  CategoricalDist apply(const CategoricalDist& probs) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

SimplexRecalibrator fit_simplex_recalibrator(std::span<const CategoricalDist> probs,
                                             std::span<const std::size_t> labels, const TrainConfig& config,
                                             TrainingLog* log = nullptr);

/// p = sigmoid(a * logit(score) + b).
struct PlattScaler {
  double a = 1.0;
  double b = 0.0;
  /// Set when the data were one-class or separable and a penalized fit was used.
  bool fallback = false;

  double apply(double score) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

/// Ridge strength of the fallback fit used for one-class or separable data.
inline constexpr double kPlattFallbackPenalty = 1.0;

PlattScaler fit_platt(std::span<const double> scores, std::span<const int> labels);

/// p = softmax(logits / T).
struct TemperatureScaler {
  double temperature = 1.0;
  bool fallback = false;  // optimum hit the [kMinTemperature, kMaxTemperature] bound

  CategoricalDist apply_logits(std::span<const double> logits) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

inline constexpr double kMinTemperature = 1e-2;
inline constexpr double kMaxTemperature = 1e2;

/// logits: n rows of K class logits.
TemperatureScaler fit_temperature(const Matrix& logits, std::span<const std::size_t> labels);

/// Multi-class Platt scaling: softmax(W p + b) over the base class
/// probabilities p, fitted by Newton's method on the log-loss.
struct MulticlassPlatt {
  Matrix weights;  // K x K
  std::vector<double> bias;

  CategoricalDist apply(const CategoricalDist& probs) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

inline constexpr double kMulticlassPlattRidge = 1e-6;

MulticlassPlatt fit_multiclass_platt(std::span<const CategoricalDist> probs, std::span<const std::size_t> labels);

/// Recalibrator that leaves forecasts unchanged.
struct IdentityRecalibrator {
  PredictiveDistribution apply(const PredictiveDistribution& base) const { return base; }
};

/// R o H: base forecasts passed through the recalibrator.
template <class Base, class Recal>
struct ComposedModel {
  Base base;
  Recal recal;

  template <class X>
  PredictiveDistribution predict(const X& x) const {
    return recal.apply(PredictiveDistribution(base.predict(x)));
  }
};

/// Step 1 fits H = base_fit(d); step 2 fits R = recal_fit(H, c) on H's
/// forecasts over the recalibration set c.
template <class BaseFit, class RecalFit>
auto algorithm1_fit(const BaseFit& base_fit, const RecalFit& recal_fit, const Dataset& d, const Dataset& c) {
  if (c.size() == 0) throw DomainError("algorithm1_fit: empty recalibration set");
  if (d.size() == 0) throw DomainError("algorithm1_fit: empty training set");
  auto base = base_fit(d);
  auto recal = recal_fit(std::as_const(base), c);
  return ComposedModel<decltype(base), decltype(recal)>{std::move(base), std::move(recal)};
}

inline constexpr double kDefaultRecalFraction = 0.2;

/// Disjoint split of one dataset into (D, C) with C holding recal_fraction of
/// the rows (shuffled with the given seed).
std::pair<Dataset, Dataset> split_for_recalibration(const Dataset& data, double recal_fraction, std::uint64_t seed);

template <class BaseFit, class RecalFit>
auto algorithm1_fit(const BaseFit& base_fit, const RecalFit& recal_fit, const Dataset& data,
                    double recal_fraction = kDefaultRecalFraction, std::uint64_t seed = 0) {
  auto [d, c] = split_for_recalibration(data, recal_fraction, seed);
  return algorithm1_fit(base_fit, recal_fit, d, c);
}

}  // namespace calibrax
