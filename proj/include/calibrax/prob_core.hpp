#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "calibrax/rng.hpp"

namespace calibrax {

/// Density returned where a quantile-grid CDF jumps (equal consecutive values).
inline constexpr double kDensityCap = 1e12;

class GaussianDist {
 public:
  GaussianDist(double mu, double sigma);

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  double mu_;
  double sigma_;
};

/// Distribution over class indices 0..K-1 (K >= 2).
class CategoricalDist {
 public:
  explicit CategoricalDist(std::vector<double> probs);

  /// Clips negatives to zero and rescales to sum one.
  static CategoricalDist normalized(std::vector<double> weights);

  std::span<const double> probs() const { return probs_; }
  double prob(std::size_t k) const { return probs_.at(k); }
  std::size_t num_classes() const { return probs_.size(); }
  /// Most probable class; ties resolve to the highest index, so a binary
  /// forecast of exactly 0.5 predicts class 1.
  std::size_t argmax() const;

 private:
  std::vector<double> probs_;
};

/// Forecast given as quantile values at a grid of levels. The CDF is the
/// piecewise-linear interpolant through (value_i, level_i), extended linearly
/// beyond the grid with the boundary segment slope and clamped to [0, 1].
class QuantileGridDist {
 public:
  QuantileGridDist(std::vector<double> levels, std::vector<double> values);

  std::span<const double> levels() const { return levels_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return levels_.size(); }

  /// Support of the extrapolated CDF: [lower_end(), upper_end()].
  double lower_end() const;
  double upper_end() const;

 private:
  std::vector<double> levels_;
  std::vector<double> values_;
};

using PredictiveDistribution = std::variant<GaussianDist, CategoricalDist, QuantileGridDist>;

enum class FeaturizationKind { kGaussianParams, kQuantileGrid, kClassProbs };

std::string_view to_string(FeaturizationKind kind);
FeaturizationKind featurization_kind_from_string(std::string_view name);

/// Parameter vector presented to a recalibrator.
struct Featurization {
  std::vector<double> params;
  FeaturizationKind kind;

  /// Throws DomainError when params.size() does not fit kind.
  void validate(std::size_t expected_dim) const;
};

/// Throws DomainError unless levels are strictly increasing inside (0, 1).
void validate_levels(std::span<const double> levels);

/// The nine deciles 0.1, ..., 0.9.
std::vector<double> decile_levels();
/// k/n for k = 1..n-1.
std::vector<double> uniform_levels(std::size_t n);

double cdf_at(const PredictiveDistribution& dist, double y);
double quantile_at(const PredictiveDistribution& dist, double tau);
/// Density (continuous) or mass (categorical, y a class index).
double density_at(const PredictiveDistribution& dist, double y);

double cdf_at(const GaussianDist& dist, double y);
double cdf_at(const CategoricalDist& dist, double y);
double cdf_at(const QuantileGridDist& dist, double y);
double quantile_at(const GaussianDist& dist, double tau);
double quantile_at(const CategoricalDist& dist, double tau);
double quantile_at(const QuantileGridDist& dist, double tau);
double density_at(const GaussianDist& dist, double y);
double density_at(const CategoricalDist& dist, double y);
double density_at(const QuantileGridDist& dist, double y);

/// Quantile featurization: params[i] = quantile_at(dist, levels[i]).
Featurization featurize(const PredictiveDistribution& dist, std::span<const double> levels);
/// Native parameters: (mu, sigma) or the class probabilities.
Featurization natural_params(const PredictiveDistribution& dist);
/// Rebuilds a quantile grid from a quantile featurization.
QuantileGridDist reconstruct(const Featurization& phi, std::span<const double> levels);

/// Inverse-CDF sampling; deterministic given the generator state.
std::vector<double> sample(const PredictiveDistribution& dist, Rng& rng, std::size_t n);
double sample_one(const PredictiveDistribution& dist, Rng& rng);

/// Distribution of c * Y for c > 0 (Gaussian and quantile grid only).
PredictiveDistribution scale(const PredictiveDistribution& dist, double c);

/// Median used as the point prediction.
double median(const PredictiveDistribution& dist);

}  // namespace calibrax
