#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "calibrax/matrix.hpp"
#include "calibrax/nn.hpp"
#include "calibrax/prob_core.hpp"

namespace calibrax {

/// Per-column affine standardization; constant columns keep unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  void apply(std::span<const double> x, std::span<double> out) const;
};

/// Conjugate Bayesian linear regression with prior N(0, I/alpha) on the
/// weights and Gaussian noise of precision beta.
struct BayesianRidgeModel {
  std::vector<double> weight_mean;
  Matrix weight_cov;
  double noise_precision = 1.0;  // beta
  double prior_precision = 1.0;  // alpha
};

inline constexpr double kDefaultPriorPrecision = 1e-6;

/// Posterior for fixed (alpha, beta); evidence_iters > 0 first runs that many
/// evidence fixed-point updates of (alpha, beta). Throws NumericError if
/// alpha I + beta X'X is numerically singular.
BayesianRidgeModel fit_bayesian_ridge(const Matrix& x, std::span<const double> y, double alpha, double beta,
                                      std::size_t evidence_iters = 0);

/// alpha = kDefaultPriorPrecision, beta = 1 / least-squares residual variance.
BayesianRidgeModel fit_bayesian_ridge(const Matrix& x, std::span<const double> y);

GaussianDist predict_bayesian_ridge(const BayesianRidgeModel& model, std::span<const double> x);

/// Hidden layout for the MLP models; input and output widths come from data.
struct MlpShape {
  std::vector<std::size_t> hidden = {20, 20};
  bool dense_skip = true;
};

/// Heteroscedastic regression network with a mean head and a softplus sigma
/// head, trained on standardized inputs and targets.
struct GaussianMlp {
  NeuralNet net;
  Standardizer x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  GaussianDist predict(std::span<const double> x) const;
};

GaussianMlp fit_mlp_gaussian(const Matrix& x, std::span<const double> y, const MlpShape& shape,
                             const TrainConfig& config, TrainingLog* log = nullptr);

struct SoftmaxClassifier {
  NeuralNet net;
  Standardizer x_scale;
  std::size_t num_classes = 2;
  /// Set when every training label was the same class; predictions are then
  /// that class with all other classes at kProbFloor.
  std::optional<std::size_t> constant_class;

  CategoricalDist predict(std::span<const double> x) const;
};

/// num_classes = 0 infers max(label) + 1 (at least 2).
SoftmaxClassifier fit_softmax_classifier(const Matrix& x, std::span<const std::size_t> labels,
                                         const MlpShape& shape, const TrainConfig& config,
                                         std::size_t num_classes = 0, TrainingLog* log = nullptr);

/// Class probabilities as a floored, renormalized distribution.
CategoricalDist probabilities_from_logits(std::span<const double> logits);

}  // namespace calibrax
