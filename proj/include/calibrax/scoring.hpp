#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "calibrax/prob_core.hpp"
#include "calibrax/rng.hpp"

namespace calibrax {

/// Floor applied to densities and probabilities inside logarithms.
inline constexpr double kProbFloor = 1e-12;

// All losses are oriented so that lower is better.
namespace loss {
struct Log {};
struct Crps {};
struct Check {
  double tau;
};
struct PinballAvg {
  std::vector<double> levels;
};
struct Brier {};
struct Misclassification {};
}  // namespace loss

using LossSpec = std::variant<loss::Log, loss::Crps, loss::Check, loss::PinballAvg, loss::Brier,
                              loss::Misclassification>;

void validate(const LossSpec& spec);
std::string name_of(const LossSpec& spec);

/// Negative log density (or mass), floored at kProbFloor.
double log_loss(const PredictiveDistribution& dist, double y);

/// Continuous ranked probability score, the integral of (F(z) - 1{z >= y})^2.
/// Closed form for Gaussians; exact piecewise integration for quantile grids;
/// ranked probability score over class indices for categoricals.
double crps(const PredictiveDistribution& dist, double y);

/// Check (pinball) score: tau*(y-f) if y >= f, else (1-tau)*(f-y).
double check_score(double tau, double y, double f);

/// Mean check score of the forecast quantiles over the given levels.
double pinball_avg(const PredictiveDistribution& dist, double y, std::span<const double> levels);

/// Sum over classes of (p_k - 1{y = k})^2.
double brier(const CategoricalDist& dist, std::size_t y);

/// 0-1 loss of the decision 1{p >= 0.5}.
int misclassification_loss(double p, int y);

/// Evaluates any LossSpec on one outcome. Class-valued losses expect y to be a
/// class index.
double score(const LossSpec& spec, const PredictiveDistribution& dist, double y);

struct McEstimate {
  double mean;
  double std_error;
};

/// Monte-Carlo estimate of E_{y ~ truth} score(spec, forecast, y).
McEstimate expected_score(const LossSpec& spec, const PredictiveDistribution& forecast,
                          const PredictiveDistribution& truth, std::size_t n_mc, Rng& rng);

/// Log-loss decomposition into calibration (KL) and refinement (entropy).
struct ScoreReport {
  double mean_loss = 0.0;
  double calibration_term = 0.0;
  double refinement_term = 0.0;
  std::size_t n = 0;
  std::size_t bin_count = 0;
};

/// Groups samples by identical forecast vector and decomposes the empirical
/// mean log-loss: sum_v w_v KL(q_v || f_v) + sum_v w_v H(q_v).
ScoreReport decompose_binned(std::span<const CategoricalDist> forecasts,
                             std::span<const std::size_t> outcomes);

/// Continuous forecasts: each probability coordinate is first snapped to one of
/// `bins` uniform cells on [0, 1]; samples sharing a cell vector are replaced by
/// their mean forecast, then decomposed exactly as above.
ScoreReport decompose_binned(std::span<const CategoricalDist> forecasts,
                             std::span<const std::size_t> outcomes, std::size_t bins);

}  // namespace calibrax
