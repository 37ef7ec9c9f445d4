#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "calibrax/prob_core.hpp"

namespace calibrax {

struct ReliabilityBin {
  double nominal_level = 0.0;
  double empirical_freq = 0.0;
  /// Samples whose outcome falls between this level's quantile and the
  /// previous one, so counts over all rows sum to the sample size.
  std::size_t count = 0;
};

/// One row per requested level plus a closing row at nominal level 1.
struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  std::size_t total() const;
};

/// Empirical coverage of the forecast quantiles at each level.
ReliabilityTable reliability_table(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                                   std::span<const double> levels);

/// Sum over levels of (p_j - phat_j)^2, phat_j the frequency of y <= quantile_at(dist, p_j).
double quantile_calibration_error(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                                  std::span<const double> levels);
double quantile_calibration_error(const ReliabilityTable& table);

/// Minimum occupancy for a parameter cell to enter the diagnostic.
inline constexpr std::size_t kMinCellCount = 10;
/// Upper bound on the number of parameter cells.
inline constexpr std::size_t kMaxCells = 125;

struct CellReport {
  std::vector<std::size_t> cell;  // bin index per binned coordinate
  std::size_t count = 0;
  ReliabilityTable table;
  double error = 0.0;
};

struct DistributionCalibrationReport {
  std::vector<std::size_t> binned_coordinates;
  std::vector<CellReport> cells;     // cells with at least kMinCellCount samples
  std::vector<CellReport> excluded;  // undersized cells (table left empty)
  double aggregate = 0.0;            // count-weighted mean of cell errors
};

/// Groups forecasts by their featurization (uniform bins per coordinate over the
/// observed range) and measures quantile calibration inside each group. When
/// param_bins^d exceeds kMaxCells only floor(log(kMaxCells)/log(param_bins))
/// evenly spaced coordinates are binned.
DistributionCalibrationReport distribution_calibration_diagnostic(std::span<const Featurization> featurizations,
                                                                  std::span<const PredictiveDistribution> dists,
                                                                  std::span<const double> ys, std::size_t param_bins,
                                                                  std::span<const double> levels);

/// Confidence-binned expected calibration error on the max-probability class.
double ece_classification(std::span<const CategoricalDist> dists, std::span<const std::size_t> labels,
                          std::size_t bins);

/// Calibration error for classifiers in the quantile-style form: every
/// (sample, class) probability is a forecast of the event y = class; forecasts
/// are grouped into `bins` uniform confidence bins and the error is
/// sum_b (n_b / N) (conf_b - freq_b)^2.
double classification_calibration_error(std::span<const CategoricalDist> dists,
                                        std::span<const std::size_t> labels, std::size_t bins = 10);

/// Binary forecasts binned uniformly on [0, 1]: sum_b (n_b / n) |mean(y)_b - mean(p)_b|.
double binary_calibration_error_l1(std::span<const double> probs, std::span<const int> outcomes,
                                   std::size_t bins = 20);

double accuracy(std::span<const CategoricalDist> dists, std::span<const std::size_t> labels);

struct PointErrors {
  double mae = 0.0;
  double mape = 0.0;
  std::size_t mape_count = 0;     // samples entering MAPE
  std::size_t zeros_excluded = 0;
};

/// MAE over all samples; MAPE over nonzero outcomes only.
PointErrors mae_mape(std::span<const double> point_preds, std::span<const double> ys);

/// Forecast medians, the point predictor used for MAE/MAPE.
std::vector<double> point_predictions(std::span<const PredictiveDistribution> dists);

}  // namespace calibrax
