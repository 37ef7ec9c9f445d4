#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "calibrax/rng.hpp"

namespace calibrax::online {

inline constexpr double kPowerTolerance = 1e-10;
inline constexpr std::size_t kPowerMaxIterations = 10000;

/// Binary forecaster on the grid {0, 1/N, ..., 1} driven by swap-regret
/// matching under the squared loss. Each prediction samples from the
/// stationary distribution of the row-normalized positive swap regrets.
class CalibratedForecaster {
 public:
  CalibratedForecaster(std::size_t n, std::uint64_t seed, std::size_t max_iterations = kPowerMaxIterations);

  std::size_t resolution() const { return n_; }
  std::size_t grid_size() const { return n_ + 1; }

  /// Grid index of the next forecast, sampled with the internal generator.
  std::size_t predict();
  /// Same, drawing from a caller-owned generator.
  std::size_t predict(Rng& rng);
  /// Throws ProtocolError unless predict() was called since the last update.
  void update(int y);
  /// Applies the update for a known play without the protocol check (replay).
  void observe(std::size_t played, int y);

  /// swap_regret(i, j): cumulative gain from having played j whenever i was played.
  double swap_regret(std::size_t i, std::size_t j) const { return regret_[i * grid_size() + j]; }
  std::span<const double> regret_matrix() const { return regret_; }
  std::span<const std::size_t> play_counts() const { return counts_; }
  std::span<const double> outcome_sums() const { return outcome_sums_; }
  /// Distribution used by the most recent predict().
  std::span<const double> last_distribution() const { return distribution_; }
  /// Number of predictions where power iteration did not converge.
  std::size_t fallback_count() const { return fallbacks_; }
  bool last_fell_back() const { return last_fell_back_; }

 private:
  void stationary_distribution();

  std::size_t n_;
  std::size_t max_iterations_;
  Rng rng_;
  std::vector<double> regret_;
  std::vector<std::size_t> counts_;
  std::vector<double> outcome_sums_;
  std::vector<double> distribution_;
  std::vector<double> chain_;
  std::vector<double> next_;
  std::size_t pending_ = 0;
  bool has_pending_ = false;
  std::size_t fallbacks_ = 0;
  bool last_fell_back_ = false;
};

struct Step {
  double p_raw = 0.0;
  std::size_t bucket = 0;
  std::size_t index = 0;  // grid index of p_out
  double p_out = 0.0;
  int y = 0;
};

/// History of an online run. Every derived quantity is recomputed from it.
struct RegretLedger {
  std::size_t resolution = 0;  // N
  std::size_t buckets = 1;     // M
  std::vector<Step> steps;
};

/// Routes p_raw to bucket min(floor(p_raw * M), M - 1) and lets that bucket's
/// forecaster answer. All buckets share one generator.
class BucketedRecalibrator {
 public:
  BucketedRecalibrator(std::size_t n, std::size_t m, std::uint64_t seed);

  static std::size_t bucket_of(double p_raw, std::size_t m);

  /// Forecast for p_raw, then the update with y; appends to the ledger.
  double step(double p_raw, int y);

  std::size_t buckets() const { return sub_.size(); }
  const CalibratedForecaster& sub(std::size_t j) const { return sub_.at(j); }
  std::span<const std::size_t> route_counts() const { return route_counts_; }
  const RegretLedger& ledger() const { return ledger_; }

 private:
  std::size_t n_;
  Rng rng_;
  std::vector<CalibratedForecaster> sub_;
  std::vector<std::size_t> route_counts_;
  RegretLedger ledger_;
};

/// Distance between the empirical frequency rho and the forecast p.
using CalibrationLoss = std::function<double(double rho, double p)>;
double l1_distance(double rho, double p);
double l2_distance(double rho, double p);

/// Loss of forecast p on outcome y, used for regrets.
using OutcomeLoss = std::function<double(double p, int y)>;
double squared_loss(double p, int y);
double misclassification(double p, int y);

/// sum_i (T_i / T) loss(rho_i, i/N) over grid points that were played.
double calibration_error(const RegretLedger& ledger, const CalibrationLoss& loss);
/// Same restricted to the steps routed to one bucket (0 when it was never used).
double bucket_calibration_error(const RegretLedger& ledger, std::size_t bucket, const CalibrationLoss& loss);

/// max over (i, j) of sum_t 1{played i} (loss(i/N, y_t) - loss(j/N, y_t)).
double internal_regret(const RegretLedger& ledger, const OutcomeLoss& loss);
/// Direct double loop over steps for every pair; test oracle for internal_regret.
double internal_regret_brute_force(const RegretLedger& ledger, const OutcomeLoss& loss);

/// sum_t loss(p_out, y) - loss(p_raw, y).
double external_regret(const RegretLedger& ledger, const OutcomeLoss& loss);

struct MergedCheck {
  double merged = 0.0;
  double weighted_sum = 0.0;
  bool holds() const { return merged <= weighted_sum + 1e-12; }
};

/// Calibration error of the merged forecaster against the route-weighted
/// average of the per-bucket errors.
MergedCheck merged_calibration_check(const RegretLedger& ledger, const CalibrationLoss& loss);

struct SimulationConfig {
  std::size_t n = 32;
  std::size_t m = 32;
  std::size_t steps = 50000;
  std::uint64_t seed = 0;
};

/// Raw stream p ~ U[0, 1], p_raw = p^2, y ~ Bernoulli(p), recalibrated online.
RegretLedger simulate_distorted_stream(const SimulationConfig& config);

struct LedgerSummary {
  std::size_t steps = 0;
  double calibration_l1 = 0.0;
  double calibration_l2 = 0.0;
  double internal_regret_l2 = 0.0;
  double internal_regret_misclassification = 0.0;
  double external_regret_misclassification = 0.0;  // per step
  MergedCheck merged_l2;
  MergedCheck merged_l1;
};

LedgerSummary summarize(const RegretLedger& ledger);
nlohmann::json to_json(const LedgerSummary& summary);
/// CSV with columns t,p_raw,bucket,p_out,y (t and bucket 1-based).
std::string trace_csv(const RegretLedger& ledger);

}  // namespace calibrax::online
