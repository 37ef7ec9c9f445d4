#include "calibrax/scoring.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "calibrax/error.hpp"
#include "oracles.hpp"

namespace calibrax {
namespace {

TEST(LogLoss, Examples) {
  EXPECT_NEAR(0.5 * std::log(2 * M_PI), 0.918939, 1e-6);
  EXPECT_NEAR(log_loss(GaussianDist(0, 1), 0.0), 0.918939, 1e-5);
  EXPECT_DOUBLE_EQ(log_loss(CategoricalDist({1.0, 0.0}), 0.0), 0.0);
  EXPECT_NEAR(log_loss(CategoricalDist({1.0, 0.0}), 1.0), 27.631, 1e-3);
  EXPECT_DOUBLE_EQ(log_loss(CategoricalDist({1.0, 0.0}), 1.0), -std::log(1e-12));
}

TEST(Crps, GaussianMatchesQuadratureOracle) {
  const auto quad = [](double mu, double sigma, double y) {
    return oracle::crps_by_quadrature(
        [=](double z) { return oracle::normal_cdf((z - mu) / sigma); }, y, mu - 15 * sigma, mu + 15 * sigma,
        200000);
  };
  EXPECT_NEAR(quad(0, 1, 0), 0.23370, 1e-4);
  EXPECT_NEAR(crps(GaussianDist(0, 1), 0.0), 0.23370, 1e-4);
  EXPECT_NEAR(crps(GaussianDist(0, 2), 0.0), 2 * 0.23370, 2e-4);
  for (double y : {-3.0, -0.4, 0.0, 1.7, 5.0}) {
    EXPECT_NEAR(crps(GaussianDist(0.3, 1.4), y), quad(0.3, 1.4, y), 1e-6) << y;
  }
}

TEST(Crps, QuantileGridMatchesTrapezoidOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> levels, values;
    double level = 0.0, value = rng.normal();
    const std::size_t d = 2 + rng.uniform_index(9);
    for (std::size_t i = 0; i < d; ++i) {
      level += rng.uniform(0.02, 0.09);
      value += rng.uniform(0.05, 1.0);
      levels.push_back(level);
      values.push_back(value);
    }
    const QuantileGridDist q(levels, values);
    const double y = rng.uniform(values.front() - 2, values.back() + 2);
    const double range = values.back() - values.front();
    const double lo = std::min(q.lower_end(), values.front() - 10 * range);
    const double hi = std::max(q.upper_end(), values.back() + 10 * range);
    const double expected =
        oracle::crps_by_quadrature([&](double z) { return cdf_at(q, z); }, y, lo, hi, 400000);
    EXPECT_NEAR(crps(q, y), expected, 1e-6);
  }
}

TEST(Crps, PointMassGrid) {
  const QuantileGridDist point({0.1, 0.5, 0.9}, {2.0, 2.0, 2.0});
  EXPECT_NEAR(crps(point, 2.0), 0.0, 1e-6);
  EXPECT_NEAR(crps(point, 3.5), 1.5, 1e-12);
}

TEST(Crps, CategoricalIsRankedProbabilityScore) {
  // F = (0.2, 0.7, 1); y = 1 -> (0.2 - 0)^2 + (0.7 - 1)^2.
  EXPECT_NEAR(crps(CategoricalDist({0.2, 0.5, 0.3}), 1.0), 0.04 + 0.09, 1e-15);
}

TEST(CheckScore, Examples) {
  EXPECT_DOUBLE_EQ(check_score(0.9, 2, 1), 0.9);
  EXPECT_NEAR(check_score(0.9, 1, 2), 0.1, 1e-15);
  EXPECT_EQ(check_score(0.3, 1.5, 1.5), 0.0);
  EXPECT_THROW(check_score(1.0, 0, 0), DomainError);
}

TEST(PinballAvg, Examples) {
  const auto levels = decile_levels();
  EXPECT_EQ(pinball_avg(QuantileGridDist({0.2, 0.8}, {1.5, 1.5}), 1.5, levels), 0.0);

  double brute = 0.0;
  for (double tau : levels) {
    const double f = oracle::normal_quantile(tau);
    brute += 0.0 >= f ? tau * (0.0 - f) : (1 - tau) * (f - 0.0);
  }
  brute /= 9.0;
  EXPECT_NEAR(brute, 0.123364, 1e-6);
  EXPECT_NEAR(pinball_avg(GaussianDist(0, 1), 0.0, levels), brute, 1e-12);

  // Symmetric forecast, outcome at the median: the upper half doubled.
  const std::vector<double> upper = {0.6, 0.7, 0.8, 0.9};
  const std::vector<double> sym = {0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
  EXPECT_NEAR(pinball_avg(GaussianDist(1, 2), 1.0, sym) * 8, 2 * pinball_avg(GaussianDist(1, 2), 1.0, upper) * 4,
              1e-12);
}

TEST(Misclassification, Examples) {
  EXPECT_EQ(misclassification_loss(0.7, 1), 0);
  EXPECT_EQ(misclassification_loss(0.7, 0), 1);
  EXPECT_EQ(misclassification_loss(0.5, 1), 0);
  EXPECT_EQ(misclassification_loss(0.49, 1), 1);
  EXPECT_DOUBLE_EQ(score(loss::Misclassification{}, CategoricalDist({0.5, 0.5}), 1.0), 0.0);
}

TEST(Score, ClassLossesRejectContinuousForecasts) {
  EXPECT_THROW(score(loss::Brier{}, GaussianDist(0, 1), 0.0), DomainError);
  EXPECT_THROW(score(loss::Brier{}, CategoricalDist({0.5, 0.5}), 0.5), DomainError);
  EXPECT_THROW(validate(loss::Check{1.2}), DomainError);
  EXPECT_THROW(validate(loss::PinballAvg{{0.5, 0.2}}), DomainError);
}

TEST(ExpectedScore, Examples) {
  Rng rng(1);
  const PredictiveDistribution fair = CategoricalDist({0.5, 0.5});
  const auto brier_fair = expected_score(loss::Brier{}, fair, fair, 1000, rng);
  EXPECT_NEAR(brier_fair.mean, 0.5, 1e-12 + 3 * brier_fair.std_error);

  const PredictiveDistribution sure = CategoricalDist({1.0, 0.0});
  EXPECT_DOUBLE_EQ(expected_score(loss::Log{}, sure, sure, 500, rng).mean, 0.0);
  EXPECT_THROW(expected_score(loss::Log{}, sure, sure, 99, rng), DomainError);

  const PredictiveDistribution f = GaussianDist(0.5, 2.0), g = GaussianDist(0, 1);
  Rng a(9), b(9);
  const auto sf = expected_score(loss::Crps{}, f, g, 20000, a);
  const auto sg = expected_score(loss::Crps{}, g, g, 20000, b);
  EXPECT_GE(sf.mean, sg.mean - 3 * std::max(sf.std_error, sg.std_error));
}

TEST(ExpectedScore, DeterministicGivenSeed) {
  Rng a(77), b(77);
  const PredictiveDistribution g = GaussianDist(0, 1);
  EXPECT_EQ(expected_score(loss::Log{}, g, g, 1000, a).mean, expected_score(loss::Log{}, g, g, 1000, b).mean);
}

// Propriety over random pairs; the acceptance suite runs the full-size version.
TEST(Invariants, ProprietySmall) {
  Rng pairs(4);
  const LossSpec pinball = loss::PinballAvg{decile_levels()};
  for (int trial = 0; trial < 15; ++trial) {
    const PredictiveDistribution g = GaussianDist(pairs.normal(), pairs.uniform(0.3, 3));
    const PredictiveDistribution f = GaussianDist(pairs.normal(), pairs.uniform(0.3, 3));
    for (const LossSpec& spec : {LossSpec{loss::Log{}}, LossSpec{loss::Crps{}}, pinball}) {
      const std::uint64_t seed = pairs.next_u64();
      Rng a(seed), b(seed);
      const auto sf = expected_score(spec, f, g, 20000, a);
      const auto sg = expected_score(spec, g, g, 20000, b);
      EXPECT_GE(sf.mean, sg.mean - 3 * std::max(sf.std_error, sg.std_error)) << name_of(spec);
    }
  }
}

TEST(Invariants, CheckScoreConvexInForecast) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double tau = rng.uniform(), y = rng.normal(0, 3), f1 = rng.normal(0, 3), f2 = rng.normal(0, 3);
    const double lambda = rng.uniform();
    EXPECT_LE(check_score(tau, y, lambda * f1 + (1 - lambda) * f2),
              lambda * check_score(tau, y, f1) + (1 - lambda) * check_score(tau, y, f2) + 1e-12);
  }
}

TEST(Invariants, CrpsScaleEquivariance) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const double c = rng.uniform(0.1, 10);
    const double y = rng.normal(0, 2);
    const PredictiveDistribution g = GaussianDist(rng.normal(), rng.uniform(0.2, 3));
    EXPECT_NEAR(crps(scale(g, c), c * y), c * crps(g, y), 1e-6);
    const PredictiveDistribution q = QuantileGridDist({0.1, 0.3, 0.6, 0.9}, {-1.0, 0.0, 0.2, 2.5});
    EXPECT_NEAR(crps(scale(q, c), c * y), c * crps(q, y), 1e-6);
  }
}

TEST(Invariants, PinballMinimizedAtTruthOverShifts) {
  const PredictiveDistribution truth = GaussianDist(0, 1);
  const LossSpec spec = loss::PinballAvg{decile_levels()};
  double best_shift = 1e9, best_value = 1e9;
  for (int k = -10; k <= 10; ++k) {
    const double shift = 0.05 * k;
    Rng rng(123);  // common random numbers across the family
    const double value = expected_score(spec, GaussianDist(shift, 1), truth, 100000, rng).mean;
    if (value < best_value) best_value = value, best_shift = shift;
  }
  EXPECT_LE(std::abs(best_shift), 0.05);
}

TEST(DecomposeBinned, BaseRateForecastIsCalibrated) {
  Rng rng(10);
  std::vector<std::size_t> outcomes(1000);
  std::size_t ones = 0;
  for (auto& y : outcomes) ones += (y = rng.bernoulli(0.3) ? 1 : 0);
  const double rate = static_cast<double>(ones) / 1000.0;
  const std::vector<CategoricalDist> forecasts(1000, CategoricalDist({1 - rate, rate}));
  const auto report = decompose_binned(forecasts, outcomes);
  EXPECT_NEAR(report.calibration_term, 0.0, 1e-9);
  EXPECT_NEAR(report.mean_loss, report.calibration_term + report.refinement_term, 1e-9);
  EXPECT_EQ(report.bin_count, 1u);
}

TEST(DecomposeBinned, MatchingConditionalsHaveSmallCalibration) {
  Rng rng(12);
  std::vector<CategoricalDist> forecasts;
  std::vector<std::size_t> outcomes;
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.bernoulli(0.5) ? 0.8 : 0.2;
    forecasts.emplace_back(std::vector<double>{1 - p, p});
    outcomes.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  const auto report = decompose_binned(forecasts, outcomes);
  // Oracle: empirical KL per group computed directly.
  double kl = 0.0;
  for (double p : {0.2, 0.8}) {
    double n = 0, k = 0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
      if (forecasts[i].prob(1) == p) n += 1, k += static_cast<double>(outcomes[i]);
    }
    const double q = k / n;
    kl += (n / 10000.0) * (q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p)));
  }
  EXPECT_NEAR(report.calibration_term, kl, 1e-12);
  EXPECT_LE(report.calibration_term, 0.003);
}

TEST(DecomposeBinned, DeterministicDataHasZeroRefinement) {
  std::vector<CategoricalDist> forecasts;
  std::vector<std::size_t> outcomes;
  for (int i = 0; i < 100; ++i) {
    const std::size_t y = i % 3;
    std::vector<double> p(3, 0.0);
    p[y] = 1.0;
    forecasts.emplace_back(p);
    outcomes.push_back(y);
  }
  const auto report = decompose_binned(forecasts, outcomes);
  EXPECT_EQ(report.refinement_term, 0.0);
  EXPECT_EQ(report.calibration_term, 0.0);
  EXPECT_EQ(report.mean_loss, 0.0);
}

TEST(DecomposeBinned, IdentityOnRandomGroupedData) {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(4);
    std::vector<CategoricalDist> palette;
    for (int g = 0; g < 5; ++g) {
      std::vector<double> w(k);
      for (auto& x : w) x = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
      w[0] += 1e-3;
      palette.push_back(CategoricalDist::normalized(w));
    }
    std::vector<CategoricalDist> forecasts;
    std::vector<std::size_t> outcomes;
    for (int i = 0; i < 300; ++i) {
      forecasts.push_back(palette[rng.uniform_index(palette.size())]);
      outcomes.push_back(rng.uniform_index(k));
    }
    const auto report = decompose_binned(forecasts, outcomes);
    EXPECT_NEAR(report.mean_loss, report.calibration_term + report.refinement_term, 1e-9);
  }
}

TEST(DecomposeBinned, ContinuousForecastsSnapToBins) {
  Rng rng(15);
  std::vector<CategoricalDist> forecasts;
  std::vector<std::size_t> outcomes;
  for (int i = 0; i < 5000; ++i) {
    const double p = rng.uniform();
    forecasts.emplace_back(std::vector<double>{1 - p, p});
    outcomes.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  const auto report = decompose_binned(forecasts, outcomes, 20);
  EXPECT_LE(report.bin_count, 20u);
  EXPECT_NEAR(report.mean_loss, report.calibration_term + report.refinement_term, 1e-9);
  EXPECT_LT(report.calibration_term, 0.01);
  EXPECT_THROW(decompose_binned(forecasts, outcomes, 0), DomainError);
}

TEST(DecomposeBinned, LengthMismatchThrows) {
  const std::vector<CategoricalDist> forecasts(2, CategoricalDist({0.5, 0.5}));
  const std::vector<std::size_t> outcomes = {0};
  EXPECT_THROW(decompose_binned(forecasts, outcomes), DomainError);
}

}  // namespace
}  // namespace calibrax
