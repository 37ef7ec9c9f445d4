#include "calibrax/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "calibrax/error.hpp"
#include "oracles.hpp"

namespace calibrax {
namespace {

struct Sample {
  std::vector<PredictiveDistribution> dists;
  std::vector<Featurization> features;
  std::vector<double> ys;
};

// y = x + 0.5 sin(4 pi x) + (0.05 + 0.5 x) eps; forecasts N(mu(x), shrink * sigma(x)).
Sample heteroscedastic(std::size_t n, double shrink, std::uint64_t seed) {
  Rng rng(seed);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double mu = x + 0.5 * std::sin(4 * M_PI * x);
    const double sigma = 0.05 + 0.5 * x;
    s.ys.push_back(rng.normal(mu, sigma));
    s.dists.emplace_back(GaussianDist(mu, shrink * sigma));
    s.features.push_back(natural_params(s.dists.back()));
  }
  return s;
}

double misscaled_oracle(double shrink) {
  double total = 0.0;
  for (double p : decile_levels()) {
    const double coverage = oracle::normal_cdf(shrink * oracle::normal_quantile(p));
    total += (p - coverage) * (p - coverage);
  }
  return total;
}

TEST(QuantileCalibrationError, SelfDrawnOutcomesAreCalibrated) {
  const auto s = heteroscedastic(50000, 1.0, 3);
  EXPECT_LE(quantile_calibration_error(s.dists, s.ys, decile_levels()), 0.002);
}

TEST(QuantileCalibrationError, HalfScaleMatchesNormalCdfOracle) {
  const double expected = misscaled_oracle(0.5);
  EXPECT_NEAR(expected, 0.11282, 1e-4);
  EXPECT_NEAR(oracle::normal_cdf(0.5 * oracle::normal_quantile(0.9)), 0.739, 1e-3);
  const auto s = heteroscedastic(50000, 0.5, 4);
  EXPECT_NEAR(quantile_calibration_error(s.dists, s.ys, decile_levels()), expected, 0.01);
}

TEST(QuantileCalibrationError, SingleSample) {
  const std::vector<PredictiveDistribution> d = {GaussianDist(0, 1)};
  const std::vector<double> half = {0.5};
  EXPECT_DOUBLE_EQ(quantile_calibration_error(d, std::vector<double>{-1.0}, half), 0.25);
  EXPECT_DOUBLE_EQ(quantile_calibration_error(d, std::vector<double>{1.0}, half), 0.25);
}

TEST(QuantileCalibrationError, Errors) {
  const std::vector<PredictiveDistribution> none;
  EXPECT_THROW(quantile_calibration_error(none, std::vector<double>{}, decile_levels()), DomainError);
  const std::vector<PredictiveDistribution> one = {GaussianDist(0, 1)};
  EXPECT_THROW(quantile_calibration_error(one, std::vector<double>{1, 2}, decile_levels()), DomainError);
}

TEST(QuantileCalibrationError, InvariantUnderJointMonotoneMaps) {
  Rng rng(5);
  const auto levels = decile_levels();
  const auto base = heteroscedastic(2000, 0.8, 6);
  std::vector<PredictiveDistribution> grids;
  for (const auto& d : base.dists) grids.emplace_back(reconstruct(featurize(d, levels), levels));
  const double reference = quantile_calibration_error(grids, base.ys, levels);

  for (int trial = 0; trial < 20; ++trial) {
    const double a = rng.uniform(0.1, 3), b = rng.normal(), c = rng.uniform(0.1, 2);
    auto g = [&](double v) { return a * v + b + c * std::tanh(v) + std::exp(0.3 * v); };
    std::vector<PredictiveDistribution> mapped;
    std::vector<double> ys;
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const auto& q = std::get<QuantileGridDist>(grids[i]);
      std::vector<double> values;
      for (double v : q.values()) values.push_back(g(v));
      mapped.emplace_back(QuantileGridDist(levels, values));
      ys.push_back(g(base.ys[i]));
    }
    EXPECT_NEAR(quantile_calibration_error(mapped, ys, levels), reference, 1e-12);
  }
}

TEST(ReliabilityTable, CountsSumToSampleSize) {
  const auto s = heteroscedastic(3000, 0.7, 8);
  const auto table = reliability_table(s.dists, s.ys, decile_levels());
  EXPECT_EQ(table.bins.size(), 10u);
  EXPECT_EQ(table.total(), 3000u);
  for (const auto& b : table.bins) {
    EXPECT_GE(b.empirical_freq, 0.0);
    EXPECT_LE(b.empirical_freq, 1.0);
  }
  EXPECT_EQ(table.bins.back().nominal_level, 1.0);
}

TEST(DistributionDiagnostic, SingleBinReducesToQuantileError) {
  const auto s = heteroscedastic(5000, 0.6, 9);
  const auto report = distribution_calibration_diagnostic(s.features, s.dists, s.ys, 1, decile_levels());
  EXPECT_EQ(report.cells.size(), 1u);
  EXPECT_EQ(report.aggregate, quantile_calibration_error(s.dists, s.ys, decile_levels()));
}

TEST(DistributionDiagnostic, CorrectForecastsSmallAggregate) {
  const auto s = heteroscedastic(50000, 1.0, 10);
  const auto report = distribution_calibration_diagnostic(s.features, s.dists, s.ys, 5, decile_levels());
  EXPECT_LE(report.aggregate, 0.01);
}

TEST(DistributionDiagnostic, MisscaledCoverageInEveryCell) {
  const auto s = heteroscedastic(50000, 0.5, 11);
  const auto report = distribution_calibration_diagnostic(s.features, s.dists, s.ys, 5, decile_levels());
  ASSERT_FALSE(report.cells.empty());
  const double truth = oracle::normal_cdf(0.5 * oracle::normal_quantile(0.9));
  for (const auto& cell : report.cells) {
    // 0.02, widened to four binomial standard errors in sparsely populated cells.
    const double tol = std::max(0.02, 4 * std::sqrt(truth * (1 - truth) / static_cast<double>(cell.count)));
    const auto& row = cell.table.bins[8];
    EXPECT_DOUBLE_EQ(row.nominal_level, 0.9);
    EXPECT_NEAR(row.empirical_freq, truth, tol) << cell.count;
  }
}

TEST(DistributionDiagnostic, ExcludesSparseCellsAndCapsCells) {
  std::vector<PredictiveDistribution> dists;
  std::vector<Featurization> features;
  std::vector<double> ys;
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double mu = i < 195 ? 0.0 : 10.0;
    dists.emplace_back(GaussianDist(mu, 1));
    features.push_back(natural_params(dists.back()));
    ys.push_back(rng.normal(mu, 1));
  }
  const auto report = distribution_calibration_diagnostic(features, dists, ys, 5, decile_levels());
  ASSERT_EQ(report.excluded.size(), 1u);
  EXPECT_EQ(report.excluded.front().count, 5u);
  EXPECT_EQ(report.cells.front().count, 195u);

  std::vector<Featurization> deciles;
  for (const auto& d : dists) deciles.push_back(featurize(d, decile_levels()));
  const auto capped = distribution_calibration_diagnostic(deciles, dists, ys, 5, decile_levels());
  EXPECT_EQ(capped.binned_coordinates, (std::vector<std::size_t>{0, 4, 8}));
  EXPECT_THROW(distribution_calibration_diagnostic(features, dists, ys, 0, decile_levels()), DomainError);
}

TEST(Ece, Examples) {
  const std::vector<CategoricalDist> hot = {CategoricalDist({1.0, 0.0}), CategoricalDist({0.0, 1.0})};
  EXPECT_EQ(ece_classification(hot, std::vector<std::size_t>{0, 1}, 10), 0.0);
  EXPECT_EQ(ece_classification(hot, std::vector<std::size_t>{1, 0}, 10), 1.0);

  Rng rng(13);
  std::vector<CategoricalDist> constant(10000, CategoricalDist({0.7, 0.3}));
  std::vector<std::size_t> labels;
  for (int i = 0; i < 10000; ++i) labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
  EXPECT_LE(ece_classification(constant, labels, 10), 0.02);
}

TEST(Ece, CalibratedStreamWithinBinomialEnvelope) {
  Rng rng(14);
  const std::size_t n = 20000, bins = 10;
  std::vector<CategoricalDist> dists;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = rng.uniform();
    dists.emplace_back(std::vector<double>{1 - p, p});
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  // Sum_b (n_b/n) |acc_b - conf_b| has mean at most sum_b sqrt(n_b)/n * 0.5 <= 0.5 sqrt(bins/n).
  const double envelope = 3 * 0.5 * std::sqrt(static_cast<double>(bins) / static_cast<double>(n));
  EXPECT_LE(ece_classification(dists, labels, bins), envelope);
  EXPECT_LE(classification_calibration_error(dists, labels), 0.001);
}

TEST(ClassificationCalibrationError, Examples) {
  const std::vector<CategoricalDist> hot = {CategoricalDist({1.0, 0.0, 0.0}), CategoricalDist({0.0, 0.0, 1.0})};
  EXPECT_EQ(classification_calibration_error(hot, std::vector<std::size_t>{0, 2}), 0.0);
  // Wrong one-hot forecasts: bin 0 holds 4 forecasts with 2 hits (gap 0.5),
  // bin 9 holds 2 forecasts with no hits (gap 1).
  EXPECT_NEAR(classification_calibration_error(hot, std::vector<std::size_t>{1, 0}),
              4.0 / 6 * 0.25 + 2.0 / 6 * 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(accuracy(hot, std::vector<std::size_t>{0, 0}), 0.5);
}

TEST(MaeMape, Examples) {
  const std::vector<double> y = {1, 2};
  auto e = mae_mape(y, y);
  EXPECT_EQ(e.mae, 0.0);
  EXPECT_EQ(e.mape, 0.0);
  e = mae_mape(std::vector<double>{2, 2}, y);
  EXPECT_DOUBLE_EQ(e.mae, 0.5);
  EXPECT_DOUBLE_EQ(e.mape, 0.5);
  e = mae_mape(std::vector<double>{1, 1}, std::vector<double>{0, 1});
  EXPECT_DOUBLE_EQ(e.mae, 0.5);
  EXPECT_DOUBLE_EQ(e.mape, 0.0);
  EXPECT_EQ(e.mape_count, 1u);
  EXPECT_EQ(e.zeros_excluded, 1u);
  EXPECT_THROW(mae_mape(std::vector<double>{1, 1}, std::vector<double>{0, 0}), DomainError);
}

TEST(PointPredictions, AreMedians) {
  const std::vector<PredictiveDistribution> d = {GaussianDist(2.5, 1),
                                                 QuantileGridDist({0.25, 0.5, 0.75}, {0.0, 1.0, 4.0})};
  EXPECT_EQ(point_predictions(d), (std::vector<double>{2.5, 1.0}));
}

}  // namespace
}  // namespace calibrax
