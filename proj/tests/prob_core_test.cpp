#include "calibrax/prob_core.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "calibrax/error.hpp"
#include "calibrax/normal.hpp"
#include "oracles.hpp"

namespace calibrax {
namespace {

QuantileGridDist random_grid(Rng& rng, std::size_t d) {
  std::vector<double> levels(d), values(d);
  double level = 0.0, value = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    level += rng.uniform(0.02, 0.9 / static_cast<double>(d));
    levels[i] = level;
    value += rng.uniform(0.01, 1.0);
    values[i] = value;
  }
  return QuantileGridDist(levels, values);
}

TEST(NormalQuantile, MatchesBoostOracle) {
  for (double p : {1e-12, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.999, 1 - 1e-9}) {
    EXPECT_NEAR(normal::quantile(p), oracle::normal_quantile(p), 1e-12 * std::max(1.0, std::abs(oracle::normal_quantile(p))))
        << "p = " << p;
  }
  EXPECT_THROW(normal::quantile(1.5), DomainError);
}

TEST(CdfAt, Examples) {
  EXPECT_DOUBLE_EQ(cdf_at(GaussianDist(0, 1), 0.0), 0.5);
  EXPECT_DOUBLE_EQ(cdf_at(QuantileGridDist({0.25, 0.75}, {1, 3}), 2.0), 0.5);
  // 1.2816 is the 0.9 standard-normal quantile to four decimals.
  EXPECT_NEAR(oracle::normal_quantile(0.9), 1.2816, 1e-4);
  EXPECT_NEAR(cdf_at(GaussianDist(0, 1), 1.2816), 0.9, 1e-4);
}

TEST(CdfAt, NonFiniteArgumentIsDomainError) {
  const PredictiveDistribution g = GaussianDist(0, 1);
  EXPECT_THROW(cdf_at(g, std::numeric_limits<double>::quiet_NaN()), DomainError);
  EXPECT_THROW(cdf_at(QuantileGridDist({0.2, 0.8}, {0, 1}), std::numeric_limits<double>::infinity()),
               DomainError);
}

TEST(CdfAt, QuantileGridTailsAreLinearAndClamped) {
  const QuantileGridDist q({0.25, 0.75}, {1, 3});
  EXPECT_DOUBLE_EQ(cdf_at(q, 0.5), 0.125);
  EXPECT_DOUBLE_EQ(cdf_at(q, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(cdf_at(q, -10.0), 0.0);
  EXPECT_DOUBLE_EQ(cdf_at(q, 3.5), 0.875);
  EXPECT_DOUBLE_EQ(cdf_at(q, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(q.lower_end(), 0.0);
  EXPECT_DOUBLE_EQ(q.upper_end(), 4.0);
}

TEST(QuantileAt, Examples) {
  EXPECT_DOUBLE_EQ(quantile_at(GaussianDist(0, 1), 0.5), 0.0);
  EXPECT_DOUBLE_EQ(quantile_at(QuantileGridDist({0.1, 0.9}, {-1, 1}), 0.5), 0.0);
  EXPECT_NEAR(2.0 + 3.0 * oracle::normal_quantile(0.9), 5.8447, 1e-3);
  EXPECT_NEAR(quantile_at(GaussianDist(2, 3), 0.9), 5.8447, 1e-3);
}

TEST(QuantileAt, OutsideOpenUnitIntervalIsDomainError) {
  const PredictiveDistribution g = GaussianDist(0, 1);
  EXPECT_THROW(quantile_at(g, 0.0), DomainError);
  EXPECT_THROW(quantile_at(g, 1.0), DomainError);
  EXPECT_THROW(quantile_at(CategoricalDist({0.5, 0.5}), -0.1), DomainError);
}

TEST(QuantileAt, GeneralizedInverseAtJumps) {
  // Values 1, 1 form a jump in the CDF from 0 up to 0.6 at y = 1.
  const QuantileGridDist q({0.3, 0.6, 0.9}, {1, 1, 2});
  EXPECT_DOUBLE_EQ(quantile_at(q, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(quantile_at(q, 0.45), 1.0);
  EXPECT_DOUBLE_EQ(quantile_at(q, 0.75), 1.5);
  EXPECT_DOUBLE_EQ(cdf_at(q, 1.0), 0.6);
  EXPECT_DOUBLE_EQ(cdf_at(q, 0.999), 0.0);
}

TEST(DensityAt, Examples) {
  EXPECT_NEAR(1.0 / std::sqrt(2.0 * M_PI), 0.39894, 1e-5);
  EXPECT_NEAR(density_at(GaussianDist(0, 1), 0.0), 0.39894, 1e-5);
  EXPECT_DOUBLE_EQ(density_at(CategoricalDist({0.2, 0.8}), 1.0), 0.8);
  EXPECT_DOUBLE_EQ(density_at(QuantileGridDist({0.25, 0.75}, {0, 1}), 0.5), 0.5);
}

TEST(DensityAt, JumpReturnsCap) {
  const QuantileGridDist q({0.3, 0.6, 0.9}, {1, 1, 2});
  EXPECT_EQ(density_at(q, 1.0), kDensityCap);
  const QuantileGridDist point({0.1, 0.5, 0.9}, {2, 2, 2});
  EXPECT_EQ(density_at(point, 2.0), kDensityCap);
  EXPECT_EQ(density_at(point, 2.5), 0.0);
  EXPECT_EQ(cdf_at(point, 1.999), 0.0);
  EXPECT_EQ(cdf_at(point, 2.0), 1.0);
}

TEST(DensityAt, CategoricalNonIntegerIsZero) {
  EXPECT_EQ(density_at(CategoricalDist({0.2, 0.8}), 0.5), 0.0);
  EXPECT_EQ(density_at(CategoricalDist({0.2, 0.8}), 2.0), 0.0);
}

TEST(Featurize, DecilesOfStandardNormal) {
  const std::vector<double> expected = {-1.2816, -0.8416, -0.5244, -0.2533, 0.0,
                                        0.2533,  0.5244,  0.8416,  1.2816};
  const auto levels = decile_levels();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    ASSERT_NEAR(oracle::normal_quantile(levels[i]), expected[i], 1e-3);
  }
  const auto phi = featurize(GaussianDist(0, 1), levels);
  EXPECT_EQ(phi.kind, FeaturizationKind::kQuantileGrid);
  ASSERT_EQ(phi.params.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(phi.params[i], expected[i], 1e-3);
}

TEST(Featurize, MedianOfSymmetricAndGridIdentity) {
  const std::vector<double> half = {0.5};
  EXPECT_DOUBLE_EQ(featurize(GaussianDist(3.25, 2), half).params[0], 3.25);
  EXPECT_NEAR(featurize(QuantileGridDist({0.2, 0.8}, {-1.0, 1.0}), half).params[0], 0.0, 1e-15);

  const QuantileGridDist q({0.1, 0.4, 0.7, 0.9}, {-2.0, 0.5, 0.5, 3.0});
  const auto phi = featurize(q, q.levels());
  EXPECT_EQ(phi.params, std::vector<double>(q.values().begin(), q.values().end()));
}

TEST(Featurize, RejectsBadLevels) {
  EXPECT_THROW(featurize(GaussianDist(0, 1), std::vector<double>{0.5, 0.4}), DomainError);
  EXPECT_THROW(featurize(GaussianDist(0, 1), std::vector<double>{0.0, 0.4}), DomainError);
}

TEST(Featurization, ValidateChecksKindDimension) {
  EXPECT_NO_THROW((Featurization{{0.0, 1.0}, FeaturizationKind::kGaussianParams}.validate(2)));
  EXPECT_THROW((Featurization{{0.0}, FeaturizationKind::kGaussianParams}.validate(1)), DomainError);
  EXPECT_THROW((Featurization{{0.0, 1.0, 2.0}, FeaturizationKind::kQuantileGrid}.validate(9)), DomainError);
  EXPECT_EQ(natural_params(CategoricalDist({0.3, 0.7})).kind, FeaturizationKind::kClassProbs);
}

TEST(Sample, GaussianMeanWithinClt) {
  Rng rng(11);
  const std::size_t n = 1'000'000;
  const auto xs = sample(GaussianDist(0, 1), rng, n);
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Sample, DegenerateCategoricalAndDeterminism) {
  Rng rng(3);
  for (double x : sample(CategoricalDist({1.0, 0.0}), rng, 1000)) EXPECT_EQ(x, 0.0);

  Rng a(42), b(42);
  const PredictiveDistribution q = QuantileGridDist({0.2, 0.5, 0.8}, {0, 1, 4});
  EXPECT_EQ(sample(q, a, 100), sample(q, b, 100));
  EXPECT_THROW(sample(q, a, 0), DomainError);
}

TEST(Invariants, CdfMonotoneWithLimits) {
  Rng rng(5);
  std::vector<PredictiveDistribution> dists = {GaussianDist(1.0, 0.3), CategoricalDist({0.1, 0.6, 0.3}),
                                               QuantileGridDist({0.3, 0.6, 0.9}, {1, 1, 2})};
  for (int i = 0; i < 20; ++i) dists.emplace_back(random_grid(rng, 2 + rng.uniform_index(10)));
  for (const auto& dist : dists) {
    const double lo = quantile_at(dist, 1e-6) - 10.0;
    const double hi = quantile_at(dist, 1 - 1e-6) + 10.0;
    double previous = -1.0;
    for (int k = 0; k <= 1000; ++k) {
      const double y = lo + (hi - lo) * k / 1000.0;
      const double f = cdf_at(dist, y);
      ASSERT_GE(f, 0.0);
      ASSERT_LE(f, 1.0);
      ASSERT_GE(f, previous);
      previous = f;
    }
    EXPECT_NEAR(cdf_at(dist, lo), 0.0, 1e-9);
    EXPECT_NEAR(cdf_at(dist, hi), 1.0, 1e-9);
  }
}

TEST(Invariants, QuantileInvertsCdfOnStrictlyIncreasingPart) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictiveDistribution> dists;
    dists.emplace_back(GaussianDist(rng.normal(0, 5), rng.uniform(0.1, 4.0)));
    dists.emplace_back(random_grid(rng, 2 + rng.uniform_index(12)));
    for (const auto& dist : dists) {
      for (int k = 0; k < 20; ++k) {
        const double y = quantile_at(dist, rng.uniform(0.01, 0.99));
        const double back = quantile_at(dist, cdf_at(dist, y));
        ASSERT_NEAR(back, y, 1e-9 * std::max(1.0, std::abs(y)));
      }
    }
  }
}

TEST(Invariants, NineLevelReconstructionOfGaussian) {
  Rng rng(13);
  const auto levels = decile_levels();
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianDist g(rng.normal(0, 3), rng.uniform(0.2, 5.0));
    const auto rebuilt = reconstruct(featurize(g, levels), levels);
    const double lo = quantile_at(g, 0.1), hi = quantile_at(g, 0.9);
    double worst = 0.0;
    for (int k = 0; k <= 2000; ++k) {
      const double y = lo + (hi - lo) * k / 2000.0;
      worst = std::max(worst, std::abs(cdf_at(rebuilt, y) - oracle::normal_cdf((y - g.mu()) / g.sigma())));
    }
    EXPECT_LE(worst, 0.02);
  }
}

TEST(Invariants, QuantileGridDensityIntegratesToOne) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = random_grid(rng, 2 + rng.uniform_index(12));
    // Midpoint rule on each affine piece of the CDF.
    std::vector<double> knots = {q.lower_end(), q.upper_end()};
    knots.insert(knots.end(), q.values().begin(), q.values().end());
    std::sort(knots.begin(), knots.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      const double width = knots[k + 1] - knots[k];
      if (width <= 0.0) continue;
      for (int j = 0; j < 100; ++j) total += density_at(q, knots[k] + (j + 0.5) * width / 100) * width / 100;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  const PredictiveDistribution g = GaussianDist(0.5, 1.5);
  EXPECT_NEAR(oracle::simpson([&](double y) { return density_at(g, y); }, -15.0, 16.0, 20000), 1.0, 1e-6);
}

TEST(Construction, InvariantsEnforced) {
  EXPECT_THROW(GaussianDist(0, 0), DomainError);
  EXPECT_THROW(GaussianDist(std::nan(""), 1), DomainError);
  EXPECT_THROW(CategoricalDist({1.0}), DomainError);
  EXPECT_THROW(CategoricalDist({0.5, 0.6}), DomainError);
  EXPECT_THROW(QuantileGridDist({0.5}, {1.0}), DomainError);
  EXPECT_THROW(QuantileGridDist({0.5, 0.4}, {1.0, 2.0}), DomainError);
  EXPECT_THROW(QuantileGridDist({0.4, 0.5}, {2.0, 1.0}), DomainError);
  const auto c = CategoricalDist::normalized({1.0, 3.0});
  EXPECT_DOUBLE_EQ(c.prob(1), 0.75);
  EXPECT_EQ(CategoricalDist({0.5, 0.5}).argmax(), 1u);
}

}  // namespace
}  // namespace calibrax
