#include <algorithm>
#include <cmath>

#include "calibrax/bench.hpp"
#include "calibrax/error.hpp"
#include "calibrax/recalibrate.hpp"

namespace calibrax::bench {

std::vector<double> isotonic_fit(std::span<const double> values) {
  // Blocks of (mean, weight); merge while the last two violate monotonicity.
  std::vector<double> means;
  std::vector<std::size_t> weights;
  for (double v : values) {
    means.push_back(v);
    weights.push_back(1);
    while (means.size() > 1 && means[means.size() - 2] > means.back()) {
      const std::size_t k = means.size() - 1;
      const double w = static_cast<double>(weights[k - 1] + weights[k]);
      means[k - 1] = (means[k - 1] * weights[k - 1] + means[k] * weights[k]) / w;
      weights[k - 1] += weights[k];
      means.pop_back();
      weights.pop_back();
    }
  }
  std::vector<double> fitted;
  fitted.reserve(values.size());
  for (std::size_t b = 0; b < means.size(); ++b) fitted.insert(fitted.end(), weights[b], means[b]);
  return fitted;
}

double IsotonicRecalibrator::map(double u) const {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const auto it = std::upper_bound(pit.begin(), pit.end(), u);
  const auto k = static_cast<std::size_t>(it - pit.begin());
  const double t = (u - pit[k - 1]) / (pit[k] - pit[k - 1]);
  return fitted[k - 1] + t * (fitted[k] - fitted[k - 1]);
}

double IsotonicRecalibrator::inverse(double tau) const {
  if (tau <= 0.0) return 0.0;
  if (tau >= 1.0) return 1.0;
  // First knot reaching tau; interpolate on the rising segment before it.
  const auto it = std::lower_bound(fitted.begin(), fitted.end(), tau);
  const auto k = static_cast<std::size_t>(it - fitted.begin());
  if (k == 0) return pit.front();
  const double rise = fitted[k] - fitted[k - 1];
  const double t = rise > 0.0 ? (tau - fitted[k - 1]) / rise : 1.0;
  return pit[k - 1] + t * (pit[k] - pit[k - 1]);
}

PredictiveDistribution IsotonicRecalibrator::apply(const PredictiveDistribution& base) const {
  if (std::holds_alternative<CategoricalDist>(base)) {
    throw DomainError("isotonic recalibration needs a continuous forecast");
  }
  constexpr double kEdge = 1e-9;
  std::vector<double> values(out_levels.size());
  for (std::size_t j = 0; j < out_levels.size(); ++j) {
    values[j] = quantile_at(base, std::clamp(inverse(out_levels[j]), kEdge, 1.0 - kEdge));
  }
  for (std::size_t j = 1; j < values.size(); ++j) values[j] = std::max(values[j], values[j - 1]);
  return QuantileGridDist(out_levels, std::move(values));
}

IsotonicRecalibrator fit_isotonic_recalibrator(std::span<const PredictiveDistribution> base,
                                               std::span<const double> ys) {
  if (base.size() != ys.size()) throw DomainError("fit_isotonic_recalibrator: length mismatch");
  if (base.empty()) throw DomainError("fit_isotonic_recalibrator: empty recalibration set");
  const std::size_t n = base.size();
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = cdf_at(base[i], ys[i]);
  std::sort(u.begin(), u.end());

  // Empirical level of each sorted PIT value, ties sharing the highest rank.
  std::vector<double> level(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && u[j] == u[i]) ++j;
    std::fill(level.begin() + i, level.begin() + j, static_cast<double>(j) / n);
    i = j;
  }
  const auto fitted = isotonic_fit(level);

  IsotonicRecalibrator r;
  r.out_levels = default_out_levels();
  r.pit.push_back(0.0);
  r.fitted.push_back(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] <= r.pit.back() || u[i] >= 1.0) continue;
    r.pit.push_back(u[i]);
    r.fitted.push_back(std::clamp(fitted[i], r.fitted.back(), 1.0));
  }
  r.pit.push_back(1.0);
  r.fitted.push_back(1.0);
  return r;
}

}  // namespace calibrax::bench
