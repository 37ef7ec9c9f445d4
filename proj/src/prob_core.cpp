#include "calibrax/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "calibrax/error.hpp"
#include "calibrax/normal.hpp"

namespace calibrax {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_finite(double y, const char* what) {
  if (!std::isfinite(y)) throw DomainError(std::string(what) + ": non-finite argument");
}

void require_open_unit(double tau, const char* what) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError(std::string(what) + ": probability level must lie in (0, 1)");
  }
}

}  // namespace

GaussianDist::GaussianDist(double mu, double sigma) : mu_(mu), sigma_(sigma) {
  if (!std::isfinite(mu)) throw DomainError("GaussianDist: mu must be finite");
  if (!std::isfinite(sigma) || !(sigma > 0.0)) {
    throw DomainError("GaussianDist: sigma must be finite and positive");
  }
}

CategoricalDist::CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw DomainError("CategoricalDist: need at least two classes");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("CategoricalDist: probability outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("CategoricalDist: probabilities must sum to 1");
}

CategoricalDist CategoricalDist::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double& w : weights) {
    if (!std::isfinite(w)) throw DomainError("CategoricalDist::normalized: non-finite weight");
    w = std::max(w, 0.0);
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("CategoricalDist::normalized: weights sum to zero");
  for (double& w : weights) w /= total;
  // Push the residual rounding error into the largest entry.
  const double residual = 1.0 - std::accumulate(weights.begin(), weights.end(), 0.0);
  auto largest = std::max_element(weights.begin(), weights.end());
  *largest = std::clamp(*largest + residual, 0.0, 1.0);
  return CategoricalDist(std::move(weights));
}

std::size_t CategoricalDist::argmax() const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs_.size(); ++k) {
    if (probs_[k] >= probs_[best]) best = k;
  }
  return best;
}

QuantileGridDist::QuantileGridDist(std::vector<double> levels, std::vector<double> values)
    : levels_(std::move(levels)), values_(std::move(values)) {
  if (levels_.size() != values_.size()) {
    throw DomainError("QuantileGridDist: levels and values differ in length");
  }
  if (levels_.size() < 2) throw DomainError("QuantileGridDist: need at least two grid points");
  validate_levels(levels_);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw DomainError("QuantileGridDist: non-finite value");
    if (i > 0 && values_[i] < values_[i - 1]) {
      throw DomainError("QuantileGridDist: values must be nondecreasing");
    }
  }
}

double QuantileGridDist::lower_end() const {
  const double v0 = values_[0], v1 = values_[1];
  if (v1 == v0) return v0;
  return v0 - levels_[0] * (v1 - v0) / (levels_[1] - levels_[0]);
}

double QuantileGridDist::upper_end() const {
  const std::size_t d = values_.size();
  const double vl = values_[d - 1], vp = values_[d - 2];
  if (vl == vp) return vl;
  return vl + (1.0 - levels_[d - 1]) * (vl - vp) / (levels_[d - 1] - levels_[d - 2]);
}

std::string_view to_string(FeaturizationKind kind) {
  switch (kind) {
    case FeaturizationKind::kGaussianParams:
      return "gaussian-params";
    case FeaturizationKind::kQuantileGrid:
      return "quantile-grid";
    case FeaturizationKind::kClassProbs:
      return "class-probs";
  }
  return "unknown";
}

FeaturizationKind featurization_kind_from_string(std::string_view name) {
  if (name == "gaussian-params") return FeaturizationKind::kGaussianParams;
  if (name == "quantile-grid") return FeaturizationKind::kQuantileGrid;
  if (name == "class-probs") return FeaturizationKind::kClassProbs;
  throw DomainError("unknown featurization kind: " + std::string(name));
}

void Featurization::validate(std::size_t expected_dim) const {
  switch (kind) {
    case FeaturizationKind::kGaussianParams:
      if (params.size() != 2) throw DomainError("gaussian-params featurization must have 2 entries");
      break;
    case FeaturizationKind::kClassProbs:
      if (params.size() < 2) throw DomainError("class-probs featurization needs K >= 2");
      [[fallthrough]];
    case FeaturizationKind::kQuantileGrid:
      if (params.size() != expected_dim) {
        throw DomainError("featurization dimension " + std::to_string(params.size()) +
                          " does not match expected " + std::to_string(expected_dim));
      }
      break;
  }
  for (double v : params) {
    if (!std::isfinite(v)) throw DomainError("featurization contains non-finite entries");
  }
}

void validate_levels(std::span<const double> levels) {
  if (levels.empty()) throw DomainError("level vector is empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw DomainError("levels must lie in (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw DomainError("levels must be strictly increasing");
    }
  }
}

std::vector<double> decile_levels() { return uniform_levels(10); }

std::vector<double> uniform_levels(std::size_t n) {
  if (n < 2) throw DomainError("uniform_levels: n must be at least 2");
  std::vector<double> levels(n - 1);
  for (std::size_t k = 1; k < n; ++k) levels[k - 1] = static_cast<double>(k) / static_cast<double>(n);
  return levels;
}

// ---- Gaussian ----

double cdf_at(const GaussianDist& dist, double y) {
  require_finite(y, "cdf_at");
  return normal::cdf((y - dist.mu()) / dist.sigma());
}

double quantile_at(const GaussianDist& dist, double tau) {
  require_open_unit(tau, "quantile_at");
  return dist.mu() + dist.sigma() * normal::quantile(tau);
}

double density_at(const GaussianDist& dist, double y) {
  require_finite(y, "density_at");
  return normal::pdf((y - dist.mu()) / dist.sigma()) / dist.sigma();
}

// ---- Categorical ----

double cdf_at(const CategoricalDist& dist, double y) {
  require_finite(y, "cdf_at");
  if (y < 0.0) return 0.0;
  const auto probs = dist.probs();
  const double top = std::floor(y);
  if (top >= static_cast<double>(probs.size() - 1)) return 1.0;
  double total = 0.0;
  for (std::size_t k = 0; k <= static_cast<std::size_t>(top); ++k) total += probs[k];
  return std::min(total, 1.0);
}

double quantile_at(const CategoricalDist& dist, double tau) {
  require_open_unit(tau, "quantile_at");
  const auto probs = dist.probs();
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    total += probs[k];
    if (total >= tau) return static_cast<double>(k);
  }
  return static_cast<double>(probs.size() - 1);
}

double density_at(const CategoricalDist& dist, double y) {
  require_finite(y, "density_at");
  if (y < 0.0 || y != std::floor(y) || y >= static_cast<double>(dist.num_classes())) return 0.0;
  return dist.prob(static_cast<std::size_t>(y));
}

// ---- Quantile grid ----

double cdf_at(const QuantileGridDist& dist, double y) {
  require_finite(y, "cdf_at");
  const auto a = dist.levels();
  const auto v = dist.values();
  const std::size_t d = v.size();
  if (y < v[0]) {
    if (v[1] == v[0]) return 0.0;
    const double slope = (a[1] - a[0]) / (v[1] - v[0]);
    return std::max(0.0, a[0] - slope * (v[0] - y));
  }
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), y) - v.begin()) - 1;
  if (i == d - 1) {
    if (v[d - 1] == v[d - 2]) return 1.0;
    const double slope = (a[d - 1] - a[d - 2]) / (v[d - 1] - v[d - 2]);
    return std::min(1.0, a[d - 1] + slope * (y - v[d - 1]));
  }
  return a[i] + (a[i + 1] - a[i]) * (y - v[i]) / (v[i + 1] - v[i]);
}

double quantile_at(const QuantileGridDist& dist, double tau) {
  require_open_unit(tau, "quantile_at");
  const auto a = dist.levels();
  const auto v = dist.values();
  const std::size_t d = v.size();
  if (tau < a[0]) {
    if (v[1] == v[0]) return v[0];
    return v[0] - (a[0] - tau) * (v[1] - v[0]) / (a[1] - a[0]);
  }
  if (tau > a[d - 1]) {
    if (v[d - 1] == v[d - 2]) return v[d - 1];
    return v[d - 1] + (tau - a[d - 1]) * (v[d - 1] - v[d - 2]) / (a[d - 1] - a[d - 2]);
  }
  const std::size_t k = static_cast<std::size_t>(std::lower_bound(a.begin(), a.end(), tau) - a.begin());
  if (a[k] == tau) return v[k];
  return v[k - 1] + (tau - a[k - 1]) * (v[k] - v[k - 1]) / (a[k] - a[k - 1]);
}

double density_at(const QuantileGridDist& dist, double y) {
  require_finite(y, "density_at");
  const auto a = dist.levels();
  const auto v = dist.values();
  const std::size_t d = v.size();
  if (y < v[0]) {
    if (v[1] == v[0] || y < dist.lower_end()) return 0.0;
    return (a[1] - a[0]) / (v[1] - v[0]);
  }
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), y) - v.begin()) - 1;
  if (y == v[i] && i > 0 && v[i - 1] == v[i]) return kDensityCap;
  if (i == d - 1) {
    if (v[d - 1] == v[d - 2] || y >= dist.upper_end()) return 0.0;
    return (a[d - 1] - a[d - 2]) / (v[d - 1] - v[d - 2]);
  }
  return (a[i + 1] - a[i]) / (v[i + 1] - v[i]);
}

// ---- Variant dispatch ----

double cdf_at(const PredictiveDistribution& dist, double y) {
  return std::visit([y](const auto& d) { return cdf_at(d, y); }, dist);
}

double quantile_at(const PredictiveDistribution& dist, double tau) {
  return std::visit([tau](const auto& d) { return quantile_at(d, tau); }, dist);
}

double density_at(const PredictiveDistribution& dist, double y) {
  return std::visit([y](const auto& d) { return density_at(d, y); }, dist);
}

Featurization featurize(const PredictiveDistribution& dist, std::span<const double> levels) {
  validate_levels(levels);
  Featurization phi{std::vector<double>(levels.size()), FeaturizationKind::kQuantileGrid};
  for (std::size_t i = 0; i < levels.size(); ++i) phi.params[i] = quantile_at(dist, levels[i]);
  return phi;
}

Featurization natural_params(const PredictiveDistribution& dist) {
  return std::visit(
      Overloaded{
          [](const GaussianDist& g) {
            return Featurization{{g.mu(), g.sigma()}, FeaturizationKind::kGaussianParams};
          },
          [](const CategoricalDist& c) {
            return Featurization{{c.probs().begin(), c.probs().end()}, FeaturizationKind::kClassProbs};
          },
          [](const QuantileGridDist& q) {
            return Featurization{{q.values().begin(), q.values().end()}, FeaturizationKind::kQuantileGrid};
          },
      },
      dist);
}

QuantileGridDist reconstruct(const Featurization& phi, std::span<const double> levels) {
  if (phi.kind != FeaturizationKind::kQuantileGrid) {
    throw DomainError("reconstruct: featurization is not a quantile grid");
  }
  phi.validate(levels.size());
  return QuantileGridDist({levels.begin(), levels.end()}, phi.params);
}

double sample_one(const PredictiveDistribution& dist, Rng& rng) {
  return quantile_at(dist, rng.uniform());
}

std::vector<double> sample(const PredictiveDistribution& dist, Rng& rng, std::size_t n) {
  if (n == 0) throw DomainError("sample: n must be at least 1");
  std::vector<double> out(n);
  for (double& x : out) x = sample_one(dist, rng);
  return out;
}

PredictiveDistribution scale(const PredictiveDistribution& dist, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("scale: factor must be positive");
  return std::visit(
      Overloaded{
          [c](const GaussianDist& g) -> PredictiveDistribution {
            return GaussianDist(c * g.mu(), c * g.sigma());
          },
          [](const CategoricalDist&) -> PredictiveDistribution {
            throw DomainError("scale: categorical distributions have no outcome scale");
          },
          [c](const QuantileGridDist& q) -> PredictiveDistribution {
            std::vector<double> values(q.values().begin(), q.values().end());
            for (double& v : values) v *= c;
            return QuantileGridDist({q.levels().begin(), q.levels().end()}, std::move(values));
          },
      },
      dist);
}

double median(const PredictiveDistribution& dist) { return quantile_at(dist, 0.5); }

}  // namespace calibrax
