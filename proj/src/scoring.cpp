#include "calibrax/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

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

std::size_t class_index(double y, std::size_t num_classes) {
  if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(num_classes)) {
    throw DomainError("class-valued loss: outcome is not a class index");
  }
  return static_cast<std::size_t>(y);
}

const CategoricalDist& as_categorical(const PredictiveDistribution& dist, const char* loss_name) {
  if (const auto* c = std::get_if<CategoricalDist>(&dist)) return *c;
  throw DomainError(std::string(loss_name) + " is defined for categorical forecasts only");
}

double crps_gaussian(const GaussianDist& g, double y) {
  const double z = (y - g.mu()) / g.sigma();
  return g.sigma() *
         (z * (2.0 * normal::cdf(z) - 1.0) + 2.0 * normal::pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

// The forecast CDF is affine between consecutive breakpoints and the outcome
// step is constant there, so the squared residual is a quadratic on each
// piece; two-point Gauss-Legendre integrates it exactly.
double crps_quantile_grid(const QuantileGridDist& q, double y) {
  std::vector<double> knots;
  knots.reserve(q.size() + 3);
  knots.push_back(q.lower_end());
  knots.insert(knots.end(), q.values().begin(), q.values().end());
  knots.push_back(q.upper_end());
  knots.push_back(y);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  const double offset = 0.5 / std::numbers::sqrt3;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = knots[k];
    const double hi = knots[k + 1];
    const double width = hi - lo;
    const double mid = 0.5 * (lo + hi);
    const double step = lo >= y ? 1.0 : 0.0;
    const double g1 = cdf_at(q, mid - offset * width) - step;
    const double g2 = cdf_at(q, mid + offset * width) - step;
    total += 0.5 * width * (g1 * g1 + g2 * g2);
  }
  if (!std::isfinite(total)) throw NumericError("crps: integration produced a non-finite value");
  return total;
}

double crps_categorical(const CategoricalDist& c, double y) {
  const std::size_t label = class_index(y, c.num_classes());
  double cumulative = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < c.num_classes(); ++k) {
    cumulative += c.prob(k);
    const double step = k >= label ? 1.0 : 0.0;
    total += (cumulative - step) * (cumulative - step);
  }
  return total;
}

double entropy_term(double q) { return q > 0.0 ? -q * std::log(q) : 0.0; }

}  // namespace

void validate(const LossSpec& spec) {
  std::visit(Overloaded{
                 [](const loss::Check& c) {
                   if (!(c.tau > 0.0 && c.tau < 1.0)) throw DomainError("check loss: tau must lie in (0, 1)");
                 },
                 [](const loss::PinballAvg& p) { validate_levels(p.levels); },
                 [](const auto&) {},
             },
             spec);
}

std::string name_of(const LossSpec& spec) {
  return std::visit(Overloaded{
                        [](const loss::Log&) -> std::string { return "log"; },
                        [](const loss::Crps&) -> std::string { return "crps"; },
                        [](const loss::Check& c) -> std::string { return "check(" + std::to_string(c.tau) + ")"; },
                        [](const loss::PinballAvg&) -> std::string { return "pinball_avg"; },
                        [](const loss::Brier&) -> std::string { return "brier"; },
                        [](const loss::Misclassification&) -> std::string { return "misclassification"; },
                    },
                    spec);
}

double log_loss(const PredictiveDistribution& dist, double y) {
  return -std::log(std::max(density_at(dist, y), kProbFloor));
}

double crps(const PredictiveDistribution& dist, double y) {
  if (!std::isfinite(y)) throw DomainError("crps: non-finite outcome");
  return std::visit(Overloaded{
                        [y](const GaussianDist& g) { return crps_gaussian(g, y); },
                        [y](const QuantileGridDist& q) { return crps_quantile_grid(q, y); },
                        [y](const CategoricalDist& c) { return crps_categorical(c, y); },
                    },
                    dist);
}

double check_score(double tau, double y, double f) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("check_score: tau must lie in (0, 1)");
  return y >= f ? tau * (y - f) : (1.0 - tau) * (f - y);
}

double pinball_avg(const PredictiveDistribution& dist, double y, std::span<const double> levels) {
  validate_levels(levels);
  double total = 0.0;
  for (double tau : levels) total += check_score(tau, y, quantile_at(dist, tau));
  return total / static_cast<double>(levels.size());
}

double brier(const CategoricalDist& dist, std::size_t y) {
  if (y >= dist.num_classes()) throw DomainError("brier: class index out of range");
  double total = 0.0;
  for (std::size_t k = 0; k < dist.num_classes(); ++k) {
    const double diff = dist.prob(k) - (k == y ? 1.0 : 0.0);
    total += diff * diff;
  }
  return total;
}

int misclassification_loss(double p, int y) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("misclassification_loss: p outside [0, 1]");
  if (y != 0 && y != 1) throw DomainError("misclassification_loss: y must be binary");
  const int decision = p >= 0.5 ? 1 : 0;
  return decision == y ? 0 : 1;
}

double score(const LossSpec& spec, const PredictiveDistribution& dist, double y) {
  return std::visit(
      Overloaded{
          [&](const loss::Log&) { return log_loss(dist, y); },
          [&](const loss::Crps&) { return crps(dist, y); },
          [&](const loss::Check& c) { return check_score(c.tau, y, quantile_at(dist, c.tau)); },
          [&](const loss::PinballAvg& p) { return pinball_avg(dist, y, p.levels); },
          [&](const loss::Brier&) {
            const auto& c = as_categorical(dist, "brier");
            return brier(c, class_index(y, c.num_classes()));
          },
          [&](const loss::Misclassification&) {
            const auto& c = as_categorical(dist, "misclassification");
            const std::size_t label = class_index(y, c.num_classes());
            if (c.num_classes() == 2) {
              return static_cast<double>(misclassification_loss(c.prob(1), static_cast<int>(label)));
            }
            return c.argmax() == label ? 0.0 : 1.0;
          },
      },
      spec);
}

McEstimate expected_score(const LossSpec& spec, const PredictiveDistribution& forecast,
                          const PredictiveDistribution& truth, std::size_t n_mc, Rng& rng) {
  if (n_mc < 100) throw DomainError("expected_score: n_mc must be at least 100");
  validate(spec);
  // Quantile losses only need the forecast quantiles once.
  std::vector<double> levels;
  if (const auto* p = std::get_if<loss::PinballAvg>(&spec)) levels = p->levels;
  if (const auto* c = std::get_if<loss::Check>(&spec)) levels = {c->tau};
  std::vector<double> quantiles(levels.size());
  for (std::size_t j = 0; j < levels.size(); ++j) quantiles[j] = quantile_at(forecast, levels[j]);
  auto evaluate = [&](double y) {
    if (levels.empty()) return score(spec, forecast, y);
    double total = 0.0;
    for (std::size_t j = 0; j < levels.size(); ++j) total += check_score(levels[j], y, quantiles[j]);
    return total / static_cast<double>(levels.size());
  };

  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double value = evaluate(sample_one(truth, rng));
    const double delta = value - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (value - mean);
  }
  const double variance = m2 / static_cast<double>(n_mc - 1);
  return {mean, std::sqrt(variance / static_cast<double>(n_mc))};
}

ScoreReport decompose_binned(std::span<const CategoricalDist> forecasts,
                             std::span<const std::size_t> outcomes) {
  if (forecasts.size() != outcomes.size()) {
    throw DomainError("decompose_binned: forecasts and outcomes differ in length");
  }
  if (forecasts.empty()) throw DomainError("decompose_binned: empty input");
  const std::size_t num_classes = forecasts.front().num_classes();

  struct Group {
    std::vector<double> forecast;
    std::vector<double> counts;
    double n = 0.0;
  };
  std::map<std::vector<double>, Group> groups;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto probs = forecasts[i].probs();
    if (probs.size() != num_classes) throw DomainError("decompose_binned: inconsistent class count");
    if (outcomes[i] >= num_classes) throw DomainError("decompose_binned: outcome out of range");
    std::vector<double> key(probs.begin(), probs.end());
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      it->second.forecast = key;
      it->second.counts.assign(num_classes, 0.0);
    }
    it->second.counts[outcomes[i]] += 1.0;
    it->second.n += 1.0;
    loss_sum += -std::log(std::max(probs[outcomes[i]], kProbFloor));
  }

  const double n = static_cast<double>(forecasts.size());
  ScoreReport report;
  report.n = forecasts.size();
  report.bin_count = groups.size();
  report.mean_loss = loss_sum / n;
  for (const auto& [key, group] : groups) {
    const double weight = group.n / n;
    double kl = 0.0;
    double entropy = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double q = group.counts[k] / group.n;
      if (q > 0.0) kl += q * (std::log(q) - std::log(std::max(group.forecast[k], kProbFloor)));
      entropy += entropy_term(q);
    }
    report.calibration_term += weight * kl;
    report.refinement_term += weight * entropy;
  }
  // KL is nonnegative; clear rounding residue.
  report.calibration_term = std::max(report.calibration_term, 0.0);
  return report;
}

ScoreReport decompose_binned(std::span<const CategoricalDist> forecasts,
                             std::span<const std::size_t> outcomes, std::size_t bins) {
  if (bins == 0) throw DomainError("decompose_binned: bins must be positive");
  if (forecasts.empty()) throw DomainError("decompose_binned: empty input");
  const std::size_t num_classes = forecasts.front().num_classes();

  std::map<std::vector<std::size_t>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto probs = forecasts[i].probs();
    if (probs.size() != num_classes) throw DomainError("decompose_binned: inconsistent class count");
    std::vector<std::size_t> key(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      key[k] = std::min(static_cast<std::size_t>(probs[k] * static_cast<double>(bins)), bins - 1);
    }
    cells[key].push_back(i);
  }

  std::vector<CategoricalDist> snapped(forecasts.begin(), forecasts.end());
  for (const auto& [key, members] : cells) {
    std::vector<double> mean(num_classes, 0.0);
    for (std::size_t i : members) {
      for (std::size_t k = 0; k < num_classes; ++k) mean[k] += forecasts[i].prob(k);
    }
    const auto representative = CategoricalDist::normalized(std::move(mean));
    for (std::size_t i : members) snapped[i] = representative;
  }
  return decompose_binned(snapped, outcomes);
}

}  // namespace calibrax
