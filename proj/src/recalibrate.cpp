#include "calibrax/recalibrate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>

#include "calibrax/normal.hpp"
#include "calibrax/scoring.hpp"

namespace calibrax {
namespace {

constexpr double kTauScale = 3.4641016151377544;  // sqrt(12): unit variance for tau ~ U(0, 1)

double tau_input(double tau) { return (tau - 0.5) * kTauScale; }

double logit(double p) {
  const double q = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  return std::log(q) - std::log1p(-q);
}

double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

const CategoricalDist& require_categorical(const PredictiveDistribution& base, const char* who) {
  const auto* c = std::get_if<CategoricalDist>(&base);
  if (c == nullptr) throw DomainError(std::string(who) + ": expects a categorical forecast");
  return *c;
}

double binary_probability(const PredictiveDistribution& base, const char* who) {
  const auto& c = require_categorical(base, who);
  if (c.num_classes() != 2) throw DomainError(std::string(who) + ": expects a binary forecast");
  return c.prob(1);
}

}  // namespace

std::vector<double> default_out_levels() { return uniform_levels(20); }

double QuantileRecalibrator::base_quantile(double tau, std::span<const double> phi) const {
  switch (kind) {
    case FeaturizationKind::kQuantileGrid:
      return quantile_at(QuantileGridDist(input_levels, std::vector<double>(phi.begin(), phi.end())), tau);
    case FeaturizationKind::kGaussianParams:
      return phi[0] + phi[1] * normal::quantile(tau);
    case FeaturizationKind::kClassProbs:
      break;
  }
  throw DomainError("QuantileRecalibrator: class-probability featurizations have no quantiles");
}

double QuantileRecalibrator::evaluate(double tau, std::span<const double> phi) const {
  std::vector<double> input(phi.size() + 2);
  input[0] = tau_input(tau);
  input[1] = (base_quantile(tau, phi) - y_mean) / y_scale;
  phi_scale.apply(phi, std::span<double>(input).subspan(2));
  return y_mean + y_scale * net.forward(input)[0];
}

Featurization QuantileRecalibrator::featurize_base(const PredictiveDistribution& base) const {
  Featurization phi = kind == FeaturizationKind::kQuantileGrid ? featurize(base, input_levels) : natural_params(base);
  if (phi.kind != kind) throw DomainError("QuantileRecalibrator: base forecast has the wrong featurization kind");
  return phi;
}

PredictiveDistribution QuantileRecalibrator::apply(const PredictiveDistribution& base) const {
  return apply_quantile_recalibrator(*this, featurize_base(base), out_levels);
}

QuantileRecalibrator fit_quantile_recalibrator(std::span<const Featurization> phis, std::span<const double> ys,
                                               const TrainConfig& config, std::span<const double> input_levels,
                                               TrainingLog* log) {
  config.validate();
  if (phis.size() != ys.size()) throw DomainError("fit_quantile_recalibrator: phis and ys differ in length");
  if (phis.size() < 50) throw DomainError("fit_quantile_recalibrator: need at least 50 examples");
  const FeaturizationKind kind = phis.front().kind;
  if (kind == FeaturizationKind::kQuantileGrid) {
    validate_levels(input_levels);
  } else if (!input_levels.empty()) {
    throw DomainError("fit_quantile_recalibrator: input_levels apply to quantile-grid featurizations only");
  }
  const std::size_t dim = phis.front().params.size();
  Matrix phi_matrix(phis.size(), dim);
  for (std::size_t i = 0; i < phis.size(); ++i) {
    if (phis[i].kind != kind) throw DomainError("fit_quantile_recalibrator: mixed featurization kinds");
    phis[i].validate(kind == FeaturizationKind::kQuantileGrid ? input_levels.size() : dim);
    std::copy(phis[i].params.begin(), phis[i].params.end(), phi_matrix.row(i).begin());
  }

  QuantileRecalibrator r;
  r.kind = kind;
  r.input_levels.assign(input_levels.begin(), input_levels.end());
  r.out_levels = default_out_levels();
  r.config = config;
  r.phi_scale = Standardizer::fit(phi_matrix);
  const double n = static_cast<double>(ys.size());
  const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  const double sd = std::sqrt(var / n);
  r.y_mean = mean;
  r.y_scale = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;

  // Inputs: standardized tau, the base forecast's own quantile at tau (in
  // target units), and the standardized featurization. The output layer starts
  // as a pure skip from the base quantile, i.e. at the identity recalibration.
  r.net = NeuralNet({dim + 2, kRecalibratorHidden, 1, true});
  Rng init_rng(config.seed ^ 0x5bd1e995ULL);
  r.net.init(init_rng);
  const auto& out_layer = r.net.layers().back();
  std::fill_n(r.net.params().begin() + static_cast<std::ptrdiff_t>(out_layer.weights), out_layer.in, 0.0);
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    // Every quantile of a constant target is the constant itself.
    std::fill(r.net.params().begin(), r.net.params().end(), 0.0);
    if (log != nullptr) *log = {};
    return r;
  }
  r.net.output_weight(0, 1) = 1.0;

  const std::size_t width = dim + 2;
  std::vector<double> inputs(phis.size() * width);
  std::vector<double> targets(ys.size());
  std::vector<QuantileGridDist> grids;
  if (kind == FeaturizationKind::kQuantileGrid) grids.reserve(phis.size());
  for (std::size_t i = 0; i < phis.size(); ++i) {
    r.phi_scale.apply(phi_matrix.row(i), std::span<double>(inputs).subspan(i * width + 2, dim));
    targets[i] = (ys[i] - r.y_mean) / r.y_scale;
    if (kind == FeaturizationKind::kQuantileGrid) grids.push_back(reconstruct(phis[i], input_levels));
  }
  auto base_quantile = [&](std::size_t i, double tau) {
    if (kind == FeaturizationKind::kQuantileGrid) return quantile_at(grids[i], tau);
    return r.base_quantile(tau, phis[i].params);
  };

  // Monte-Carlo levels: tau_samples_per_example uniform draws per example, plus
  // one decile per example per epoch, cycling so every decile recurs.
  Rng tau_rng(config.seed ^ 0x2545F4914F6CDD1DULL);
  NeuralNet::Tape tape;
  std::vector<double> x(width);
  std::array<double, 1> out{}, grad_out{};
  const std::size_t per_example = config.tau_samples_per_example + 1;
  const auto trained = train_sgd(
      r.net, phis.size(), config, [&](std::span<const std::size_t> batch, std::size_t epoch, std::span<double> grad) {
        const double w = 1.0 / static_cast<double>(batch.size() * per_example);
        double total = 0.0;
        for (std::size_t i : batch) {
          std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(i * width), width, x.begin());
          for (std::size_t s = 0; s < per_example; ++s) {
            const double tau = s < config.tau_samples_per_example
                                   ? tau_rng.uniform()
                                   : static_cast<double>((epoch + i) % 9 + 1) / 10.0;
            x[0] = tau_input(tau);
            x[1] = (base_quantile(i, tau) - r.y_mean) / r.y_scale;
            r.net.forward(x, tape, out);
            const double residual = targets[i] - out[0];
            total += residual >= 0.0 ? tau * residual : (tau - 1.0) * residual;
            grad_out[0] = (residual >= 0.0 ? -tau : 1.0 - tau) * w;
            r.net.backward(tape, grad_out, grad);
          }
        }
        return total * w;
      });
  if (log != nullptr) *log = trained;
  return r;
}

QuantileGridDist apply_quantile_recalibrator(const QuantileRecalibrator& r, const Featurization& phi,
                                             std::span<const double> out_levels) {
  validate_levels(out_levels);
  if (phi.kind != r.kind || phi.params.size() + 2 != r.net.arch().input_dim) {
    throw DomainError("apply_quantile_recalibrator: featurization does not match the recalibrator");
  }
  std::vector<double> input(phi.params.size() + 2);
  r.phi_scale.apply(phi.params, std::span<double>(input).subspan(2));
  NeuralNet::Tape tape;
  std::array<double, 1> out{};
  std::vector<double> values(out_levels.size());
  std::optional<QuantileGridDist> grid;
  if (r.kind == FeaturizationKind::kQuantileGrid) grid = reconstruct(phi, r.input_levels);
  for (std::size_t j = 0; j < out_levels.size(); ++j) {
    const double base = grid ? quantile_at(*grid, out_levels[j]) : r.base_quantile(out_levels[j], phi.params);
    input[0] = tau_input(out_levels[j]);
    input[1] = (base - r.y_mean) / r.y_scale;
    r.net.forward(input, tape, out);
    values[j] = r.y_mean + r.y_scale * out[0];
  }
  // Rearrangement: sorting the values never increases the check loss.
  std::sort(values.begin(), values.end());
  return QuantileGridDist(std::vector<double>(out_levels.begin(), out_levels.end()), std::move(values));
}

double KdeRecalibrator::apply(double score) const {
  if (!std::isfinite(score)) throw DomainError("KdeRecalibrator: non-finite score");
  if (constant_fallback) return base_rate;
  // Gaussian weights beyond 8 bandwidths are below 1e-14 of the peak.
  const double reach = 8.0 * bandwidth;
  const auto lo = std::lower_bound(scores.begin(), scores.end(), score - reach);
  const auto hi = std::upper_bound(lo, scores.end(), score + reach);
  double weight = 0.0;
  double hits = 0.0;
  const double inv = 1.0 / bandwidth;
  for (auto it = lo; it != hi; ++it) {
    const double u = (*it - score) * inv;
    const double k = std::exp(-0.5 * u * u);
    weight += k;
    hits += k * labels[static_cast<std::size_t>(it - scores.begin())];
  }
  const double p = weight > 0.0 ? hits / weight : base_rate;
  return std::clamp(p, clip, 1.0 - clip);
}

PredictiveDistribution KdeRecalibrator::apply(const PredictiveDistribution& base) const {
  const double p = apply(binary_probability(base, "KdeRecalibrator"));
  return CategoricalDist({1.0 - p, p});
}

KdeRecalibrator fit_kde_recalibrator(std::span<const double> scores, std::span<const int> labels, BandwidthRule) {
  if (scores.size() != labels.size()) throw DomainError("fit_kde_recalibrator: scores and labels differ in length");
  if (scores.size() < 20) throw DomainError("fit_kde_recalibrator: need at least 20 examples");
  const std::size_t t = scores.size();
  std::vector<std::size_t> order(t);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < t; ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw DomainError("fit_kde_recalibrator: score outside [0, 1]");
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("fit_kde_recalibrator: labels must be 0 or 1");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  KdeRecalibrator r;
  r.clip = 1.0 / (2.0 * static_cast<double>(t));
  double mean = 0.0;
  double positives = 0.0;
  for (std::size_t i : order) {
    r.scores.push_back(scores[i]);
    r.labels.push_back(static_cast<double>(labels[i]));
    mean += scores[i];
    positives += labels[i];
  }
  mean /= static_cast<double>(t);
  double var = 0.0;
  for (double s : r.scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(t - 1));
  r.base_rate = std::clamp(positives / static_cast<double>(t), r.clip, 1.0 - r.clip);
  if (r.scores.front() == r.scores.back()) {
    r.constant_fallback = true;
    r.bandwidth = 1.0;
    return r;
  }
  r.bandwidth = 1.06 * sd * std::pow(static_cast<double>(t), -0.2);
  return r;
}

CategoricalDist SimplexRecalibrator::apply(const CategoricalDist& probs) const {
  const std::size_t k = probs.num_classes();
  if (k != net.arch().output_dim) throw DomainError("SimplexRecalibrator: class count mismatch");
  std::vector<double> logp(k), input(k);
  for (std::size_t j = 0; j < k; ++j) logp[j] = std::log(std::max(probs.prob(j), kProbFloor));
  input_scale.apply(logp, input);
  return probabilities_from_logits(net.forward(input));
}

PredictiveDistribution SimplexRecalibrator::apply(const PredictiveDistribution& base) const {
  return apply(require_categorical(base, "SimplexRecalibrator"));
}

SimplexRecalibrator fit_simplex_recalibrator(std::span<const CategoricalDist> probs,
                                             std::span<const std::size_t> labels, const TrainConfig& config,
                                             TrainingLog* log) {
  if (probs.size() != labels.size()) throw DomainError("fit_simplex_recalibrator: length mismatch");
  if (probs.empty()) throw DomainError("fit_simplex_recalibrator: empty input");
  const std::size_t k = probs.front().num_classes();
  Matrix inputs(probs.size(), k);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].num_classes() != k) throw DomainError("fit_simplex_recalibrator: inconsistent class count");
    if (labels[i] >= k) throw DomainError("fit_simplex_recalibrator: label out of range");
    for (std::size_t j = 0; j < k; ++j) inputs(i, j) = std::log(std::max(probs[i].prob(j), kProbFloor));
  }
  SimplexRecalibrator r;
  r.input_scale = Standardizer::fit(inputs);
  for (std::size_t i = 0; i < inputs.rows(); ++i) r.input_scale.apply(inputs.row(i), inputs.row(i));

  r.net = NeuralNet({k, kRecalibratorHidden, k, true});
  Rng init_rng(config.seed ^ 0x5bd1e995ULL);
  r.net.init(init_rng);
  // Start at the identity: the output layer reads only the skip connection
  // from the input and undoes the standardization, so logits = log p.
  const auto& out_layer = r.net.layers().back();
  std::fill_n(r.net.params().begin() + static_cast<std::ptrdiff_t>(out_layer.weights), out_layer.in * out_layer.out,
              0.0);
  for (std::size_t j = 0; j < k; ++j) {
    r.net.output_weight(j, j) = r.input_scale.scale[j];
    r.net.output_bias(j) = r.input_scale.mean[j];
  }

  NeuralNet::Tape tape;
  std::vector<double> out(k), grad_out(k);
  const auto trained = train_sgd(r.net, probs.size(), config,
                                 [&](std::span<const std::size_t> batch, std::size_t, std::span<double> grad) {
                                   const double w = 1.0 / static_cast<double>(batch.size());
                                   double total = 0.0;
                                   for (std::size_t i : batch) {
                                     r.net.forward(inputs.row(i), tape, out);
                                     total += head::softmax_xent(out, labels[i], grad_out);
                                     for (double& g : grad_out) g *= w;
                                     r.net.backward(tape, grad_out, grad);
                                   }
                                   return total * w;
                                 });
  if (log != nullptr) *log = trained;
  return r;
}

double PlattScaler::apply(double score) const { return head::sigmoid(a * logit(score) + b); }

PredictiveDistribution PlattScaler::apply(const PredictiveDistribution& base) const {
  const double p = apply(binary_probability(base, "PlattScaler"));
  return CategoricalDist({1.0 - p, p});
}

PlattScaler fit_platt(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DomainError("fit_platt: scores and labels differ in length");
  if (scores.empty()) throw DomainError("fit_platt: empty input");
  std::vector<double> x(scores.size());
  double max0 = -INFINITY, min0 = INFINITY, max1 = -INFINITY, min1 = INFINITY;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw DomainError("fit_platt: score outside [0, 1]");
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("fit_platt: labels must be 0 or 1");
    x[i] = logit(scores[i]);
    if (labels[i] == 1) {
      max1 = std::max(max1, x[i]);
      min1 = std::min(min1, x[i]);
    } else {
      max0 = std::max(max0, x[i]);
      min0 = std::min(min0, x[i]);
    }
  }
  PlattScaler s;
  // One class, or a threshold that separates the classes: the likelihood has
  // no finite maximizer.
  s.fallback = !std::isfinite(max0) || !std::isfinite(max1) || max0 < min1 || max1 < min0;
  if (s.fallback) {
    std::cerr << "warning: fit_platt: one-class or separable data; using a ridge-penalized fit\n";
  }
  const double penalty = s.fallback ? kPlattFallbackPenalty : 0.0;

  auto objective = [&](double a, double b) {
    double total = 0.5 * penalty * (a * a + b * b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = a * x[i] + b;
      total += log1p_exp(z) - (labels[i] == 1 ? z : 0.0);
    }
    return total;
  };
  double value = objective(s.a, s.b);
  for (int iter = 0; iter < 200; ++iter) {
    double ga = penalty * s.a, gb = penalty * s.b;
    double haa = penalty, hab = 0.0, hbb = penalty;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double q = head::sigmoid(s.a * x[i] + s.b);
      const double r = q - labels[i];
      const double w = q * (1.0 - q);
      ga += r * x[i];
      gb += r;
      haa += w * x[i] * x[i];
      hab += w * x[i];
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    const double da = -(hbb * ga - hab * gb) / det;
    const double db = -(haa * gb - hab * ga) / det;
    double step = 1.0;
    double next = objective(s.a + da, s.b + db);
    while (!(next <= value) && step > 1e-10) {
      step *= 0.5;
      next = objective(s.a + step * da, s.b + step * db);
    }
    if (!(next <= value)) break;
    s.a += step * da;
    s.b += step * db;
    const bool done = std::abs(step * da) + std::abs(step * db) < 1e-13 * (1.0 + std::abs(s.a) + std::abs(s.b));
    value = next;
    if (done) break;
  }
  return s;
}

CategoricalDist TemperatureScaler::apply_logits(std::span<const double> logits) const {
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  return probabilities_from_logits(scaled);
}

PredictiveDistribution TemperatureScaler::apply(const PredictiveDistribution& base) const {
  const auto& c = require_categorical(base, "TemperatureScaler");
  std::vector<double> logits(c.num_classes());
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = std::log(std::max(c.prob(k), kProbFloor));
  return apply_logits(logits);
}

TemperatureScaler fit_temperature(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) throw DomainError("fit_temperature: logits and labels differ in length");
  if (logits.empty() || logits.cols() < 2) throw DomainError("fit_temperature: need K >= 2 logits per row");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.cols()) throw DomainError("fit_temperature: label out of range");
  }
  // d/du and d2/du2 of the log-loss at inverse temperature u.
  std::vector<double> probs(logits.cols()), scaled(logits.cols());
  auto derivatives = [&](double u) {
    double d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const auto z = logits.row(i);
      for (std::size_t k = 0; k < z.size(); ++k) scaled[k] = u * z[k];
      head::softmax(scaled, probs);
      double mean = 0.0, second = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        mean += probs[k] * z[k];
        second += probs[k] * z[k] * z[k];
      }
      d1 += mean - z[labels[i]];
      d2 += std::max(second - mean * mean, 0.0);
    }
    return std::pair{d1, d2};
  };

  TemperatureScaler s;
  double lo = 1.0 / kMaxTemperature, hi = 1.0 / kMinTemperature;
  if (derivatives(lo).first >= 0.0) {
    s.temperature = kMaxTemperature;
    s.fallback = true;
    return s;
  }
  if (derivatives(hi).first <= 0.0) {
    s.temperature = kMinTemperature;
    s.fallback = true;
    return s;
  }
  // Safeguarded Newton on the increasing derivative, keeping a sign bracket.
  double u = std::clamp(1.0, lo, hi);
  for (int iter = 0; iter < 200; ++iter) {
    const auto [d1, d2] = derivatives(u);
    if (d1 > 0.0) hi = u; else lo = u;
    double next = d2 > 0.0 ? u - d1 / d2 : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) < 1e-14 * u || hi - lo < 1e-15) {
      u = next;
      break;
    }
    u = next;
  }
  s.temperature = 1.0 / u;
  return s;
}

CategoricalDist MulticlassPlatt::apply(const CategoricalDist& probs) const {
  const std::size_t k = bias.size();
  if (probs.num_classes() != k) throw DomainError("MulticlassPlatt: class count mismatch");
  std::vector<double> logits(bias);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) logits[a] += weights(a, b) * probs.prob(b);
  }
  return probabilities_from_logits(logits);
}

PredictiveDistribution MulticlassPlatt::apply(const PredictiveDistribution& base) const {
  return apply(require_categorical(base, "MulticlassPlatt"));
}

MulticlassPlatt fit_multiclass_platt(std::span<const CategoricalDist> probs, std::span<const std::size_t> labels) {
  if (probs.size() != labels.size()) throw DomainError("fit_multiclass_platt: length mismatch");
  if (probs.empty()) throw DomainError("fit_multiclass_platt: empty input");
  const std::size_t k = probs.front().num_classes();
  const std::size_t f = k + 1;  // features: probabilities and a constant
  const std::size_t dim = k * f;
  const double n = static_cast<double>(probs.size());
  const double ridge = kMulticlassPlattRidge * n;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].num_classes() != k) throw DomainError("fit_multiclass_platt: inconsistent class count");
    if (labels[i] >= k) throw DomainError("fit_multiclass_platt: label out of range");
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  std::vector<double> feat(f), logits(k), q(k);
  auto features = [&](std::size_t i) {
    for (std::size_t j = 0; j < k; ++j) feat[j] = probs[i].prob(j);
    feat[k] = 1.0;
  };
  auto objective = [&](const Eigen::VectorXd& t) {
    double total = 0.5 * ridge * t.squaredNorm();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      features(i);
      for (std::size_t a = 0; a < k; ++a) {
        logits[a] = 0.0;
        for (std::size_t b = 0; b < f; ++b) logits[a] += t(static_cast<Eigen::Index>(a * f + b)) * feat[b];
      }
      const double top = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - top);
      total += top + std::log(z) - logits[labels[i]];
    }
    return total;
  };

  double value = objective(theta);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = ridge * theta;
    Eigen::MatrixXd hess = ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < probs.size(); ++i) {
      features(i);
      for (std::size_t a = 0; a < k; ++a) {
        logits[a] = 0.0;
        for (std::size_t b = 0; b < f; ++b) logits[a] += theta(static_cast<Eigen::Index>(a * f + b)) * feat[b];
      }
      head::softmax(logits, q);
      for (std::size_t a = 0; a < k; ++a) {
        const double r = q[a] - (labels[i] == a ? 1.0 : 0.0);
        for (std::size_t b = 0; b < f; ++b) grad(static_cast<Eigen::Index>(a * f + b)) += r * feat[b];
        for (std::size_t c = 0; c < k; ++c) {
          const double w = q[a] * ((a == c ? 1.0 : 0.0) - q[c]);
          if (w == 0.0) continue;
          for (std::size_t b = 0; b < f; ++b) {
            for (std::size_t d = 0; d < f; ++d) {
              hess(static_cast<Eigen::Index>(a * f + b), static_cast<Eigen::Index>(c * f + d)) += w * feat[b] * feat[d];
            }
          }
        }
      }
    }
    const Eigen::VectorXd step = -hess.ldlt().solve(grad);
    double scale = 1.0;
    double next = objective(theta + step);
    while (!(next <= value) && scale > 1e-10) {
      scale *= 0.5;
      next = objective(theta + scale * step);
    }
    if (!(next <= value)) break;
    theta += scale * step;
    const bool done = value - next < 1e-14 * (1.0 + std::abs(next));
    value = next;
    if (done) break;
  }

  MulticlassPlatt m;
  m.weights = Matrix(k, k);
  m.bias.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) m.weights(a, b) = theta(static_cast<Eigen::Index>(a * f + b));
    m.bias[a] = theta(static_cast<Eigen::Index>(a * f + k));
  }
  return m;
}

std::pair<Dataset, Dataset> split_for_recalibration(const Dataset& data, double recal_fraction, std::uint64_t seed) {
  if (!(recal_fraction > 0.0 && recal_fraction < 1.0)) {
    throw DomainError("split_for_recalibration: fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto c_size = static_cast<std::size_t>(std::llround(recal_fraction * static_cast<double>(n)));
  if (c_size == 0 || c_size >= n) throw DomainError("split_for_recalibration: too few rows to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> c_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c_size));
  std::vector<std::size_t> d_rows(order.begin() + static_cast<std::ptrdiff_t>(c_size), order.end());
  std::sort(c_rows.begin(), c_rows.end());
  std::sort(d_rows.begin(), d_rows.end());
  return {data.subset(d_rows), data.subset(c_rows)};
}

}  // namespace calibrax
