#include "calibrax/online.hpp"

#include <algorithm>
#include <cmath>

#include "calibrax/bench.hpp"
#include "calibrax/error.hpp"

namespace calibrax::online {
namespace {

double grid_value(std::size_t i, std::size_t n) { return static_cast<double>(i) / static_cast<double>(n); }

// Per (bucket, grid point) play and outcome totals.
struct Tally {
  std::vector<double> plays;
  std::vector<double> ones;
};

Tally tally(const RegretLedger& ledger, std::optional<std::size_t> bucket) {
  const std::size_t size = ledger.resolution + 1;
  Tally t{std::vector<double>(size, 0.0), std::vector<double>(size, 0.0)};
  for (const auto& s : ledger.steps) {
    if (bucket && s.bucket != *bucket) continue;
    t.plays.at(s.index) += 1.0;
    t.ones[s.index] += s.y;
  }
  return t;
}

double calibration_from_tally(const Tally& t, std::size_t n, const CalibrationLoss& loss) {
  double total = 0.0;
  double steps = 0.0;
  for (std::size_t i = 0; i < t.plays.size(); ++i) {
    if (t.plays[i] == 0.0) continue;
    total += t.plays[i] * loss(t.ones[i] / t.plays[i], grid_value(i, n));
    steps += t.plays[i];
  }
  return steps > 0.0 ? total / steps : 0.0;
}

void require_nonempty(const RegretLedger& ledger, const char* who) {
  if (ledger.steps.empty()) throw DomainError(std::string(who) + ": empty ledger");
  if (ledger.resolution == 0) throw DomainError(std::string(who) + ": resolution must be positive");
}

}  // namespace

CalibratedForecaster::CalibratedForecaster(std::size_t n, std::uint64_t seed, std::size_t max_iterations)
    : n_(n), max_iterations_(max_iterations), rng_(seed) {
  if (n == 0) throw DomainError("CalibratedForecaster: N must be at least 1");
  if (max_iterations == 0) throw DomainError("CalibratedForecaster: max_iterations must be positive");
  const std::size_t size = n + 1;
  regret_.assign(size * size, 0.0);
  counts_.assign(size, 0);
  outcome_sums_.assign(size, 0.0);
  distribution_.assign(size, 1.0 / static_cast<double>(size));
  chain_.assign(size * size, 0.0);
  next_.assign(size, 0.0);
}

void CalibratedForecaster::stationary_distribution() {
  const std::size_t size = grid_size();
  // Lazy chain (I + P) / 2: same stationary distributions as P, never periodic.
  for (std::size_t i = 0; i < size; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < size; ++j) {
      if (j != i) row_sum += std::max(regret_[i * size + j], 0.0);
    }
    double* row = &chain_[i * size];
    if (row_sum > 0.0) {
      for (std::size_t j = 0; j < size; ++j) row[j] = j == i ? 0.5 : 0.5 * std::max(regret_[i * size + j], 0.0) / row_sum;
    } else {
      std::fill(row, row + size, 0.0);
      row[i] = 1.0;
    }
  }

  // Power iteration warm-started from the previous distribution.
  last_fell_back_ = true;
  for (std::size_t it = 0; it < max_iterations_; ++it) {
    std::fill(next_.begin(), next_.end(), 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      const double mass = distribution_[i];
      if (mass == 0.0) continue;
      const double* row = &chain_[i * size];
      for (std::size_t j = 0; j < size; ++j) next_[j] += mass * row[j];
    }
    double change = 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < size; ++j) total += next_[j];
    for (std::size_t j = 0; j < size; ++j) {
      next_[j] /= total;
      change += std::abs(next_[j] - distribution_[j]);
    }
    distribution_.swap(next_);
    if (change < kPowerTolerance) {
      last_fell_back_ = false;
      break;
    }
  }
  if (last_fell_back_) {
    ++fallbacks_;
    std::fill(distribution_.begin(), distribution_.end(), 1.0 / static_cast<double>(size));
  }
}

std::size_t CalibratedForecaster::predict() { return predict(rng_); }

std::size_t CalibratedForecaster::predict(Rng& rng) {
  stationary_distribution();
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t choice = grid_size() - 1;
  for (std::size_t i = 0; i < grid_size(); ++i) {
    cumulative += distribution_[i];
    if (u < cumulative) {
      choice = i;
      break;
    }
  }
  pending_ = choice;
  has_pending_ = true;
  return choice;
}

void CalibratedForecaster::update(int y) {
  if (!has_pending_) throw ProtocolError("CalibratedForecaster: update without a preceding predict");
  has_pending_ = false;
  observe(pending_, y);
}

void CalibratedForecaster::observe(std::size_t played, int y) {
  if (y != 0 && y != 1) throw DomainError("CalibratedForecaster: outcome must be 0 or 1");
  if (played >= grid_size()) throw DomainError("CalibratedForecaster: grid index out of range");
  const std::size_t size = grid_size();
  const double played_loss = squared_loss(grid_value(played, n_), y);
  for (std::size_t j = 0; j < size; ++j) {
    regret_[played * size + j] += played_loss - squared_loss(grid_value(j, n_), y);
  }
  ++counts_[played];
  outcome_sums_[played] += y;
}

BucketedRecalibrator::BucketedRecalibrator(std::size_t n, std::size_t m, std::uint64_t seed) : n_(n), rng_(seed) {
  if (m == 0) throw DomainError("BucketedRecalibrator: M must be at least 1");
  sub_.reserve(m);
  for (std::size_t j = 0; j < m; ++j) sub_.emplace_back(n, 0);
  route_counts_.assign(m, 0);
  ledger_.resolution = n;
  ledger_.buckets = m;
}

std::size_t BucketedRecalibrator::bucket_of(double p_raw, std::size_t m) {
  if (!(p_raw >= 0.0 && p_raw <= 1.0)) throw DomainError("bucket_of: p_raw outside [0, 1]");
  return std::min(static_cast<std::size_t>(p_raw * static_cast<double>(m)), m - 1);
}

double BucketedRecalibrator::step(double p_raw, int y) {
  const std::size_t j = bucket_of(p_raw, sub_.size());
  const std::size_t index = sub_[j].predict(rng_);
  sub_[j].update(y);
  ++route_counts_[j];
  const double p_out = grid_value(index, n_);
  ledger_.steps.push_back({p_raw, j, index, p_out, y});
  return p_out;
}

double l1_distance(double rho, double p) { return std::abs(rho - p); }
double l2_distance(double rho, double p) { return (rho - p) * (rho - p); }
double squared_loss(double p, int y) { return (y - p) * (y - p); }
double misclassification(double p, int y) { return (p >= 0.5 ? 1 : 0) == y ? 0.0 : 1.0; }

double calibration_error(const RegretLedger& ledger, const CalibrationLoss& loss) {
  require_nonempty(ledger, "calibration_error");
  return calibration_from_tally(tally(ledger, std::nullopt), ledger.resolution, loss);
}

double bucket_calibration_error(const RegretLedger& ledger, std::size_t bucket, const CalibrationLoss& loss) {
  require_nonempty(ledger, "bucket_calibration_error");
  return calibration_from_tally(tally(ledger, bucket), ledger.resolution, loss);
}

double internal_regret(const RegretLedger& ledger, const OutcomeLoss& loss) {
  require_nonempty(ledger, "internal_regret");
  const std::size_t n = ledger.resolution;
  const Tally t = tally(ledger, std::nullopt);
  std::vector<double> loss0(n + 1);
  std::vector<double> loss1(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    loss0[j] = loss(grid_value(j, n), 0);
    loss1[j] = loss(grid_value(j, n), 1);
  }
  double best = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    if (t.plays[i] == 0.0) continue;
    const double zeros = t.plays[i] - t.ones[i];
    const double own = zeros * loss0[i] + t.ones[i] * loss1[i];
    for (std::size_t j = 0; j <= n; ++j) best = std::max(best, own - (zeros * loss0[j] + t.ones[i] * loss1[j]));
  }
  return best;
}

double internal_regret_brute_force(const RegretLedger& ledger, const OutcomeLoss& loss) {
  require_nonempty(ledger, "internal_regret_brute_force");
  const std::size_t n = ledger.resolution;
  double best = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= n; ++j) {
      double total = 0.0;
      for (const auto& s : ledger.steps) {
        if (s.index == i) total += loss(grid_value(i, n), s.y) - loss(grid_value(j, n), s.y);
      }
      best = std::max(best, total);
    }
  }
  return best;
}

double external_regret(const RegretLedger& ledger, const OutcomeLoss& loss) {
  require_nonempty(ledger, "external_regret");
  double total = 0.0;
  for (const auto& s : ledger.steps) total += loss(s.p_out, s.y) - loss(s.p_raw, s.y);
  return total;
}

MergedCheck merged_calibration_check(const RegretLedger& ledger, const CalibrationLoss& loss) {
  require_nonempty(ledger, "merged_calibration_check");
  MergedCheck check;
  check.merged = calibration_error(ledger, loss);
  std::vector<double> routed(ledger.buckets, 0.0);
  for (const auto& s : ledger.steps) routed.at(s.bucket) += 1.0;
  const double total = static_cast<double>(ledger.steps.size());
  for (std::size_t j = 0; j < ledger.buckets; ++j) {
    if (routed[j] > 0.0) check.weighted_sum += routed[j] / total * bucket_calibration_error(ledger, j, loss);
  }
  return check;
}

RegretLedger simulate_distorted_stream(const SimulationConfig& config) {
  if (config.steps == 0) throw DomainError("simulate: T must be positive");
  const auto stream = bench::gen_distorted_binary(config.steps, config.seed);
  BucketedRecalibrator recal(config.n, config.m, config.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  for (std::size_t t = 0; t < config.steps; ++t) recal.step(stream.scores[t], stream.labels[t]);
  return recal.ledger();
}

LedgerSummary summarize(const RegretLedger& ledger) {
  LedgerSummary s;
  s.steps = ledger.steps.size();
  s.calibration_l1 = calibration_error(ledger, l1_distance);
  s.calibration_l2 = calibration_error(ledger, l2_distance);
  s.internal_regret_l2 = internal_regret(ledger, squared_loss);
  s.internal_regret_misclassification = internal_regret(ledger, misclassification);
  s.external_regret_misclassification = external_regret(ledger, misclassification) / static_cast<double>(s.steps);
  s.merged_l2 = merged_calibration_check(ledger, l2_distance);
  s.merged_l1 = merged_calibration_check(ledger, l1_distance);
  return s;
}

nlohmann::json to_json(const LedgerSummary& s) {
  auto merged = [](const MergedCheck& m) {
    return nlohmann::json{{"merged", m.merged}, {"weighted_sum", m.weighted_sum}, {"holds", m.holds()}};
  };
  return {{"steps", s.steps},
          {"calibration_l1", s.calibration_l1},
          {"calibration_l2", s.calibration_l2},
          {"internal_regret_l2", s.internal_regret_l2},
          {"internal_regret_misclassification", s.internal_regret_misclassification},
          {"external_regret_misclassification_per_step", s.external_regret_misclassification},
          {"merged_l1", merged(s.merged_l1)},
          {"merged_l2", merged(s.merged_l2)}};
}

std::string trace_csv(const RegretLedger& ledger) {
  std::string out = "t,p_raw,bucket,p_out,y\n";
  for (std::size_t t = 0; t < ledger.steps.size(); ++t) {
    const auto& s = ledger.steps[t];
    out += std::to_string(t + 1) + ',' + bench::format_double(s.p_raw) + ',' + std::to_string(s.bucket + 1) + ',' +
           bench::format_double(s.p_out) + ',' + std::to_string(s.y) + '\n';
  }
  return out;
}

}  // namespace calibrax::online
