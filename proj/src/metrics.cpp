#include "calibrax/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "calibrax/error.hpp"

namespace calibrax {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DomainError(std::string(what) + ": input lengths differ");
  if (a == 0) throw DomainError(std::string(what) + ": empty input");
}

ReliabilityTable table_for(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                           std::span<const double> levels, std::span<const std::size_t> members) {
  const std::size_t m = levels.size();
  // covered[j]: samples with y <= q(p_j); nested because quantiles are monotone in p.
  std::vector<std::size_t> covered(m, 0);
  for (std::size_t i : members) {
    for (std::size_t j = 0; j < m; ++j) {
      if (ys[i] <= quantile_at(dists[i], levels[j])) ++covered[j];
    }
  }
  const double n = static_cast<double>(members.size());
  ReliabilityTable table;
  std::size_t previous = 0;
  for (std::size_t j = 0; j < m; ++j) {
    // Guard against non-monotone quantile evaluation from rounding.
    const std::size_t c = std::max(covered[j], previous);
    table.bins.push_back({levels[j], static_cast<double>(covered[j]) / n, c - previous});
    previous = c;
  }
  table.bins.push_back({1.0, 1.0, members.size() - previous});
  return table;
}

}  // namespace

std::size_t ReliabilityTable::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

ReliabilityTable reliability_table(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                                   std::span<const double> levels) {
  require_same_length(dists.size(), ys.size(), "reliability_table");
  validate_levels(levels);
  std::vector<std::size_t> all(ys.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return table_for(dists, ys, levels, all);
}

double quantile_calibration_error(const ReliabilityTable& table) {
  double total = 0.0;
  for (const auto& b : table.bins) {
    if (b.nominal_level >= 1.0) continue;
    total += (b.nominal_level - b.empirical_freq) * (b.nominal_level - b.empirical_freq);
  }
  return total;
}

double quantile_calibration_error(std::span<const PredictiveDistribution> dists, std::span<const double> ys,
                                  std::span<const double> levels) {
  return quantile_calibration_error(reliability_table(dists, ys, levels));
}

DistributionCalibrationReport distribution_calibration_diagnostic(std::span<const Featurization> featurizations,
                                                                  std::span<const PredictiveDistribution> dists,
                                                                  std::span<const double> ys, std::size_t param_bins,
                                                                  std::span<const double> levels) {
  require_same_length(dists.size(), ys.size(), "distribution_calibration_diagnostic");
  require_same_length(featurizations.size(), ys.size(), "distribution_calibration_diagnostic");
  if (param_bins == 0) throw DomainError("distribution_calibration_diagnostic: param_bins must be positive");
  validate_levels(levels);

  const std::size_t dim = featurizations.front().params.size();
  for (const auto& phi : featurizations) phi.validate(dim);

  DistributionCalibrationReport report;
  std::size_t binned = dim;
  if (param_bins > 1 && std::pow(static_cast<double>(param_bins), static_cast<double>(dim)) > kMaxCells) {
    binned = static_cast<std::size_t>(std::floor(std::log(static_cast<double>(kMaxCells)) /
                                                 std::log(static_cast<double>(param_bins)) +
                                                 1e-12));
    binned = std::max<std::size_t>(binned, 1);
  }
  for (std::size_t k = 0; k < binned; ++k) {
    report.binned_coordinates.push_back(binned == 1 ? 0 : k * (dim - 1) / (binned - 1));
  }

  std::vector<double> lo(dim, INFINITY), hi(dim, -INFINITY);
  for (const auto& phi : featurizations) {
    for (std::size_t c = 0; c < dim; ++c) {
      lo[c] = std::min(lo[c], phi.params[c]);
      hi[c] = std::max(hi[c], phi.params[c]);
    }
  }

  std::map<std::vector<std::size_t>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < featurizations.size(); ++i) {
    std::vector<std::size_t> key;
    for (std::size_t c : report.binned_coordinates) {
      const double width = hi[c] - lo[c];
      std::size_t b = 0;
      if (width > 0.0) {
        const double u = (featurizations[i].params[c] - lo[c]) / width;
        b = std::min(static_cast<std::size_t>(u * static_cast<double>(param_bins)), param_bins - 1);
      }
      key.push_back(b);
    }
    cells[key].push_back(i);
  }

  double weighted = 0.0;
  std::size_t kept = 0;
  for (const auto& [key, members] : cells) {
    CellReport cell{key, members.size(), {}, 0.0};
    if (members.size() < kMinCellCount) {
      report.excluded.push_back(std::move(cell));
      continue;
    }
    cell.table = table_for(dists, ys, levels, members);
    cell.error = quantile_calibration_error(cell.table);
    weighted += static_cast<double>(members.size()) * cell.error;
    kept += members.size();
    report.cells.push_back(std::move(cell));
  }
  report.aggregate = kept > 0 ? weighted / static_cast<double>(kept) : 0.0;
  return report;
}

double ece_classification(std::span<const CategoricalDist> dists, std::span<const std::size_t> labels,
                          std::size_t bins) {
  require_same_length(dists.size(), labels.size(), "ece_classification");
  if (bins == 0) throw DomainError("ece_classification: bins must be positive");
  std::vector<double> confidence(bins, 0.0), correct(bins, 0.0), count(bins, 0.0);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const std::size_t k = dists[i].argmax();
    const double c = dists[i].prob(k);
    const std::size_t b = std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
    confidence[b] += c;
    correct[b] += labels[i] == k ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) total += std::abs(correct[b] - confidence[b]);
  return total / static_cast<double>(dists.size());
}

double classification_calibration_error(std::span<const CategoricalDist> dists,
                                        std::span<const std::size_t> labels, std::size_t bins) {
  require_same_length(dists.size(), labels.size(), "classification_calibration_error");
  if (bins == 0) throw DomainError("classification_calibration_error: bins must be positive");
  std::vector<double> confidence(bins, 0.0), hits(bins, 0.0), count(bins, 0.0);
  double total_count = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (labels[i] >= dists[i].num_classes()) throw DomainError("classification_calibration_error: bad label");
    for (std::size_t k = 0; k < dists[i].num_classes(); ++k) {
      const double p = dists[i].prob(k);
      const std::size_t b = std::min(static_cast<std::size_t>(p * static_cast<double>(bins)), bins - 1);
      confidence[b] += p;
      hits[b] += labels[i] == k ? 1.0 : 0.0;
      count[b] += 1.0;
      total_count += 1.0;
    }
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0.0) continue;
    const double gap = (confidence[b] - hits[b]) / count[b];
    total += count[b] / total_count * gap * gap;
  }
  return total;
}

double binary_calibration_error_l1(std::span<const double> probs, std::span<const int> outcomes,
                                   std::size_t bins) {
  require_same_length(probs.size(), outcomes.size(), "binary_calibration_error_l1");
  if (bins == 0) throw DomainError("binary_calibration_error_l1: bins must be positive");
  std::vector<double> p_sum(bins, 0.0), y_sum(bins, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw DomainError("binary_calibration_error_l1: p outside [0, 1]");
    const std::size_t b = std::min(static_cast<std::size_t>(probs[i] * static_cast<double>(bins)), bins - 1);
    p_sum[b] += probs[i];
    y_sum[b] += outcomes[i] != 0 ? 1.0 : 0.0;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) total += std::abs(y_sum[b] - p_sum[b]);
  return total / static_cast<double>(probs.size());
}

double accuracy(std::span<const CategoricalDist> dists, std::span<const std::size_t> labels) {
  require_same_length(dists.size(), labels.size(), "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) correct += dists[i].argmax() == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(dists.size());
}

PointErrors mae_mape(std::span<const double> point_preds, std::span<const double> ys) {
  require_same_length(point_preds.size(), ys.size(), "mae_mape");
  PointErrors out;
  double abs_sum = 0.0;
  double pct_sum = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double err = std::abs(ys[i] - point_preds[i]);
    abs_sum += err;
    if (ys[i] == 0.0) {
      ++out.zeros_excluded;
      continue;
    }
    pct_sum += err / std::abs(ys[i]);
    ++out.mape_count;
  }
  if (out.mape_count == 0) throw DomainError("mae_mape: every outcome is zero, MAPE undefined");
  out.mae = abs_sum / static_cast<double>(ys.size());
  out.mape = pct_sum / static_cast<double>(out.mape_count);
  return out;
}

std::vector<double> point_predictions(std::span<const PredictiveDistribution> dists) {
  std::vector<double> out;
  out.reserve(dists.size());
  for (const auto& d : dists) out.push_back(median(d));
  return out;
}

}  // namespace calibrax
