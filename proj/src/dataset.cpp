#include "calibrax/dataset.hpp"

#include <cmath>

#include "calibrax/error.hpp"

namespace calibrax {

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] >= 0.0) || y[i] != std::floor(y[i])) {
      throw DataError("row " + std::to_string(i + 1) + ": label is not a nonnegative integer");
    }
    out.push_back(static_cast<std::size_t>(y[i]));
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.x = x.take(rows);
  out.y.reserve(rows.size());
  for (std::size_t r : rows) out.y.push_back(y.at(r));
  return out;
}

}  // namespace calibrax
