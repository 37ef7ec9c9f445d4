#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "calibrax/matrix.hpp"

namespace calibrax {

/// Features plus one target column. For classification the target holds
/// class indices stored as doubles.
struct Dataset {
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  Matrix x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  bool is_classification() const { return target_name == "label"; }
  std::vector<std::size_t> labels() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

}  // namespace calibrax
