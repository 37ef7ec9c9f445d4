#pragma once

#include <cmath>
#include <numbers>

namespace calibrax::normal {

inline constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2*pi)

inline double pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc; accurate to a few ulps over (0, 1).
double quantile(double p);

}  // namespace calibrax::normal
