#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the library's numerical routines except for the cdf being integrated.

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <functional>
#include <vector>

namespace calibrax::oracle {

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

inline double normal_cdf(double z) {
  return boost::math::cdf(boost::math::normal_distribution<double>(0.0, 1.0), z);
}

inline double normal_pdf(double z) {
  return boost::math::pdf(boost::math::normal_distribution<double>(0.0, 1.0), z);
}

/// Composite trapezoid rule with n intervals.
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double total = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) total += f(lo + i * h);
  return total * h;
}

/// Composite Simpson rule with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double total = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) total += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  return total * h / 3.0;
}

/// CRPS of a cdf by brute-force quadrature of (F(z) - 1{z >= y})^2 on [lo, hi].
/// Assumes F = 0 below lo and F = 1 above hi.
inline double crps_by_quadrature(const std::function<double(double)>& cdf, double y, double lo,
                                 double hi, int n) {
  auto residual = [&](double step) {
    return [&cdf, step](double z) {
      const double r = cdf(z) - step;
      return r * r;
    };
  };
  double total = 0.0;
  if (y > lo && y < hi) {
    // Split at the step so each piece sees a continuous integrand.
    total = trapezoid(residual(0.0), lo, y, n) + trapezoid(residual(1.0), y, hi, n);
  } else if (y <= lo) {
    total = trapezoid(residual(1.0), lo, hi, n) + (lo - y);
  } else {
    total = trapezoid(residual(0.0), lo, hi, n) + (y - hi);
  }
  return total;
}

/// Expected check loss E rho_tau(Y, q) for Y ~ N(0, 1), built from
/// E(Y - q)^+ = phi(q) - q(1 - Phi(q)).
inline double expected_check_standard_normal(double tau, double q) {
  const double upper = normal_pdf(q) - q * (1.0 - normal_cdf(q));  // E(Y-q)^+
  const double lower = upper + q;                                   // E(q-Y)^+ = E(Y-q)^+ - E(Y-q)
  return tau * upper + (1.0 - tau) * lower;
}

}  // namespace calibrax::oracle
