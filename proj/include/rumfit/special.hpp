#pragma once

// Standard-normal helpers that stay accurate deep in both tails.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace rumfit::special {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2 pi)
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))
inline constexpr double kSqrtPiOver2 = 1.25331413731550025121;  // sqrt(pi/2)

inline double normal_pdf(double z) {
  if (std::isinf(z)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

// Phi(z).
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

// 1 - Phi(z), without cancellation for large z.
inline double normal_ccdf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

// Scaled complementary error function exp(x^2) erfc(x), for x >= 0.
inline double erfcx(double x) {
  if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
  if (x < 26.0) {
    // exp(x*x) with the rounding error of x*x folded back in.
    const double x2 = x * x;
    const double x2_err = std::fma(x, x, -x2);
    return std::erfc(x) * std::exp(x2) * (1.0 + x2_err);
  }
  if (std::isinf(x)) return 0.0;
  // Asymptotic series; truncation error below 1e-15 relative for x >= 26.
  const double inv2 = 1.0 / (x * x);
  const double series =
      1.0 +
      inv2 * (-0.5 +
              inv2 * (0.75 +
                      inv2 * (-1.875 + inv2 * (6.5625 + inv2 * (-29.53125)))));
  return series * std::numbers::inv_sqrtpi / x;
}

// Q(z) / phi(z) = 1 / (inverse Mills ratio), for z >= 0.
inline double mills_ratio(double z) { return kSqrtPiOver2 * erfcx(z / kSqrt2); }

// log Phi(z), accurate for very negative z.
inline double log_normal_cdf(double z) {
  if (z < -5.0) return std::log(0.5 * erfcx(-z / kSqrt2)) - 0.5 * z * z;
  if (z > 5.0) return std::log1p(-normal_ccdf(z));
  return std::log(normal_cdf(z));
}

// Phi^{-1}(p) for p in (0, 1).
inline double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  if (p <= 0.5) return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
  return kSqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

// Inverse of Q: returns z with 1 - Phi(z) = q, accurate for tiny q.
inline double normal_ccdf_quantile(double q) {
  if (q <= 0.0) return kInf;
  if (q >= 1.0) return -kInf;
  if (q <= 0.5) return kSqrt2 * boost::math::erfc_inv(2.0 * q);
  return -kSqrt2 * boost::math::erfc_inv(2.0 * (1.0 - q));
}

}  // namespace rumfit::special
