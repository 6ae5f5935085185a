#pragma once

// Exponential-family location distributions used as per-alternative utility
// noise: density, CDF, sampling, one-dimensional truncation (sampling and
// conditional moments of the sufficient statistic) and rank sampling.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rumfit/error.hpp"
#include "rumfit/prefdata.hpp"
#include "rumfit/rng.hpp"
#include "rumfit/special.hpp"

namespace rumfit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kEulerGamma = std::numbers::egamma;

enum class FamilyKind { normal, gumbel };

inline std::string_view to_string(FamilyKind k) {
  return k == FamilyKind::normal ? "normal" : "gumbel";
}

inline FamilyKind parse_family(std::string_view s) {
  if (s == "normal") return FamilyKind::normal;
  if (s == "gumbel") return FamilyKind::gumbel;
  throw DataError("unknown family '" + std::string(s) + "'");
}

// mu(. | theta): fixed shape, free location.
//   normal: N(location, scale^2)
//   gumbel: density (1/scale) e^{-z} e^{-e^{-z}}, z = (x - location)/scale.
//           Uncentred: the mean is location + gamma * scale.
struct LocationFamily {
  FamilyKind kind = FamilyKind::normal;
  double location = 0.0;
  double scale = 1.0;

  static LocationFamily normal(double theta, double sigma = 1.0) {
    return checked({FamilyKind::normal, theta, sigma});
  }
  static LocationFamily gumbel(double theta, double beta = 1.0) {
    return checked({FamilyKind::gumbel, theta, beta});
  }

  LocationFamily at(double theta) const { return {kind, theta, scale}; }

  double standardize(double x) const { return (x - location) / scale; }

 private:
  static LocationFamily checked(LocationFamily d) {
    if (!(d.scale > 0.0) || !std::isfinite(d.scale)) throw DataError("scale must be positive and finite");
    if (!std::isfinite(d.location)) throw DataError("location must be finite");
    return d;
  }
};

inline std::vector<LocationFamily> located(FamilyKind kind, std::span<const double> theta,
                                           std::span<const double> scale) {
  if (!scale.empty() && scale.size() != theta.size())
    throw DataError("theta and scale lengths differ");
  std::vector<LocationFamily> out;
  out.reserve(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double s = scale.empty() ? 1.0 : scale[j];
    out.push_back(kind == FamilyKind::normal ? LocationFamily::normal(theta[j], s)
                                             : LocationFamily::gumbel(theta[j], s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Densities

inline double log_pdf(const LocationFamily& d, double x) {
  const double z = d.standardize(x);
  if (d.kind == FamilyKind::normal) return -0.5 * z * z - special::kLogSqrt2Pi - std::log(d.scale);
  return -z - std::exp(-z) - std::log(d.scale);
}

inline double pdf(const LocationFamily& d, double x) {
  if (std::isinf(x)) return 0.0;
  return std::exp(log_pdf(d, x));
}

inline double cdf(const LocationFamily& d, double x) {
  if (x == -kInf) return 0.0;
  if (x == kInf) return 1.0;
  const double z = d.standardize(x);
  if (d.kind == FamilyKind::normal) return special::normal_cdf(z);
  return std::exp(-std::exp(-z));
}

inline double ccdf(const LocationFamily& d, double x) {
  if (x == -kInf) return 1.0;
  if (x == kInf) return 0.0;
  const double z = d.standardize(x);
  if (d.kind == FamilyKind::normal) return special::normal_ccdf(z);
  return -std::expm1(-std::exp(-z));
}

inline double log_cdf(const LocationFamily& d, double x) {
  if (x == -kInf) return -kInf;
  if (x == kInf) return 0.0;
  const double z = d.standardize(x);
  if (d.kind == FamilyKind::normal) return special::log_normal_cdf(z);
  return -std::exp(-z);
}

inline double quantile(const LocationFamily& d, double p) {
  if (d.kind == FamilyKind::normal) return d.location + d.scale * special::normal_quantile(p);
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return d.location - d.scale * std::log(-std::log(p));
}

inline double mean(const LocationFamily& d) {
  return d.kind == FamilyKind::normal ? d.location : d.location + kEulerGamma * d.scale;
}

inline double variance(const LocationFamily& d) {
  const double s2 = d.scale * d.scale;
  return d.kind == FamilyKind::normal ? s2 : s2 * std::numbers::pi * std::numbers::pi / 6.0;
}

// ---------------------------------------------------------------------------
// Exponential-family form: log pdf(x | theta) = eta(theta) T(x) - A(theta) + B(x).
// Derivatives of eta and A are carried for the generic M-step.

struct EFDecomposition {
  std::function<double(double)> eta, A, B, T;
  std::function<double(double)> eta_prime, eta_second, A_prime, A_second;
};

inline EFDecomposition ef_decomposition(FamilyKind kind, double scale = 1.0) {
  const double s = scale;
  EFDecomposition ef;
  if (kind == FamilyKind::normal) {
    const double inv_var = 1.0 / (s * s);
    ef.T = [](double x) { return x; };
    ef.eta = [inv_var](double th) { return th * inv_var; };
    ef.A = [inv_var](double th) { return 0.5 * th * th * inv_var; };
    ef.B = [inv_var, s](double x) {
      return -0.5 * x * x * inv_var - special::kLogSqrt2Pi - std::log(s);
    };
    ef.eta_prime = [inv_var](double) { return inv_var; };
    ef.eta_second = [](double) { return 0.0; };
    ef.A_prime = [inv_var](double th) { return th * inv_var; };
    ef.A_second = [inv_var](double) { return inv_var; };
  } else {
    ef.T = [s](double x) { return -std::exp(-x / s); };
    ef.eta = [s](double th) { return std::exp(th / s); };
    ef.A = [s](double th) { return -th / s; };
    ef.B = [s](double x) { return -x / s - std::log(s); };
    ef.eta_prime = [s](double th) { return std::exp(th / s) / s; };
    ef.eta_second = [s](double th) { return std::exp(th / s) / (s * s); };
    ef.A_prime = [s](double) { return -1.0 / s; };
    ef.A_second = [](double) { return 0.0; };
  }
  return ef;
}

inline EFDecomposition ef_decomposition(const LocationFamily& d) {
  return ef_decomposition(d.kind, d.scale);
}

// T(x) without building the std::function bundle.
inline double sufficient_statistic(const LocationFamily& d, double x) {
  return d.kind == FamilyKind::normal ? x : -std::exp(-x / d.scale);
}

// ---------------------------------------------------------------------------
// Truncation to (lower, upper)

struct TruncatedMoments {
  double mean_T = 0.0;
  // E[T^2 | interval]; only provided for the normal family (NaN otherwise).
  double mean_T2 = std::numeric_limits<double>::quiet_NaN();
};

struct TruncatedDraw {
  double x = 0.0;
  TruncatedMoments moments;
};

namespace detail {

inline constexpr double kTinyMass = 1e-14;

[[noreturn]] inline void zero_mass(double lower, double upper) {
  throw NumericalError("truncation interval (" + std::to_string(lower) + ", " +
                       std::to_string(upper) + ") has no probability mass");
}

// Standard normal restricted to (a, b). Intervals entirely below zero are
// reflected so the work happens either on a central interval (a < 0 < b) or
// in the right tail (0 <= a), where Q = 1 - Phi carries the precision.
class StdTruncatedNormal {
 public:
  StdTruncatedNormal(double alpha, double beta) {
    if (!(alpha < beta)) throw NumericalError("empty standardized interval");
    reflected_ = beta <= 0.0;
    a_ = reflected_ ? -beta : alpha;
    b_ = reflected_ ? -alpha : beta;
    right_tail_ = a_ >= 0.0;
    qb_ = special::normal_ccdf(b_);
    if (right_tail_) {
      pa_ = special::normal_ccdf(a_);  // Q(a)
      mass_ = pa_ - qb_;
    } else {
      pa_ = special::normal_cdf(a_);  // Phi(a)
      mass_ = 0.5 * (std::erf(b_ / special::kSqrt2) - std::erf(a_ / special::kSqrt2));
    }
  }

  double mass() const { return mass_; }

  // (E[Z], E[Z^2]) under the truncated law.
  std::pair<double, double> moments() const {
    const double a = a_, b = b_;
    double mean, m2;
    const double w = b - a;
    const double c = 0.5 * (a + b);
    if (std::isfinite(w) && w * std::max(1.0, std::abs(c)) < 1e-4) {
      mean = c - c * w * w / 12.0;
      m2 = c * c + w * w / 12.0 - c * c * w * w / 6.0;
    } else if (right_tail_) {
      const bool finite_b = std::isfinite(b);
      const double rho = finite_b ? std::exp(-0.5 * w * (a + b)) : 0.0;
      const double denom = special::mills_ratio(a) - (finite_b ? rho * special::mills_ratio(b) : 0.0);
      mean = (1.0 - rho) / denom;
      m2 = 1.0 + (a - (finite_b ? b * rho : 0.0)) / denom;
    } else {
      const double pa = special::normal_pdf(a), pb = special::normal_pdf(b);
      const double apa = std::isfinite(a) ? a * pa : 0.0;
      const double bpb = std::isfinite(b) ? b * pb : 0.0;
      mean = (pa - pb) / mass_;
      m2 = 1.0 + (apa - bpb) / mass_;
    }
    return {reflected_ ? -mean : mean, m2};
  }

  double sample(Rng& rng) const {
    double z;
    if (mass_ >= kTinyMass) {
      const double u = rng.uniform();
      if (right_tail_) {
        z = special::normal_ccdf_quantile(qb_ + u * mass_);
      } else {
        const double p = pa_ + u * mass_;
        z = p <= 0.5 ? special::normal_quantile(p)
                     : special::normal_ccdf_quantile(qb_ + (1.0 - u) * mass_);
      }
    } else {
      z = sample_rejection(rng);
    }
    z = std::clamp(z, a_, b_);
    return reflected_ ? -z : z;
  }

 private:
  double sample_rejection(Rng& rng) const {
    const double a = a_, w = b_ - a_;
    if (right_tail_ && a >= 1.0) {
      // Exponential proposal with rate a on (0, w); acceptance exp(-y^2/2).
      const double tail = std::isfinite(w) ? std::expm1(-a * w) : -1.0;
      for (;;) {
        const double y = -std::log1p(rng.uniform() * tail) / a;
        if (rng.uniform() <= std::exp(-0.5 * y * y)) return a + y;
      }
    }
    if (!std::isfinite(w)) zero_mass(a_, b_);
    // Narrow interval: uniform proposal against the density maximum.
    const double zpeak = right_tail_ ? a : 0.0;
    for (;;) {
      const double z = a + rng.uniform() * w;
      if (rng.uniform() <= std::exp(0.5 * (zpeak * zpeak - z * z))) return z;
    }
  }

  double a_, b_, pa_, qb_, mass_;
  bool reflected_, right_tail_;
};

// Gumbel truncation through U = exp(-(X - theta)/beta) ~ Exp(1):
// X in (lower, upper)  <=>  U in (u_lo, u_hi).
struct GumbelInterval {
  double u_lo, u_hi, width;
};

inline GumbelInterval gumbel_interval(const LocationFamily& d, double lower, double upper) {
  const double u_lo = upper == kInf ? 0.0 : std::exp(-d.standardize(upper));
  const double u_hi = lower == -kInf ? kInf : std::exp(-d.standardize(lower));
  if (!(u_lo < u_hi) || std::isinf(u_lo)) zero_mass(lower, upper);
  return {u_lo, u_hi, u_hi - u_lo};
}

// E[Y] for Y ~ Exp(1) truncated to (0, w).
inline double truncated_exp_mean(double w) {
  if (!std::isfinite(w)) return 1.0;
  if (w < 1e-3) return w / 2.0 - w * w / 12.0 + w * w * w * w / 720.0;
  return 1.0 - w / std::expm1(w);
}

inline double keep_inside(double x, double lower, double upper) {
  if (x <= lower) x = std::nextafter(lower, kInf);
  if (x >= upper) x = std::nextafter(upper, -kInf);
  if (!(x > lower && x < upper)) zero_mass(lower, upper);
  return x;
}

}  // namespace detail

inline TruncatedMoments truncated_moments(const LocationFamily& d, double lower, double upper) {
  if (!(lower < upper)) detail::zero_mass(lower, upper);
  if (d.kind == FamilyKind::normal) {
    const detail::StdTruncatedNormal tn(d.standardize(lower), d.standardize(upper));
    const auto [mz, m2z] = tn.moments();
    const double mean_x = d.location + d.scale * mz;
    // E[X^2] = theta^2 + 2 theta sigma E[Z] + sigma^2 E[Z^2]
    const double m2x = d.location * d.location + 2.0 * d.location * d.scale * mz +
                       d.scale * d.scale * m2z;
    return {mean_x, m2x};
  }
  const auto iv = detail::gumbel_interval(d, lower, upper);
  const double eu = iv.u_lo + detail::truncated_exp_mean(iv.width);
  return {-std::exp(-d.location / d.scale) * eu};
}

// E[T(X) | lower < X < upper].
inline double truncated_mean_T(const LocationFamily& d, double lower, double upper) {
  return truncated_moments(d, lower, upper).mean_T;
}

// Draw from d conditioned on (lower, upper). Inverse-CDF on the conditioned
// uniform, parameterized through the upper-tail function deep in a tail;
// exponential-proposal rejection once the interval mass drops below 1e-14.
inline double truncated_sample(const LocationFamily& d, double lower, double upper, Rng& rng) {
  if (!(lower < upper)) detail::zero_mass(lower, upper);
  double x;
  if (d.kind == FamilyKind::normal) {
    const detail::StdTruncatedNormal tn(d.standardize(lower), d.standardize(upper));
    x = d.location + d.scale * tn.sample(rng);
  } else {
    const auto iv = detail::gumbel_interval(d, lower, upper);
    const double u = rng.uniform();
    const double y = std::isfinite(iv.width) ? -std::log1p(u * std::expm1(-iv.width)) : -std::log(u);
    x = d.location - d.scale * std::log(iv.u_lo + y);
  }
  return detail::keep_inside(x, lower, upper);
}

// One draw plus the conditional moments, sharing the tail computations.
inline TruncatedDraw truncated_draw(const LocationFamily& d, double lower, double upper, Rng& rng) {
  if (!(lower < upper)) detail::zero_mass(lower, upper);
  TruncatedDraw out;
  if (d.kind == FamilyKind::normal) {
    const detail::StdTruncatedNormal tn(d.standardize(lower), d.standardize(upper));
    const auto [mz, m2z] = tn.moments();
    out.moments.mean_T = d.location + d.scale * mz;
    out.moments.mean_T2 = d.location * d.location + 2.0 * d.location * d.scale * mz +
                          d.scale * d.scale * m2z;
    out.x = detail::keep_inside(d.location + d.scale * tn.sample(rng), lower, upper);
  } else {
    const auto iv = detail::gumbel_interval(d, lower, upper);
    out.moments.mean_T = -std::exp(-d.location / d.scale) * (iv.u_lo + detail::truncated_exp_mean(iv.width));
    const double u = rng.uniform();
    const double y = std::isfinite(iv.width) ? -std::log1p(u * std::expm1(-iv.width)) : -std::log(u);
    out.x = detail::keep_inside(d.location - d.scale * std::log(iv.u_lo + y), lower, upper);
  }
  return out;
}

// Probability mass of (lower, upper).
inline double interval_mass(const LocationFamily& d, double lower, double upper) {
  if (!(lower < upper)) return 0.0;
  if (d.kind == FamilyKind::normal)
    return detail::StdTruncatedNormal(d.standardize(lower), d.standardize(upper)).mass();
  const double u_lo = upper == kInf ? 0.0 : std::exp(-d.standardize(upper));
  const double u_hi = lower == -kInf ? kInf : std::exp(-d.standardize(lower));
  if (!(u_lo < u_hi)) return 0.0;
  return std::exp(-u_lo) * -std::expm1(-(u_hi - u_lo));
}

// Unconstrained draw.
inline double sample(const LocationFamily& d, Rng& rng) {
  const double u = rng.uniform();
  if (d.kind == FamilyKind::normal) {
    const double z = u <= 0.5 ? special::normal_quantile(u) : special::normal_ccdf_quantile(1.0 - u);
    return d.location + d.scale * z;
  }
  return d.location - d.scale * std::log(-std::log(u));
}

// Independent utilities X_j ~ dists[j]; returns alternatives by decreasing
// utility. Exact ties (probability zero) trigger a redraw.
inline Ranking sample_ranking(std::span<const LocationFamily> dists, Rng& rng) {
  const int m = static_cast<int>(dists.size());
  if (m < 1) throw DataError("sample_ranking needs at least one alternative");
  std::vector<double> x(m);
  std::vector<int> order(m);
  for (;;) {
    for (int j = 0; j < m; ++j) x[j] = sample(dists[j], rng);
    for (int j = 0; j < m; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return x[i] > x[j]; });
    bool tie = false;
    for (int j = 0; j + 1 < m; ++j) tie = tie || x[order[j]] == x[order[j + 1]];
    if (!tie) return Ranking(order, m);
  }
}

}  // namespace rumfit
