#pragma once

// Monte-Carlo EM for location-family RUMs: parallel E-step over agents,
// per-alternative M-step, theta_0 = 0 normalization, growing Gibbs sample
// schedule and convergence bookkeeping.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rumfit/efdist.hpp"
#include "rumfit/error.hpp"
#include "rumfit/gibbs.hpp"
#include "rumfit/parallel.hpp"
#include "rumfit/prefdata.hpp"
#include "rumfit/rng.hpp"

namespace rumfit {

// N_t = base + slope * t, t = 0 for the first iteration.
struct SampleSchedule {
  int base = 2000;
  int slope = 300;

  static SampleSchedule constant(int n) { return {n, 0}; }

  int at(int t) const {
    const long long n = static_cast<long long>(base) + static_cast<long long>(slope) * t;
    return static_cast<int>(std::min<long long>(n, 1'000'000'000));
  }

  std::string str() const { return std::to_string(base) + "+" + std::to_string(slope) + "*t"; }

  // Accepts "a+b*t", "a" or "a+b*iteration".
  static SampleSchedule parse(std::string_view s) {
    auto fail = [&]() -> SampleSchedule {
      throw DataError("schedule must look like '2000+300*t', got '" + std::string(s) + "'");
    };
    std::string text;
    for (char c : s)
      if (c != ' ') text += c;
    SampleSchedule out{0, 0};
    const auto plus = text.find('+');
    const auto head = detail::parse_int(text.substr(0, plus));
    if (!head || *head < 1) return fail();
    out.base = static_cast<int>(*head);
    if (plus == std::string::npos) return out;
    std::string rest = text.substr(plus + 1);
    const auto star = rest.find('*');
    if (star == std::string::npos) return fail();
    const std::string var = rest.substr(star + 1);
    if (var != "t" && var != "iteration") return fail();
    const auto slope = detail::parse_int(rest.substr(0, star));
    if (!slope || *slope < 0) return fail();
    out.slope = static_cast<int>(*slope);
    return out;
  }

  friend bool operator==(const SampleSchedule&, const SampleSchedule&) = default;
};

enum class Normalization {
  fix_first_to_zero,
  // Iterate with mean(theta) = 0; results are still reported with theta_0 = 0.
  mean_zero,
};

struct IterationRecord {
  int iteration = 0;
  int n_samples = 0;
  std::vector<double> theta;  // normalized, theta[0] = 0
  std::vector<double> sigma;  // empty unless variances are estimated
  double max_change = 0.0;
  double seconds = 0.0;
};

struct FitConfig {
  int max_iters = 100;
  int min_iters = 3;
  double param_tol = 1e-3;
  GibbsConfig gibbs;  // n_samples is overridden by the schedule
  SampleSchedule schedule;
  Normalization normalization = Normalization::fix_first_to_zero;
  // Normal only: treat sigma_j as free, with sufficient statistics (x, x^2).
  bool estimate_variance = false;
  double variance_floor = 1e-3;
  // Fixed (or initial, with estimate_variance) scales; empty means all 1.
  std::vector<double> scale;
  int threads = 0;  // <= 0: hardware concurrency
  std::function<void(const IterationRecord&)> observer;

  void validate() const {
    if (max_iters < 1) throw DataError("max_iters must be positive");
    if (min_iters < 0) throw DataError("min_iters must be nonnegative");
    if (!(param_tol >= 0.0)) throw DataError("param_tol must be nonnegative");
    if (schedule.base < 1 || schedule.slope < 0) throw DataError("invalid sample schedule");
    if (!(variance_floor > 0.0)) throw DataError("variance floor must be positive");
    GibbsConfig g = gibbs;
    g.n_samples = schedule.at(0);
    g.validate();
  }
};

struct FitResult {
  FamilyKind family = FamilyKind::normal;
  std::vector<double> theta;  // theta[0] = 0
  std::vector<double> sigma;  // per-alternative scales used by the final model
  bool variance_estimated = false;
  std::vector<IterationRecord> trace;
  Condition1Result condition1;
  bool tie_warning = false;
  bool converged = false;
  // The final-iteration Monte-Carlo bound did not drop below param_tol^2 / 9.
  bool tolerance_unreachable = false;
  double final_variance_bound = 0.0;
  std::vector<std::string> notices;

  int iterations() const { return static_cast<int>(trace.size()); }
};

// S[i][j] = E[T(x_j^i) | pi^i, theta^t]; one row per agent.
struct SuffStatMatrix {
  int rows = 0, cols = 0;
  std::vector<double> s;
  std::vector<double> s2;  // E[x^2], present only when variances are estimated

  double& at(int i, int j) { return s[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return s[static_cast<std::size_t>(i) * cols + j]; }
  double at2(int i, int j) const { return s2[static_cast<std::size_t>(i) * cols + j]; }

  std::vector<double> column_sums(bool second = false) const {
    std::vector<double> out(cols, 0.0);
    const auto& v = second ? s2 : s;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out[j] += v[static_cast<std::size_t>(i) * cols + j];
    return out;
  }
};

// Chains are seeded by (gibbs.seed, agent, iteration) so rows do not depend
// on the thread count.
inline SuffStatMatrix e_step(const Profile& p, std::span<const LocationFamily> dists,
                             const GibbsConfig& gibbs, int iteration, bool second_moment = false,
                             int threads = 0) {
  const int m = p.num_alternatives();
  if (static_cast<int>(dists.size()) != m) throw DataError("e_step: parameter dimension mismatch");
  gibbs.validate();
  std::vector<CompletedBallot> completed;
  std::vector<int> ballot_of;
  for (const auto& b : p.ballots()) {
    completed.push_back(complete_partial(b.ranking));
    for (int k = 0; k < b.weight; ++k) ballot_of.push_back(static_cast<int>(completed.size()) - 1);
  }
  SuffStatMatrix S;
  S.rows = static_cast<int>(ballot_of.size());
  S.cols = m;
  S.s.assign(static_cast<std::size_t>(S.rows) * m, 0.0);
  if (second_moment) S.s2.assign(S.s.size(), 0.0);
  parallel_for(ballot_of.size(), threads, [&](std::size_t i) {
    GibbsConfig cfg = gibbs;
    cfg.seed = derive_seed(gibbs.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(iteration)});
    SuffStats st;
    try {
      st = estimate_suff_stats(completed[ballot_of[i]], dists, cfg, second_moment);
    } catch (const NumericalError& e) {
      throw NumericalError("agent " + std::to_string(i) + ": " + e.what());
    }
    for (int j = 0; j < m; ++j) {
      if (!std::isfinite(st.T[j]))
        throw NumericalError("agent " + std::to_string(i) + ": non-finite sufficient statistic");
      S.s[i * m + j] = st.T[j];
      if (second_moment) S.s2[i * m + j] = st.T2[j];
    }
  });
  return S;
}

struct NormalMStep {
  std::vector<double> theta;
  std::vector<double> sigma;  // only filled when estimating variances
};

inline NormalMStep m_step_normal(const SuffStatMatrix& S, bool estimate_variance,
                                 double variance_floor = 1e-3) {
  if (S.rows < 1) throw DataError("m_step_normal: empty sufficient-statistic matrix");
  NormalMStep out;
  out.theta = S.column_sums();
  for (double& t : out.theta) t /= S.rows;
  if (estimate_variance) {
    if (S.s2.size() != S.s.size()) throw DataError("m_step_normal: second moments missing");
    auto m2 = S.column_sums(true);
    out.sigma.resize(S.cols);
    for (int j = 0; j < S.cols; ++j) {
      const double var = std::max(m2[j] / S.rows - out.theta[j] * out.theta[j], variance_floor);
      out.sigma[j] = std::sqrt(var);
    }
  }
  return out;
}

// theta_j = beta ln(n / -sum_i S_ij), the maximizer of e^{theta/beta} sum S + n theta / beta.
inline std::vector<double> m_step_gumbel(const SuffStatMatrix& S, std::span<const double> beta = {}) {
  if (S.rows < 1) throw DataError("m_step_gumbel: empty sufficient-statistic matrix");
  auto sums = S.column_sums();
  std::vector<double> theta(S.cols);
  for (int j = 0; j < S.cols; ++j) {
    const double b = beta.empty() ? 1.0 : beta[j];
    if (!(sums[j] < 0.0) || !std::isfinite(sums[j]))
      throw NumericalError("m_step_gumbel: sufficient statistics must be negative and finite");
    theta[j] = b * (std::log(static_cast<double>(S.rows)) - std::log(-sums[j]));
  }
  return theta;
}

// argmax_theta eta(theta) s - n A(theta) for a concave objective: Newton
// steps kept inside a sign-change bracket of the derivative, bisection when a
// step leaves it. Stops when |derivative| / n < 1e-10.
inline double maximize_ef_objective(const EFDecomposition& ef, double s, double n,
                                    double start = 0.0) {
  if (!std::isfinite(s) || !(n > 0.0)) throw NumericalError("M-step objective is not finite");
  auto grad = [&](double th) { return ef.eta_prime(th) * s - n * ef.A_prime(th); };
  auto curv = [&](double th) { return ef.eta_second(th) * s - n * ef.A_second(th); };
  constexpr double kGradTol = 1e-10;
  double lo = start, hi = start;
  double g0 = grad(start);
  if (!std::isfinite(g0)) throw NumericalError("M-step objective is not finite");
  if (std::abs(g0) / n < kGradTol) return start;
  // Expand until the derivative changes sign.
  double step = 1.0;
  if (g0 > 0.0) {
    for (hi = start + step; grad(hi) > 0.0; hi = start + step) {
      lo = hi;
      step *= 2.0;
      if (step > 1e6) throw NumericalError("M-step objective is unbounded above");
    }
  } else {
    for (lo = start - step; grad(lo) < 0.0; lo = start - step) {
      hi = lo;
      step *= 2.0;
      if (step > 1e6) throw NumericalError("M-step objective is unbounded above");
    }
  }
  double th = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double g = grad(th);
    if (!std::isfinite(g)) throw NumericalError("M-step objective is not finite");
    if (std::abs(g) / n < kGradTol) return th;
    (g > 0.0 ? lo : hi) = th;
    const double c = curv(th);
    double next = (c < 0.0) ? th - g / c : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == th || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(th)))
      return next;
    th = next;
  }
  return th;
}

inline std::vector<double> m_step_generic(const SuffStatMatrix& S, std::span<const LocationFamily> dists) {
  if (static_cast<int>(dists.size()) != S.cols) throw DataError("m_step_generic: dimension mismatch");
  const auto sums = S.column_sums();
  std::vector<double> theta(S.cols);
  for (int j = 0; j < S.cols; ++j)
    theta[j] = maximize_ef_objective(ef_decomposition(dists[j]), sums[j], S.rows, dists[j].location);
  return theta;
}

// Var(theta_j^{t+1}) <= F V / (M N n).
inline double variance_bound(double F, double V, double M, double N, double n) {
  return F * V / (M * N * n);
}

// With exact Rao-Blackwellization M is taken as 1: the bound of the plain
// estimator still holds and is the only finite one.
inline double variance_bound(const GibbsConfig& cfg, double V, double n) {
  const double M = cfg.exact_rao_blackwell ? 1.0 : cfg.rb_samples;
  return variance_bound(cfg.thinning, V, M, cfg.n_samples, n);
}

namespace detail {

inline void normalize(std::vector<double>& theta, Normalization norm) {
  double shift = theta[0];
  if (norm == Normalization::mean_zero) {
    shift = 0.0;
    for (double t : theta) shift += t;
    shift /= static_cast<double>(theta.size());
  }
  for (double& t : theta) t -= shift;
}

inline std::vector<double> first_to_zero(std::vector<double> theta) {
  const double t0 = theta[0];
  for (double& t : theta) t -= t0;
  return theta;
}

}  // namespace detail

inline FitResult fit(const Profile& p, FamilyKind family, const FitConfig& cfg) {
  cfg.validate();
  if (cfg.estimate_variance && family != FamilyKind::normal)
    throw DataError("variance estimation is only available for the normal family");
  const int m = p.num_alternatives();
  const auto n = static_cast<double>(p.total_weight());

  FitResult res;
  res.family = family;
  res.variance_estimated = cfg.estimate_variance;
  res.condition1 = check_condition1(p);
  if (!res.condition1.satisfied)
    res.notices.push_back("comparison graph not strongly connected: the likelihood is unbounded and the fit may diverge");
  if (cfg.estimate_variance)
    res.notices.push_back("free variances: concavity of the likelihood is not guaranteed");

  std::vector<double> theta(m, 0.0);
  std::vector<double> sigma = cfg.scale.empty() ? std::vector<double>(m, 1.0) : cfg.scale;
  if (static_cast<int>(sigma.size()) != m) throw DataError("scale vector length differs from m");
  std::vector<double> reported = detail::first_to_zero(theta);

  GibbsConfig gibbs = cfg.gibbs;
  for (int t = 0; t < cfg.max_iters; ++t) {
    const auto start = std::chrono::steady_clock::now();
    gibbs.n_samples = cfg.schedule.at(t);
    const auto dists = located(family, theta, sigma);
    const SuffStatMatrix S = e_step(p, dists, gibbs, t, cfg.estimate_variance, cfg.threads);

    std::vector<double> next;
    if (family == FamilyKind::normal) {
      auto ms = m_step_normal(S, cfg.estimate_variance, cfg.variance_floor);
      next = std::move(ms.theta);
      if (cfg.estimate_variance) sigma = std::move(ms.sigma);
    } else {
      next = m_step_gumbel(S, sigma);
    }
    detail::normalize(next, cfg.normalization);
    for (double v : next)
      if (!std::isfinite(v)) throw NumericalError("M-step produced a non-finite parameter");

    auto next_reported = detail::first_to_zero(next);
    double change = 0.0;
    for (int j = 0; j < m; ++j) change = std::max(change, std::abs(next_reported[j] - reported[j]));
    theta = std::move(next);
    reported = std::move(next_reported);

    IterationRecord rec;
    rec.iteration = t;
    rec.n_samples = gibbs.n_samples;
    rec.theta = reported;
    if (cfg.estimate_variance) rec.sigma = sigma;
    rec.max_change = change;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cfg.observer) cfg.observer(rec);
    res.trace.push_back(std::move(rec));

    if (t + 1 >= cfg.min_iters && change < cfg.param_tol) {
      res.converged = true;
      break;
    }
  }

  res.theta = reported;
  res.sigma = sigma;
  double V = 0.0;
  for (double s : sigma) V = std::max(V, s * s);
  res.final_variance_bound = variance_bound(gibbs, V, n);
  res.tolerance_unreachable = !(res.final_variance_bound < cfg.param_tol * cfg.param_tol / 9.0);
  if (res.tolerance_unreachable)
    res.notices.push_back("tolerance unreachable at configured sample size");
  for (int a = 0; a < m && !res.tie_warning; ++a)
    for (int b = a + 1; b < m; ++b)
      if (std::abs(res.theta[a] - res.theta[b]) < 10.0 * cfg.param_tol) {
        res.tie_warning = true;
        break;
      }
  return res;
}

}  // namespace rumfit
