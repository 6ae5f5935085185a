#pragma once

// Rank probabilities under a RUM (nested quadrature, sequential importance
// sampling, Plackett-Luce closed form), profile log-likelihoods, model
// comparison, a concavity probe and the recovery / robustness harnesses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rumfit/efdist.hpp"
#include "rumfit/error.hpp"
#include "rumfit/mcem.hpp"
#include "rumfit/pl.hpp"
#include "rumfit/prefdata.hpp"
#include "rumfit/rng.hpp"

namespace rumfit {

enum class ProbMethod { quadrature, sis, closed_form };

inline std::string_view to_string(ProbMethod m) {
  switch (m) {
    case ProbMethod::quadrature: return "quadrature";
    case ProbMethod::sis: return "sis";
    case ProbMethod::closed_form: return "closed-form";
  }
  return "?";
}

struct RankProbEstimate {
  double log_prob = 0.0;
  double std_err = 0.0;  // of log_prob; 0 for the deterministic methods
  ProbMethod method = ProbMethod::quadrature;
  double abs_error = 0.0;   // quadrature: refinement difference in probability
  bool impossible = false;  // sis: every weight was zero

  double prob() const { return std::exp(log_prob); }
};

// ---------------------------------------------------------------------------
// Quadrature
//
// Pr(pi) = int f_1(x_1) int_{x_2 < x_1} f_2(x_2) ... dx, evaluated
// innermost-first as repeated cumulative integrals on one shared grid:
//   g_k(x) = int_{-inf}^x f_k(y) prod_{tail c} F_c(y) dy,
//   g_j(x) = int_{-inf}^x f_j(y) g_{j+1}(y) dy,       Pr = g_1(+inf).
// For a total ranking the innermost integral is the CDF of the last item.
// Each panel carries Chebyshev-Lobatto nodes and a spectral cumulative
// integration matrix, so smooth integrands converge geometrically and the
// cost is linear in m.

inline constexpr int kMaxQuadratureDim = 12;

namespace detail {

inline constexpr int kChebNodes = 17;

struct ChebyshevPanel {
  std::array<double, kChebNodes> t{};  // ascending nodes on [-1, 1]
  // cum[k][i]: weight of f(t_i) in int_{-1}^{t_k} f.
  std::array<std::array<double, kChebNodes>, kChebNodes> cum{};

  ChebyshevPanel() {
    constexpr int p = kChebNodes, N = p - 1;
    using ld = long double;
    const ld pi = std::numbers::pi_v<long double>;
    std::array<ld, p> tl{};
    for (int k = 0; k < p; ++k) tl[k] = -std::cos(pi * k / N);
    for (int k = 0; k < p; ++k) t[k] = static_cast<double>(tl[k]);
    // Chebyshev polynomials T_n at the nodes (and T_{N+1}).
    auto cheb = [](int n, ld x) {
      if (n == 0) return ld{1};
      ld a = 1, b = x;
      for (int j = 2; j <= n; ++j) {
        const ld c = 2 * x * b - a;
        a = b;
        b = c;
      }
      return b;
    };
    // int_{-1}^{x} T_n.
    auto cheb_int = [&](int n, ld x) -> ld {
      if (n == 0) return x + 1;
      if (n == 1) return (x * x - 1) / 2;
      const ld sgn = (n % 2 == 0) ? 1 : -1;  // T_n(-1) = (-1)^n
      const ld at_x = cheb(n + 1, x) / (2 * (n + 1)) - cheb(n - 1, x) / (2 * (n - 1));
      const ld at_m1 = -sgn / (2 * (n + 1)) + sgn / (2 * (n - 1));
      return at_x - at_m1;
    };
    // Lagrange basis l_i = sum_n c_{n,i} T_n with the discrete Chebyshev
    // transform on Lobatto nodes.
    for (int i = 0; i < p; ++i) {
      const ld wi = (i == 0 || i == N) ? ld{0.5} : ld{1};
      std::array<ld, p> c{};
      for (int n = 0; n <= N; ++n) {
        const ld wn = (n == 0 || n == N) ? ld{0.5} : ld{1};
        c[n] = 2 * wn * wi * cheb(n, tl[i]) / N;
      }
      for (int k = 0; k < p; ++k) {
        ld s = 0;
        for (int n = 0; n <= N; ++n) s += c[n] * cheb_int(n, tl[k]);
        cum[k][i] = static_cast<double>(s);
      }
    }
  }
};

inline const ChebyshevPanel& chebyshev_panel() {
  static const ChebyshevPanel panel;
  return panel;
}

// Breakpoints every half scale unit across each alternative's effective
// support; outside every window all densities are negligible.
inline std::vector<double> base_breakpoints(std::span<const LocationFamily> dists) {
  std::vector<double> pts;
  for (const auto& d : dists) {
    const double lo = d.kind == FamilyKind::normal ? -12.0 : -4.0;
    const double hi = d.kind == FamilyKind::normal ? 12.0 : 46.0;
    for (double z = lo; z <= hi + 1e-12; z += 0.5) pts.push_back(d.location + d.scale * z);
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double x : pts)
    if (out.empty() || x - out.back() > 1e-9 * std::max(1.0, std::abs(x))) out.push_back(x);
  return out;
}

}  // namespace detail

// Densities and CDFs of every alternative tabulated on a panel grid.
class QuadratureGrid {
 public:
  QuadratureGrid(std::span<const LocationFamily> dists, int level) : m_(static_cast<int>(dists.size())) {
    const auto& cheb = detail::chebyshev_panel();
    const auto brk = detail::base_breakpoints(dists);
    const int split = 1 << level;
    for (std::size_t b = 0; b + 1 < brk.size(); ++b) {
      const double w = (brk[b + 1] - brk[b]) / split;
      for (int s = 0; s < split; ++s) {
        const double a = brk[b] + s * w;
        const double z = (s + 1 == split) ? brk[b + 1] : a + w;
        half_.push_back(0.5 * (z - a));
        for (int k = 0; k < detail::kChebNodes; ++k) x_.push_back(a + 0.5 * (z - a) * (cheb.t[k] + 1.0));
      }
    }
    pdf_.assign(m_, std::vector<double>(x_.size()));
    cdf_.assign(m_, std::vector<double>(x_.size()));
    for (int j = 0; j < m_; ++j)
      for (std::size_t k = 0; k < x_.size(); ++k) {
        pdf_[j][k] = pdf(dists[j], x_[k]);
        cdf_[j][k] = cdf(dists[j], x_[k]);
      }
  }

  int size() const { return m_; }
  std::size_t nodes() const { return x_.size(); }

  // Pr of the completed ballot.
  double rank_prob(const CompletedBallot& b) const {
    if (b.m != m_) throw DataError("quadrature: ballot dimension differs from the model");
    std::vector<int> prefix = b.prefix;
    std::vector<int> tail = b.tail;
    if (tail.empty()) {
      tail.push_back(prefix.back());
      prefix.pop_back();
    }
    if (prefix.empty()) return 1.0;
    const std::size_t n = x_.size();
    std::vector<double> h(n, 1.0), g(n);
    for (int c : tail)
      for (std::size_t k = 0; k < n; ++k) h[k] *= cdf_[c][k];
    for (int s = static_cast<int>(prefix.size()) - 1; s >= 0; --s) {
      const auto& f = pdf_[prefix[s]];
      for (std::size_t k = 0; k < n; ++k) h[k] *= f[k];
      cumulative(h, g);
      h.swap(g);
    }
    return std::max(h.back(), 0.0);
  }

 private:
  void cumulative(const std::vector<double>& h, std::vector<double>& g) const {
    const auto& cheb = detail::chebyshev_panel();
    constexpr int p = detail::kChebNodes;
    double carry = 0.0;
    for (std::size_t q = 0; q < half_.size(); ++q) {
      const double* hv = &h[q * p];
      double* gv = &g[q * p];
      for (int k = 0; k < p; ++k) {
        double s = 0.0;
        for (int i = 0; i < p; ++i) s += cheb.cum[k][i] * hv[i];
        gv[k] = carry + half_[q] * s;
      }
      carry = gv[p - 1];
    }
  }

  int m_;
  std::vector<double> x_, half_;
  std::vector<std::vector<double>> pdf_, cdf_;
};

struct QuadratureOptions {
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  int max_level = 5;
};

// Probabilities of several ballots from the same model, refined by halving
// every panel until successive levels agree for all ballots.
inline std::vector<RankProbEstimate> rank_probs_quadrature(std::span<const CompletedBallot> ballots,
                                                           std::span<const LocationFamily> dists,
                                                           const QuadratureOptions& opt = {}) {
  const int m = static_cast<int>(dists.size());
  if (m > kMaxQuadratureDim)
    throw DataError("quadrature supports at most " + std::to_string(kMaxQuadratureDim) +
                    " alternatives, got " + std::to_string(m));
  std::vector<double> prev, cur;
  auto eval = [&](int level) {
    const QuadratureGrid grid(dists, level);
    std::vector<double> out;
    out.reserve(ballots.size());
    for (const auto& b : ballots) out.push_back(grid.rank_prob(b));
    return out;
  };
  prev = eval(0);
  std::vector<RankProbEstimate> res(ballots.size());
  for (int level = 1; level <= opt.max_level; ++level) {
    cur = eval(level);
    bool ok = true;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double diff = std::abs(cur[i] - prev[i]);
      res[i].abs_error = diff;
      if (diff > std::max(opt.abs_tol, opt.rel_tol * cur[i])) ok = false;
    }
    prev.swap(cur);
    if (ok) break;
  }
  for (std::size_t i = 0; i < prev.size(); ++i) {
    res[i].log_prob = std::log(prev[i]);
    res[i].method = ProbMethod::quadrature;
    res[i].impossible = !(prev[i] > 0.0);
  }
  return res;
}

inline RankProbEstimate rank_prob_quadrature(const CompletedBallot& b, std::span<const LocationFamily> dists,
                                             const QuadratureOptions& opt = {}) {
  return rank_probs_quadrature(std::span(&b, 1), dists, opt)[0];
}

inline RankProbEstimate rank_prob_quadrature(const Ranking& r, std::span<const LocationFamily> dists,
                                             const QuadratureOptions& opt = {}) {
  return rank_prob_quadrature(complete_partial(r), dists, opt);
}

// ---------------------------------------------------------------------------
// Sequential importance sampling
//
// x_pi(1) from its marginal, then each later prefix item truncated above by
// the previous draw; the weight is the product of the truncation masses (and
// the tail CDFs at the last prefix value), an unbiased estimate of Pr(pi).

inline RankProbEstimate rank_prob_sis(const CompletedBallot& b, std::span<const LocationFamily> dists,
                                      int n_draws, Rng& rng) {
  if (n_draws < 100) throw DataError("rank_prob_sis needs at least 100 draws");
  if (static_cast<int>(dists.size()) != b.m) throw DataError("rank_prob_sis: dimension mismatch");
  std::vector<int> prefix = b.prefix;
  std::vector<int> tail = b.tail;
  if (tail.empty()) {
    tail.push_back(prefix.back());
    prefix.pop_back();
  }
  RankProbEstimate est;
  est.method = ProbMethod::sis;
  if (prefix.empty()) return est;

  std::vector<double> lw(n_draws);
  for (int d = 0; d < n_draws; ++d) {
    double w = 0.0;
    double upper = sample(dists[prefix[0]], rng);
    for (std::size_t s = 1; s < prefix.size() && w > -kInf; ++s) {
      const auto& dist = dists[prefix[s]];
      const double lc = log_cdf(dist, upper);
      w += lc;
      if (lc == -kInf) break;
      upper = truncated_sample(dist, -kInf, upper, rng);
    }
    for (std::size_t c = 0; c < tail.size() && w > -kInf; ++c) w += log_cdf(dists[tail[c]], upper);
    lw[d] = w;
  }
  const double top = *std::max_element(lw.begin(), lw.end());
  if (top == -kInf) {
    est.log_prob = -kInf;
    est.std_err = kInf;
    est.impossible = true;
    return est;
  }
  double sum = 0.0, sum2 = 0.0;
  for (double v : lw) {
    const double e = std::exp(v - top);
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / n_draws;
  const double var = std::max(sum2 / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1.0);
  est.log_prob = top + std::log(mean);
  est.std_err = std::sqrt(var / n_draws) / mean;  // delta method on log
  return est;
}

inline RankProbEstimate rank_prob_sis(const Ranking& r, std::span<const LocationFamily> dists, int n_draws,
                                      Rng& rng) {
  return rank_prob_sis(complete_partial(r), dists, n_draws, rng);
}

// Plackett-Luce form of a Gumbel RUM with a common scale beta:
// lambda_j = exp(theta_j / beta).
inline std::optional<std::vector<double>> gumbel_as_pl(std::span<const LocationFamily> dists) {
  if (dists.empty()) return std::nullopt;
  const double beta = dists[0].scale;
  double top = -kInf;
  for (const auto& d : dists) {
    if (d.kind != FamilyKind::gumbel || d.scale != beta) return std::nullopt;
    top = std::max(top, d.location / beta);
  }
  std::vector<double> lambda;
  for (const auto& d : dists) lambda.push_back(std::exp(d.location / beta - top));
  return lambda;
}

// ---------------------------------------------------------------------------
// Models and likelihoods

enum class ModelKind { normal, normal_freevar, gumbel, pl };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::normal: return "normal";
    case ModelKind::normal_freevar: return "normal-freevar";
    case ModelKind::gumbel: return "gumbel";
    case ModelKind::pl: return "pl";
  }
  return "?";
}

inline ModelKind parse_model(std::string_view s) {
  if (s == "normal") return ModelKind::normal;
  if (s == "normal-freevar" || s == "normal_freevar") return ModelKind::normal_freevar;
  if (s == "gumbel") return ModelKind::gumbel;
  if (s == "pl") return ModelKind::pl;
  throw DataError("unknown model '" + std::string(s) + "'");
}

// Free parameters under theta_0 = 0: m - 1 locations, plus m variances for
// the free-variance normal model.
inline int count_free_params(ModelKind k, int m) {
  return k == ModelKind::normal_freevar ? 2 * m - 1 : m - 1;
}

struct FittedModel {
  ModelKind kind = ModelKind::normal;
  std::vector<double> theta;  // for pl: ln lambda_j - ln lambda_0
  std::vector<double> sigma;  // scales for the RUM kinds; empty means 1

  int size() const { return static_cast<int>(theta.size()); }

  std::vector<LocationFamily> distributions() const {
    const auto family = kind == ModelKind::normal || kind == ModelKind::normal_freevar ? FamilyKind::normal
                                                                                       : FamilyKind::gumbel;
    return located(family, theta, sigma);
  }

  std::vector<double> lambda() const { return PLParams::from_theta(theta).lambda; }
};

enum class LLMethod { automatic, quadrature, sis, closed_form };

struct LLOptions {
  LLMethod method = LLMethod::automatic;
  int sis_draws = 10000;
  std::uint64_t seed = 0;
  QuadratureOptions quadrature;
};

struct LLEstimate {
  double value = 0.0;
  double std_err = 0.0;
  ProbMethod method = ProbMethod::closed_form;
  // Per distinct ballot (in profile order): log Pr and its standard error.
  std::vector<double> terms;
  std::vector<double> term_se;
};

// sum_i weight_i log Pr(pi^i | model); standard errors of independent
// per-ballot estimates combine in quadrature.
inline LLEstimate log_likelihood(const Profile& p, const FittedModel& model, const LLOptions& opt = {}) {
  const int m = p.num_alternatives();
  if (model.size() != m) throw DataError("model dimension differs from the profile");
  LLEstimate out;
  std::vector<CompletedBallot> ballots;
  for (const auto& b : p.ballots()) ballots.push_back(complete_partial(b.ranking));

  std::optional<std::vector<double>> lambda;
  const auto dists = model.kind == ModelKind::pl ? std::vector<LocationFamily>{} : model.distributions();
  if (model.kind == ModelKind::pl) lambda = model.lambda();
  else if (model.kind == ModelKind::gumbel) lambda = gumbel_as_pl(dists);

  ProbMethod method;
  switch (opt.method) {
    case LLMethod::closed_form:
      if (!lambda) throw DataError("no closed-form likelihood for model '" + std::string(to_string(model.kind)) + "'");
      method = ProbMethod::closed_form;
      break;
    case LLMethod::quadrature: method = ProbMethod::quadrature; break;
    case LLMethod::sis: method = ProbMethod::sis; break;
    default:
      method = lambda ? ProbMethod::closed_form
                      : (m <= kMaxQuadratureDim ? ProbMethod::quadrature : ProbMethod::sis);
  }
  if (model.kind == ModelKind::pl && method != ProbMethod::closed_form) {
    // Plackett-Luce is the Gumbel RUM with unit scale.
    FittedModel g{ModelKind::gumbel, model.theta, {}};
    LLOptions o = opt;
    return log_likelihood(p, g, o);
  }
  out.method = method;
  out.terms.resize(ballots.size());
  out.term_se.assign(ballots.size(), 0.0);
  if (method == ProbMethod::closed_form) {
    for (std::size_t i = 0; i < ballots.size(); ++i) out.terms[i] = pl_log_prob(ballots[i], *lambda);
  } else if (method == ProbMethod::quadrature) {
    const auto est = rank_probs_quadrature(ballots, dists, opt.quadrature);
    for (std::size_t i = 0; i < ballots.size(); ++i) out.terms[i] = est[i].log_prob;
  } else {
    for (std::size_t i = 0; i < ballots.size(); ++i) {
      Rng rng(derive_seed(opt.seed, {i}));
      const auto est = rank_prob_sis(ballots[i], dists, opt.sis_draws, rng);
      out.terms[i] = est.log_prob;
      out.term_se[i] = est.std_err;
    }
  }
  double var = 0.0;
  for (std::size_t i = 0; i < ballots.size(); ++i) {
    const double w = p.ballots()[i].weight;
    out.value += w * out.terms[i];
    var += (w * out.term_se[i]) * (w * out.term_se[i]);
  }
  out.std_err = std::sqrt(var);
  return out;
}

// ---------------------------------------------------------------------------
// Fitting by model kind

struct ModelSpec {
  ModelKind kind = ModelKind::normal;
  FitConfig fit;  // RUM kinds; fit.scale fixes the normal / gumbel scales
  double pl_tol = 1e-10;
  int pl_max_iters = 100000;
  // Fit Plackett-Luce even when the comparison graph is not strongly connected (the MLE does not exist).
  bool pl_allow_unbounded = false;
};

struct ModelFit {
  FittedModel model;
  std::optional<FitResult> em;  // absent for pl
  std::optional<PLFitResult> pl;
};

inline ModelFit fit_model(const Profile& p, const ModelSpec& spec) {
  ModelFit out;
  out.model.kind = spec.kind;
  if (spec.kind == ModelKind::pl) {
    auto r = pl_fit(p, spec.pl_tol, spec.pl_max_iters, !spec.pl_allow_unbounded);
    out.model.theta = r.params.theta();
    out.pl = std::move(r);
    return out;
  }
  FitConfig cfg = spec.fit;
  cfg.estimate_variance = spec.kind == ModelKind::normal_freevar;
  const auto family = spec.kind == ModelKind::gumbel ? FamilyKind::gumbel : FamilyKind::normal;
  auto r = fit(p, family, cfg);
  out.model.theta = r.theta;
  out.model.sigma = r.sigma;
  out.em = std::move(r);
  return out;
}

// ---------------------------------------------------------------------------
// Model comparison

struct ModelReport {
  std::string model_a, model_b;
  int k_a = 0, k_b = 0;
  int n_train = 0, n_holdout = 0;
  double ll_a = 0.0, ll_b = 0.0;            // training log-likelihoods
  double pred_ll_a = 0.0, pred_ll_b = 0.0;  // holdout log-likelihoods
  // a - b; positive ll/pred-ll differences and negative aic/bic differences
  // favor model a.
  double ll_diff = 0.0, pred_ll_diff = 0.0, aic_diff = 0.0, bic_diff = 0.0;
  // Estimator error of the differences (nonzero only for sampled likelihoods).
  double ll_diff_se = 0.0, pred_ll_diff_se = 0.0, aic_diff_se = 0.0, bic_diff_se = 0.0;
  // Sampling error of the holdout difference from per-ballot paired terms.
  double pred_ll_diff_sampling_se = 0.0;
  int split_retries = 0;
  std::vector<std::string> notices;
};

inline double aic(double ll, int k) { return 2.0 * k - 2.0 * ll; }
inline double bic(double ll, int k, int n) { return k * std::log(static_cast<double>(n)) - 2.0 * ll; }

struct CompareOptions {
  int holdout = 100;
  std::uint64_t seed = 0;
  int max_split_retries = 20;
  LLOptions ll;
};

inline ModelReport model_compare(const Profile& p, const ModelSpec& a, const ModelSpec& b,
                                 const CompareOptions& opt) {
  const long long n = p.total_weight();
  if (opt.holdout < 0 || opt.holdout >= n)
    throw DataError("holdout size must lie in [0, n), got " + std::to_string(opt.holdout));
  const int m = p.num_alternatives();
  const auto agents = p.agents();

  ModelReport rep;
  rep.model_a = std::string(to_string(a.kind));
  rep.model_b = std::string(to_string(b.kind));
  rep.k_a = count_free_params(a.kind, m);
  rep.k_b = count_free_params(b.kind, m);

  std::optional<Profile> train, holdout;
  for (int attempt = 0; attempt <= opt.max_split_retries; ++attempt) {
    std::vector<std::size_t> idx(agents.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(opt.seed, {0x5eedULL, static_cast<std::uint64_t>(attempt)}));
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    std::vector<Ranking> tr, ho;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (static_cast<long long>(i) < opt.holdout ? ho : tr).push_back(agents[idx[i]]);
    auto cand = Profile::from_rankings(m, tr, p.names());
    if (check_condition1(cand).satisfied) {
      train = std::move(cand);
      if (!ho.empty()) holdout = Profile::from_rankings(m, ho, p.names());
      break;
    }
    rep.split_retries = attempt + 1;
  }
  if (!train) {
    throw ConditionViolation("every train/holdout split violated the connectivity condition after " +
                                 std::to_string(opt.max_split_retries) + " retries",
                             check_condition1(p));
  }
  if (rep.split_retries > 0)
    rep.notices.push_back("resampled the split " + std::to_string(rep.split_retries) +
                          " time(s) to satisfy the connectivity condition on the training part");
  rep.n_train = static_cast<int>(train->total_weight());
  rep.n_holdout = holdout ? static_cast<int>(holdout->total_weight()) : 0;

  // Both models share their random streams, so identical specs give zero
  // differences and sampled differences have lower variance.
  ModelSpec sa = a, sb = b;
  sa.fit.gibbs.seed = sb.fit.gibbs.seed = derive_seed(opt.seed, {0xf17ULL});
  const auto fa = fit_model(*train, sa);
  const auto fb = fit_model(*train, sb);

  LLOptions la = opt.ll, lb = opt.ll;
  la.seed = lb.seed = derive_seed(opt.seed, {0x11ULL});
  const auto tra = log_likelihood(*train, fa.model, la);
  const auto trb = log_likelihood(*train, fb.model, lb);
  rep.ll_a = tra.value;
  rep.ll_b = trb.value;
  rep.ll_diff = rep.ll_a - rep.ll_b;
  rep.ll_diff_se = std::hypot(tra.std_err, trb.std_err);
  if (holdout) {
    la.seed = lb.seed = derive_seed(opt.seed, {0x22ULL});
    const auto hoa = log_likelihood(*holdout, fa.model, la);
    const auto hob = log_likelihood(*holdout, fb.model, lb);
    rep.pred_ll_a = hoa.value;
    rep.pred_ll_b = hob.value;
    rep.pred_ll_diff = rep.pred_ll_a - rep.pred_ll_b;
    rep.pred_ll_diff_se = std::hypot(hoa.std_err, hob.std_err);
    // Paired per-agent differences.
    double s = 0.0, s2 = 0.0;
    const auto& hb = holdout->ballots();
    for (std::size_t i = 0; i < hb.size(); ++i) {
      const double d = hoa.terms[i] - hob.terms[i];
      s += hb[i].weight * d;
      s2 += hb[i].weight * d * d;
    }
    const double nh = rep.n_holdout;
    if (nh > 1) {
      const double var = std::max(s2 / nh - (s / nh) * (s / nh), 0.0) * nh / (nh - 1.0);
      rep.pred_ll_diff_sampling_se = std::sqrt(nh * var);
    }
  }
  rep.aic_diff = aic(rep.ll_a, rep.k_a) - aic(rep.ll_b, rep.k_b);
  rep.bic_diff = bic(rep.ll_a, rep.k_a, rep.n_train) - bic(rep.ll_b, rep.k_b, rep.n_train);
  rep.aic_diff_se = 2.0 * rep.ll_diff_se;
  rep.bic_diff_se = 2.0 * rep.ll_diff_se;
  for (const auto* f : {&fa, &fb})
    if (f->em)
      for (const auto& note : f->em->notices) rep.notices.push_back(std::string(to_string(f->model.kind)) + ": " + note);
  return rep;
}

// ---------------------------------------------------------------------------
// Concavity probe

struct ConcavityReport {
  double max_eigenvalue = -kInf;
  std::vector<double> point_max_eigenvalue;
  std::vector<std::vector<double>> points;
};

// Numeric Hessian (central differences) of the quadrature log-likelihood at
// random theta in [-3, 3]^m; reports the largest eigenvalue seen.
inline Eigen::MatrixXd numeric_hessian(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h) {
  const int m = static_cast<int>(x.size());
  Eigen::MatrixXd H(m, m);
  const double f0 = f(x);
  auto at = [&](int i, double di, int j, double dj) {
    auto y = x;
    y[i] += di;
    if (j >= 0) y[j] += dj;
    return f(y);
  };
  for (int i = 0; i < m; ++i) {
    H(i, i) = (at(i, h, -1, 0) - 2.0 * f0 + at(i, -h, -1, 0)) / (h * h);
    for (int j = i + 1; j < m; ++j) {
      const double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

inline ConcavityReport concavity_probe(const Profile& p, FamilyKind family, int n_points, std::uint64_t seed,
                                       double step = 1e-3, std::span<const double> scale = {}) {
  const int m = p.num_alternatives();
  if (m > 4) throw DataError("concavity_probe supports at most 4 alternatives");
  const std::vector<double> sc = scale.empty() ? std::vector<double>(m, 1.0)
                                               : std::vector<double>(scale.begin(), scale.end());
  const ModelKind kind = family == FamilyKind::normal ? ModelKind::normal : ModelKind::gumbel;
  LLOptions opt;
  opt.method = LLMethod::quadrature;
  auto ll = [&](const std::vector<double>& th) {
    return log_likelihood(p, FittedModel{kind, th, sc}, opt).value;
  };
  ConcavityReport rep;
  Rng rng(seed);
  for (int k = 0; k < n_points; ++k) {
    std::vector<double> th(m);
    for (double& t : th) t = -3.0 + 6.0 * rng.uniform();
    const Eigen::MatrixXd H = numeric_hessian(ll, th, step);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    rep.point_max_eigenvalue.push_back(top);
    rep.points.push_back(th);
    rep.max_eigenvalue = std::max(rep.max_eigenvalue, top);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Experiment harnesses

struct TauSummary {
  int size = 0;  // n (recovery) or subsample size (robustness)
  double mean = 0.0, ci_low = 0.0, ci_high = 0.0;
  int trials = 0;  // successful trials
  int failed = 0;  // excluded trials (connectivity condition violated or fit failure)
  std::vector<double> taus;
};

namespace detail {

inline TauSummary summarize(int size, std::vector<double> taus, int failed) {
  TauSummary s;
  s.size = size;
  s.failed = failed;
  s.trials = static_cast<int>(taus.size());
  if (!taus.empty()) {
    double sum = 0.0, sum2 = 0.0;
    for (double t : taus) {
      sum += t;
      sum2 += t * t;
    }
    const double k = static_cast<double>(taus.size());
    s.mean = sum / k;
    const double var = k > 1 ? std::max(sum2 / k - s.mean * s.mean, 0.0) * k / (k - 1.0) : 0.0;
    const double half = 1.96 * std::sqrt(var / k);
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
  }
  s.taus = std::move(taus);
  return s;
}

}  // namespace detail

// For each n and trial: draw n rankings from the RUM with parameters
// theta_star, fit `spec`, and score Kendall tau between the fitted and true
// orders. Mean and 95% normal-approximation interval per n.
inline std::vector<TauSummary> recovery_experiment(std::span<const double> theta_star, FamilyKind family,
                                                   std::span<const double> scale, std::span<const int> n_list,
                                                   int trials, const ModelSpec& spec, std::uint64_t seed) {
  const int m = static_cast<int>(theta_star.size());
  const auto dists = located(family, theta_star, scale);
  const Ranking truth = order_by_score(std::vector<double>(theta_star.begin(), theta_star.end()));
  std::vector<TauSummary> out;
  for (int n : n_list) {
    if (n < 1) throw DataError("recovery_experiment: sample sizes must be positive");
    std::vector<double> taus;
    int failed = 0;
    for (int t = 0; t < trials; ++t) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)}));
      std::vector<Ranking> rs;
      rs.reserve(n);
      for (int i = 0; i < n; ++i) rs.push_back(sample_ranking(dists, rng));
      const auto prof = Profile::from_rankings(m, rs);
      ModelSpec s = spec;
      s.fit.gibbs.seed = derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t), 1});
      try {
        const auto f = fit_model(prof, s);
        taus.push_back(kendall_tau(order_by_score(f.model.theta), truth));
      } catch (const Error&) {
        ++failed;
      }
    }
    out.push_back(detail::summarize(n, std::move(taus), failed));
  }
  return out;
}

struct RobustnessResult {
  Ranking reference;  // order fitted on the full profile
  std::vector<TauSummary> sizes;
};

// Subsamples (without replacement) of each size are fitted and compared with
// the full-data order; subsamples violating the connectivity condition are excluded and
// counted.
inline RobustnessResult robustness_experiment(const Profile& p, std::span<const int> sizes, int repeats,
                                              const ModelSpec& spec, std::uint64_t seed) {
  const int m = p.num_alternatives();
  const auto agents = p.agents();
  RobustnessResult res;
  ModelSpec full = spec;
  full.fit.gibbs.seed = derive_seed(seed, {0xf11ULL});
  res.reference = order_by_score(fit_model(p, full).model.theta);
  for (int size : sizes) {
    if (size < 1 || size > static_cast<long long>(agents.size()))
      throw DataError("subsample size must lie in [1, n]");
    std::vector<double> taus;
    int failed = 0;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(r)}));
      std::vector<std::size_t> idx(agents.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (int i = 0; i < size; ++i)
        std::swap(idx[i], idx[i + rng.below(idx.size() - static_cast<std::size_t>(i))]);
      std::vector<Ranking> rs;
      for (int i = 0; i < size; ++i) rs.push_back(agents[idx[i]]);
      const auto sub = Profile::from_rankings(m, rs, p.names());
      if (!check_condition1(sub).satisfied) {
        ++failed;
        continue;
      }
      // A full-size subsample is the full profile and reuses its chain seeds.
      ModelSpec s = spec;
      s.fit.gibbs.seed = size == static_cast<int>(agents.size()) ? full.fit.gibbs.seed
                                                                 : derive_seed(seed, {static_cast<std::uint64_t>(size),
                                                                                      static_cast<std::uint64_t>(r), 1});
      try {
        const auto f = fit_model(sub, s);
        taus.push_back(kendall_tau(order_by_score(f.model.theta), res.reference));
      } catch (const Error&) {
        ++failed;
      }
    }
    res.sizes.push_back(detail::summarize(size, std::move(taus), failed));
  }
  return res;
}

}  // namespace rumfit
