#pragma once

// Per-agent Gibbs sampler over latent utilities consistent with one ballot,
// and the Rao-Blackwellized estimate of E[T(x_j) | ballot, theta].

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rumfit/efdist.hpp"
#include "rumfit/error.hpp"
#include "rumfit/prefdata.hpp"
#include "rumfit/rng.hpp"

namespace rumfit {

enum class UpdateScheme {
  // Each scan visits every coordinate once, in a fresh random order.
  permutation_scan,
  // Each update picks a uniformly random coordinate.
  random_site,
};

struct GibbsConfig {
  int n_samples = 1000;  // N: retained scans (N * m single-site updates)
  int rb_samples = 1;    // M: draws per visit when exact_rao_blackwell is off
  // Accumulate the exact conditional expectation of T at each visit (the
  // M -> infinity limit). When off, average T over rb_samples conditional
  // draws; rb_samples = 1 is the plain Gibbs estimator.
  bool exact_rao_blackwell = true;
  double thinning = 1.0;  // F in (0, 1]: fraction of updates retained
  int burn_in = 10;       // discarded full scans
  std::uint64_t seed = 0;
  UpdateScheme scheme = UpdateScheme::permutation_scan;

  void validate() const {
    if (n_samples < 1) throw DataError("Gibbs sample count must be positive");
    if (rb_samples < 1) throw DataError("Rao-Blackwell sample count must be positive");
    if (!(thinning > 0.0 && thinning <= 1.0)) throw DataError("thinning factor must lie in (0, 1]");
    if (n_samples * thinning < 1.0) throw DataError("thinning leaves no retained samples");
    if (burn_in < 0) throw DataError("burn-in must be nonnegative");
  }
};

struct LatentState {
  std::vector<double> x;
};

// Constraint bookkeeping for one completed ballot.
class ChainLayout {
 public:
  explicit ChainLayout(const CompletedBallot& b)
      : ballot_(b), slot_(b.m, -1) {
    for (std::size_t p = 0; p < b.prefix.size(); ++p) slot_[b.prefix[p]] = static_cast<int>(p);
  }

  const CompletedBallot& ballot() const { return ballot_; }
  int size() const { return ballot_.m; }

  struct Bounds {
    double lower, upper;
  };

  // Support of x_a given every other coordinate.
  Bounds bounds(const std::vector<double>& x, int a) const {
    const auto& prefix = ballot_.prefix;
    const int p = slot_[a];
    if (p < 0) return {-kInf, x[prefix.back()]};
    const double upper = p > 0 ? x[prefix[p - 1]] : kInf;
    double lower;
    if (p + 1 < static_cast<int>(prefix.size())) {
      lower = x[prefix[p + 1]];
    } else {
      lower = -kInf;
      for (int c : ballot_.tail) lower = std::max(lower, x[c]);
    }
    return {lower, upper};
  }

 private:
  CompletedBallot ballot_;
  std::vector<int> slot_;
};

// Prefix strictly descending and every tail value below the prefix minimum.
inline bool state_is_consistent(const LatentState& s, const CompletedBallot& b) {
  if (static_cast<int>(s.x.size()) != b.m) return false;
  for (double v : s.x)
    if (!std::isfinite(v)) return false;
  for (std::size_t i = 0; i + 1 < b.prefix.size(); ++i)
    if (!(s.x[b.prefix[i]] > s.x[b.prefix[i + 1]])) return false;
  for (int c : b.tail)
    if (!(s.x[c] < s.x[b.prefix.back()])) return false;
  return true;
}

// One independent draw per alternative, sorted and dealt out so that the
// largest values go to the prefix in order and the rest to the tail.
inline LatentState init_state(const CompletedBallot& b, std::span<const LocationFamily> dists,
                              Rng& rng) {
  if (static_cast<int>(dists.size()) != b.m) throw DataError("init_state: dimension mismatch");
  std::vector<double> draws(b.m);
  for (;;) {
    for (int j = 0; j < b.m; ++j) draws[j] = sample(dists[j], rng);
    std::sort(draws.begin(), draws.end(), std::greater<>());
    if (std::adjacent_find(draws.begin(), draws.end()) == draws.end()) break;
  }
  LatentState s;
  s.x.assign(b.m, 0.0);
  std::size_t k = 0;
  for (int a : b.prefix) s.x[a] = draws[k++];
  for (int c : b.tail) s.x[c] = draws[k++];
  return s;
}

// Resamples coordinate a from its truncated conditional; returns the draw
// together with the conditional moments of T.
inline TruncatedDraw update_site(LatentState& s, const ChainLayout& layout,
                                 std::span<const LocationFamily> dists, int a, Rng& rng) {
  const auto [lo, hi] = layout.bounds(s.x, a);
  const TruncatedDraw d = truncated_draw(dists[a], lo, hi, rng);
  s.x[a] = d.x;
  return d;
}

// A single-site update at a uniformly random position.
inline LatentState sweep(LatentState s, const CompletedBallot& ballot,
                         std::span<const LocationFamily> dists, Rng& rng) {
  const ChainLayout layout(ballot);
  const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(ballot.m)));
  const auto [lo, hi] = layout.bounds(s.x, a);
  s.x[a] = truncated_sample(dists[a], lo, hi, rng);
  return s;
}

// One full scan in random-permutation order.
inline void scan(LatentState& s, const ChainLayout& layout, std::span<const LocationFamily> dists,
                 Rng& rng, std::vector<int>& order) {
  const int m = layout.size();
  order.resize(m);
  std::iota(order.begin(), order.end(), 0);
  for (int i = m - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  for (int a : order) {
    const auto [lo, hi] = layout.bounds(s.x, a);
    s.x[a] = truncated_sample(dists[a], lo, hi, rng);
  }
}

struct SuffStats {
  std::vector<double> T;   // estimate of E[T(x_j) | ballot, theta]
  std::vector<double> T2;  // estimate of E[x_j^2 | ...] when requested (normal only)
};

// Burn-in, then n_samples * m single-site updates; the retained fraction F
// of updates each contributes a Rao-Blackwellized term for the visited
// coordinate. Deterministic given cfg.seed.
inline SuffStats estimate_suff_stats(const CompletedBallot& ballot,
                                     std::span<const LocationFamily> dists,
                                     const GibbsConfig& cfg, bool second_moment = false) {
  cfg.validate();
  const int m = ballot.m;
  if (static_cast<int>(dists.size()) != m) throw DataError("estimate_suff_stats: dimension mismatch");
  if (second_moment && std::any_of(dists.begin(), dists.end(),
                                   [](const auto& d) { return d.kind != FamilyKind::normal; }))
    throw DataError("second moments are only available for the normal family");

  Rng rng(cfg.seed);
  const ChainLayout layout(ballot);
  LatentState state = init_state(ballot, dists, rng);
  std::vector<int> order;

  const bool random_site = cfg.scheme == UpdateScheme::random_site;
  for (int b = 0; b < cfg.burn_in; ++b) {
    if (random_site) {
      for (int k = 0; k < m; ++k) state = sweep(std::move(state), ballot, dists, rng);
    } else {
      scan(state, layout, dists, rng, order);
    }
  }

  std::vector<double> sum_t(m, 0.0), sum_t2(m, 0.0);
  std::vector<long long> visits(m, 0);
  const long long total = static_cast<long long>(cfg.n_samples) * m;
  const double f = cfg.thinning;
  std::vector<double> draws_t(1);

  auto visit = [&](int a, long long u) {
    const bool retained = f >= 1.0 || std::floor((u + 1) * f) > std::floor(u * f);
    const auto [lo, hi] = layout.bounds(state.x, a);
    if (!retained) {
      state.x[a] = truncated_sample(dists[a], lo, hi, rng);
      return;
    }
    ++visits[a];
    if (cfg.exact_rao_blackwell) {
      const TruncatedDraw d = truncated_draw(dists[a], lo, hi, rng);
      sum_t[a] += d.moments.mean_T;
      if (second_moment) sum_t2[a] += d.moments.mean_T2;
      state.x[a] = d.x;
      return;
    }
    double acc_t = 0.0, acc_t2 = 0.0;
    for (int l = 0; l < cfg.rb_samples; ++l) {
      const double x = truncated_sample(dists[a], lo, hi, rng);
      if (l == 0) state.x[a] = x;
      acc_t += sufficient_statistic(dists[a], x);
      acc_t2 += x * x;
    }
    sum_t[a] += acc_t / cfg.rb_samples;
    if (second_moment) sum_t2[a] += acc_t2 / cfg.rb_samples;
  };

  long long u = 0;
  if (random_site) {
    for (; u < total; ++u) visit(static_cast<int>(rng.below(static_cast<std::uint64_t>(m))), u);
  } else {
    order.resize(m);
    while (u < total) {
      std::iota(order.begin(), order.end(), 0);
      for (int i = m - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
      for (int a : order) visit(a, u++);
      assert(state_is_consistent(state, ballot));
    }
  }

  SuffStats out;
  out.T.resize(m);
  if (second_moment) out.T2.resize(m);
  for (int a = 0; a < m; ++a) {
    if (visits[a] > 0) {
      out.T[a] = sum_t[a] / static_cast<double>(visits[a]);
      if (second_moment) out.T2[a] = sum_t2[a] / static_cast<double>(visits[a]);
    } else {
      // No retained visit (possible under random_site): use the conditional
      // expectation at the final state.
      const auto [lo, hi] = layout.bounds(state.x, a);
      const auto mom = truncated_moments(dists[a], lo, hi);
      out.T[a] = mom.mean_T;
      if (second_moment) out.T2[a] = mom.mean_T2;
    }
  }
  return out;
}

}  // namespace rumfit
