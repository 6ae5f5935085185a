#pragma once

// Plackett-Luce: sequential-choice likelihood and minorize-maximize fitting.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rumfit/error.hpp"
#include "rumfit/prefdata.hpp"

namespace rumfit {

// Thrown when a fit needs a strongly connected comparison graph and the data lack one.
class ConditionViolation : public DataError {
 public:
  ConditionViolation(const std::string& what, Condition1Result witness)
      : DataError(what), witness_(std::move(witness)) {}
  const Condition1Result& witness() const noexcept { return witness_; }

 private:
  Condition1Result witness_;
};

// Positive weights with sum 1.
struct PLParams {
  std::vector<double> lambda;

  static PLParams uniform(int m) { return {std::vector<double>(m, 1.0 / m)}; }

  // Normalizes any positive vector.
  static PLParams from_weights(std::vector<double> w) {
    double sum = 0.0;
    for (double v : w) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DataError("Plackett-Luce weights must be positive");
      sum += v;
    }
    for (double& v : w) v /= sum;
    return {std::move(w)};
  }

  // lambda_j = exp(theta_j), normalized.
  static PLParams from_theta(std::span<const double> theta) {
    const double top = *std::max_element(theta.begin(), theta.end());
    std::vector<double> w(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) w[j] = std::exp(theta[j] - top);
    return from_weights(std::move(w));
  }

  // theta_j = ln lambda_j - ln lambda_0, so theta_0 = 0.
  std::vector<double> theta() const {
    std::vector<double> t(lambda.size());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = std::log(lambda[j]) - std::log(lambda[0]);
    return t;
  }

  int size() const { return static_cast<int>(lambda.size()); }
};

// Sum over prefix positions of ln lambda_pi(j) - ln(sum of the weights still
// unchosen); the unranked tail stays in every denominator. Any positive
// weights are accepted; the result does not depend on their scale.
inline double pl_log_prob(const CompletedBallot& b, std::span<const double> lambda) {
  if (static_cast<int>(lambda.size()) != b.m) throw DataError("pl_log_prob: dimension mismatch");
  // Denominators as suffix sums, accumulated from the bottom to avoid
  // cancellation.
  double remaining = 0.0;
  for (int c : b.tail) remaining += lambda[c];
  const int k = static_cast<int>(b.prefix.size());
  const int stages = k - (b.is_total() ? 1 : 0);
  double lp = 0.0;
  for (int s = k - 1; s >= 0; --s) {
    const double l = lambda[b.prefix[s]];
    remaining += l;
    if (s < stages) lp += std::log(l) - std::log(remaining);
  }
  return lp;
}

inline double pl_log_prob(const Ranking& r, std::span<const double> lambda) {
  return pl_log_prob(complete_partial(r), lambda);
}

inline double pl_log_prob(const Ranking& r, const PLParams& p) { return pl_log_prob(r, p.lambda); }

inline double pl_log_likelihood(const Profile& p, std::span<const double> lambda) {
  double ll = 0.0;
  for (const auto& b : p.ballots()) ll += b.weight * pl_log_prob(b.ranking, lambda);
  return ll;
}

struct PLFitResult {
  PLParams params;
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
};

// Hunter's MM update for (partial) Plackett-Luce data:
//   lambda_j <- w_j / sum over choice stages containing j of 1 / (stage weight),
// stages with a single remaining alternative excluded.
// With enforce_condition1 off, data violating the connectivity condition
// are still iterated (weights floored at 1e-12 of the total) and the result
// reports no convergence.
inline PLFitResult pl_fit(const Profile& p, double tol = 1e-9, int max_iters = 10000,
                          bool enforce_condition1 = true) {
  const auto cond = check_condition1(p);
  if (!cond.satisfied && enforce_condition1)
    throw ConditionViolation("Plackett-Luce MLE does not exist: the comparison graph is not strongly connected",
                             cond);
  const int m = p.num_alternatives();
  std::vector<CompletedBallot> ballots;
  std::vector<double> weights;
  std::vector<double> wins(m, 0.0);
  for (const auto& b : p.ballots()) {
    ballots.push_back(complete_partial(b.ranking));
    weights.push_back(b.weight);
    const auto& cb = ballots.back();
    const int stages = static_cast<int>(cb.prefix.size()) - (cb.is_total() ? 1 : 0);
    for (int s = 0; s < stages; ++s) wins[cb.prefix[s]] += b.weight;
  }

  PLFitResult res;
  res.params = PLParams::uniform(m);
  if (m == 1) {
    res.converged = true;
    return res;
  }
  auto& lambda = res.params.lambda;
  const double kFloor = cond.satisfied ? 0.0 : 1e-12;
  std::vector<double> denom(m), next(m);
  for (int it = 1; it <= max_iters; ++it) {
    std::fill(denom.begin(), denom.end(), 0.0);
    for (std::size_t i = 0; i < ballots.size(); ++i) {
      const auto& cb = ballots[i];
      const int stages = static_cast<int>(cb.prefix.size()) - (cb.is_total() ? 1 : 0);
      // Stage s chooses among prefix[s..] plus the tail. Accumulate 1/W_s
      // over stages; alternative prefix[k] belongs to stages 0..k, tail
      // members to all of them.
      double tail_weight = 0.0;
      for (int c : cb.tail) tail_weight += lambda[c];
      std::vector<double> stage_weight(stages);
      double w = tail_weight;
      for (int k = static_cast<int>(cb.prefix.size()) - 1; k >= 0; --k) {
        w += lambda[cb.prefix[k]];
        if (k < stages) stage_weight[k] = w;
      }
      double cum = 0.0;
      for (int k = 0; k < static_cast<int>(cb.prefix.size()); ++k) {
        if (k < stages) cum += 1.0 / stage_weight[k];
        denom[cb.prefix[k]] += weights[i] * cum;
      }
      for (int c : cb.tail) denom[c] += weights[i] * cum;
    }
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      next[j] = std::max(wins[j] / denom[j], kFloor);
      sum += next[j];
    }
    double change = 0.0;
    for (int j = 0; j < m; ++j) {
      next[j] /= sum;
      change = std::max(change, std::abs(next[j] - lambda[j]));
    }
    lambda.swap(next);
    res.iterations = it;
    if (change < tol) {
      res.converged = cond.satisfied;
      break;
    }
  }
  res.log_likelihood = pl_log_likelihood(p, lambda);
  return res;
}

}  // namespace rumfit
