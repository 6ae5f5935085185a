#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rumfit/gibbs.hpp"

using namespace rumfit;

namespace {

const double kInvSqrtPi = 1.0 / std::sqrt(std::numbers::pi);

CompletedBallot ballot(std::vector<int> o, int m) { return complete_partial(Ranking(std::move(o), m)); }

std::vector<LocationFamily> std_normals(int m) { return located(FamilyKind::normal, std::vector<double>(m, 0.0), {}); }

GibbsConfig config(int n, std::uint64_t seed) {
  GibbsConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(InitState, SatisfiesConstraints) {
  Rng rng(1);
  const auto d2 = std_normals(2);
  auto s = init_state(ballot({0, 1}, 2), d2, rng);
  EXPECT_GT(s.x[0], s.x[1]);
  const auto d3 = std_normals(3);
  s = init_state(ballot({0, 2}, 3), d3, rng);
  EXPECT_GT(s.x[0], s.x[2]);
  EXPECT_LT(s.x[1], s.x[2]);
  std::mt19937_64 eng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const int m = 1 + static_cast<int>(eng() % 8);
    const auto b = complete_partial(oracle::random_ranking(m, true, eng));
    std::vector<double> th(m);
    for (auto& t : th) t = static_cast<double>(eng() % 7) - 3.0;
    const auto ds = located(eng() % 2 ? FamilyKind::normal : FamilyKind::gumbel, th, {});
    EXPECT_TRUE(state_is_consistent(init_state(b, ds, rng), b));
  }
}

TEST(ChainLayout, BoundsFollowNeighbours) {
  const auto b = ballot({2, 0}, 4);  // 2 > 0 > {1, 3}
  const ChainLayout layout(b);
  const std::vector<double> x{1.0, -0.5, 3.0, 0.2};
  auto bd = layout.bounds(x, 2);
  EXPECT_EQ(bd.lower, 1.0);
  EXPECT_EQ(bd.upper, kInf);
  bd = layout.bounds(x, 0);
  EXPECT_EQ(bd.lower, 0.2);
  EXPECT_EQ(bd.upper, 3.0);
  bd = layout.bounds(x, 1);
  EXPECT_EQ(bd.lower, -kInf);
  EXPECT_EQ(bd.upper, 1.0);
}

TEST(Sweep, ChangesOneCoordinateAndKeepsConsistency) {
  Rng rng(2);
  const auto b = ballot({0, 1}, 2);
  const auto d = std_normals(2);
  auto s = init_state(b, d, rng);
  for (int k = 0; k < 2000; ++k) {
    const auto next = sweep(s, b, d, rng);
    const int changed = (next.x[0] != s.x[0]) + (next.x[1] != s.x[1]);
    EXPECT_LE(changed, 1);
    ASSERT_TRUE(state_is_consistent(next, b));
    s = next;
  }
  const auto b5 = ballot({4, 1, 3}, 6);
  const auto d6 = located(FamilyKind::gumbel, std::vector<double>{0, 1, -1, 2, 0.5, -2}, {});
  auto s5 = init_state(b5, d6, rng);
  for (int k = 0; k < 5000; ++k) {
    s5 = sweep(s5, b5, d6, rng);
    ASSERT_TRUE(state_is_consistent(s5, b5));
  }
}

TEST(Scan, StationaryDistributionMatchesRejection) {
  const std::vector<double> theta{0.0, 0.0, 0.0};
  const auto d = std_normals(3);
  const auto b = ballot({0, 1, 2}, 3);
  const int n = 20000;
  const auto ref = oracle::ordered_normals_rejection(theta, {0, 1, 2}, n, 99);
  Rng rng(3);
  const ChainLayout layout(b);
  auto s = init_state(b, d, rng);
  std::vector<int> order;
  for (int k = 0; k < 50; ++k) scan(s, layout, d, rng, order);
  std::vector<std::vector<double>> chain(3), oracle_x(3);
  for (int k = 0; k < n; ++k) {
    for (int t = 0; t < 5; ++t) scan(s, layout, d, rng, order);
    for (int j = 0; j < 3; ++j) chain[j].push_back(s.x[j]);
  }
  for (const auto& x : ref)
    for (int j = 0; j < 3; ++j) oracle_x[j].push_back(x[j]);
  for (int j = 0; j < 3; ++j) EXPECT_GT(oracle::ks2_pvalue(chain[j], oracle_x[j]), 0.001) << "coordinate " << j;
}

TEST(SuffStats, SingleAlternativeIsUnconditionalMean) {
  const std::vector<LocationFamily> d{LocationFamily::normal(1.7)};
  auto c = config(4000, 5);
  const auto s = estimate_suff_stats(ballot({0}, 1), d, c);
  EXPECT_NEAR(s.T[0], 1.7, 3.0 / std::sqrt(4000.0));
  c.exact_rao_blackwell = false;
  EXPECT_NEAR(estimate_suff_stats(ballot({0}, 1), d, c).T[0], 1.7, 3.0 / std::sqrt(4000.0));
}

TEST(SuffStats, TwoNormalsMaxAndMin) {
  const auto d = std_normals(2);
  for (bool exact : {true, false}) {
    auto c = config(100000, 6);
    c.exact_rao_blackwell = exact;
    const auto s = estimate_suff_stats(ballot({0, 1}, 2), d, c);
    EXPECT_NEAR(s.T[0], kInvSqrtPi, 0.01) << "exact=" << exact;
    EXPECT_NEAR(s.T[1], -kInvSqrtPi, 0.01) << "exact=" << exact;
  }
  auto c = config(100000, 7);
  c.scheme = UpdateScheme::random_site;
  const auto s = estimate_suff_stats(ballot({0, 1}, 2), d, c);
  EXPECT_NEAR(s.T[0], kInvSqrtPi, 0.01);
  EXPECT_NEAR(s.T[1], -kInvSqrtPi, 0.01);
}

TEST(SuffStats, SecondMomentsOfOrderedPair) {
  // E[X_max^2] = E[X_min^2] = 1 for two standard normals.
  const auto s = estimate_suff_stats(ballot({0, 1}, 2), std_normals(2), config(50000, 8), true);
  EXPECT_NEAR(s.T2[0], 1.0, 0.02);
  EXPECT_NEAR(s.T2[1], 1.0, 0.02);
  EXPECT_THROW(estimate_suff_stats(ballot({0, 1}, 2), located(FamilyKind::gumbel, std::vector<double>{0, 0}, {}),
                                   config(10, 1), true),
               DataError);
}

TEST(SuffStats, PartialBallotTopOfThree) {
  // E[max of three standard normals] = 3 / (2 sqrt(pi)); the two unranked
  // alternatives share the remaining mass symmetrically.
  const auto s = estimate_suff_stats(ballot({0}, 3), std_normals(3), config(50000, 9));
  const double top = 1.5 * kInvSqrtPi;
  EXPECT_NEAR(s.T[0], top, 0.01);
  EXPECT_NEAR(s.T[1], -top / 2.0, 0.01);
  EXPECT_NEAR(s.T[2], -top / 2.0, 0.01);
}

TEST(SuffStats, SymmetryForEqualLocations) {
  const auto d = located(FamilyKind::normal, std::vector<double>{0.3, 0.3}, {});
  const auto s = estimate_suff_stats(ballot({1, 0}, 2), d, config(40000, 10));
  EXPECT_NEAR(s.T[0] - 0.3, -(s.T[1] - 0.3), 0.02);
}

TEST(SuffStats, GumbelAgreesWithClosedFormPairMoments) {
  // U_j = e^{-X_j} are i.i.d. Exp(1) and X_0 > X_1 means U_0 < U_1, so U_0 is
  // the minimum (mean 1/2) and U_1 the maximum (mean 3/2).
  const auto d = located(FamilyKind::gumbel, std::vector<double>{0.0, 0.0}, {});
  const auto s = estimate_suff_stats(ballot({0, 1}, 2), d, config(100000, 11));
  EXPECT_NEAR(s.T[0], -0.5, 0.01);
  EXPECT_NEAR(s.T[1], -1.5, 0.02);
}

TEST(SuffStats, BitReproducibleAndSeedSensitive) {
  const auto d = std_normals(4);
  const auto b = ballot({3, 0, 2}, 4);
  const auto a = estimate_suff_stats(b, d, config(500, 12));
  const auto a2 = estimate_suff_stats(b, d, config(500, 12));
  const auto c = estimate_suff_stats(b, d, config(500, 13));
  EXPECT_EQ(a.T, a2.T);
  EXPECT_NE(a.T, c.T);
}

TEST(SuffStats, ThinningAndValidation) {
  auto c = config(20000, 14);
  c.thinning = 0.3;
  const auto s = estimate_suff_stats(ballot({0, 1}, 2), std_normals(2), c);
  EXPECT_NEAR(s.T[0], kInvSqrtPi, 0.02);
  c = config(3, 1);
  c.thinning = 0.2;
  EXPECT_THROW(c.validate(), DataError);
  c = config(0, 1);
  EXPECT_THROW(c.validate(), DataError);
  c = config(10, 1);
  c.rb_samples = 0;
  EXPECT_THROW(c.validate(), DataError);
  c = config(10, 1);
  c.thinning = 1.5;
  EXPECT_THROW(c.validate(), DataError);
}

TEST(SuffStats, RaoBlackwellReducesVariance) {
  const auto d = std_normals(2);
  const auto b = ballot({0, 1}, 2);
  auto var_of = [&](bool exact) {
    std::vector<double> v;
    for (int r = 0; r < 100; ++r) {
      auto c = config(200, derive_seed(77, {static_cast<std::uint64_t>(r)}));
      c.exact_rao_blackwell = exact;
      v.push_back(estimate_suff_stats(b, d, c).T[0]);
    }
    double mean = 0.0, ss = 0.0;
    for (double x : v) mean += x / v.size();
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / (v.size() - 1);
  };
  const double rb = var_of(true), plain = var_of(false);
  // Ratio of two 99-dof variance estimates; 1.5 allows for their noise.
  EXPECT_LE(rb / plain, 1.5);
}

TEST(SuffStats, WellSeparatedDataStayNearLocations) {
  const std::vector<double> th{4.0, 0.0, -4.0, 8.0};
  const auto d = located(FamilyKind::normal, th, {});
  const auto s = estimate_suff_stats(ballot({3, 0, 1, 2}, 4), d, config(2000, 15));
  for (int j = 0; j < 4; ++j) {
    EXPECT_TRUE(std::isfinite(s.T[j]));
    EXPECT_NEAR(s.T[j], th[j], 10.0);
  }
}
