#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "oracles.hpp"
#include "rumfit/eval.hpp"

using namespace rumfit;

namespace {

Ranking R(std::vector<int> o, int m) { return Ranking(std::move(o), m); }

double Phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<LocationFamily> normals(std::vector<double> th, std::vector<double> sc = {}) {
  return located(FamilyKind::normal, th, sc);
}

// Pr(X_a > X_b > X_c) for independent normals as an explicit double integral.
double ordered_triple_normal(const std::vector<LocationFamily>& d, int a, int b, int c) {
  boost::math::quadrature::gauss_kronrod<double, 61> gk;
  auto inner = [&](double xa) {
    auto f = [&](double xb) { return pdf(d[b], xb) * cdf(d[c], xb); };
    return gk.integrate(f, -std::numeric_limits<double>::infinity(), xa, 15, 1e-13);
  };
  return gk.integrate([&](double xa) { return pdf(d[a], xa) * inner(xa); }, -std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity(), 15, 1e-13);
}

std::vector<std::vector<int>> permutations(int m) {
  std::vector<int> o(m);
  std::iota(o.begin(), o.end(), 0);
  std::vector<std::vector<int>> out;
  do out.push_back(o);
  while (std::next_permutation(o.begin(), o.end()));
  return out;
}

Profile simulate(FamilyKind k, const std::vector<double>& theta, const std::vector<double>& scale, int n,
                 std::uint64_t seed) {
  const auto d = located(k, theta, scale);
  Rng rng(seed);
  std::vector<Ranking> rs;
  for (int i = 0; i < n; ++i) rs.push_back(sample_ranking(d, rng));
  return Profile::from_rankings(static_cast<int>(theta.size()), rs);
}

ModelSpec quick_spec(ModelKind kind, int n_samples, int iters) {
  ModelSpec s;
  s.kind = kind;
  s.fit.schedule = SampleSchedule::constant(n_samples);
  s.fit.max_iters = iters;
  s.fit.threads = 1;
  return s;
}

}  // namespace

TEST(Quadrature, TwoAlternativeClosedForms) {
  EXPECT_NEAR(rank_prob_quadrature(R({0, 1}, 2), normals({0, 0})).prob(), 0.5, 1e-14);
  const auto e = rank_prob_quadrature(R({0, 1}, 2), normals({1, 0}));
  EXPECT_NEAR(e.prob(), Phi(1.0 / std::numbers::sqrt2), 1e-12);
  EXPECT_EQ(e.std_err, 0.0);
  EXPECT_EQ(e.method, ProbMethod::quadrature);
  // Difference of normals with unequal scales.
  const auto u = rank_prob_quadrature(R({1, 0}, 2), normals({0.3, -0.4}, {0.5, 2.0}));
  EXPECT_NEAR(u.prob(), Phi((-0.4 - 0.3) / std::sqrt(0.25 + 4.0)), 1e-12);
}

TEST(Quadrature, GumbelThreeAlternativeExample) {
  const auto d = located(FamilyKind::gumbel, std::vector<double>{std::log(0.5), std::log(0.3), std::log(0.2)}, {});
  EXPECT_NEAR(rank_prob_quadrature(R({0, 1, 2}, 3), d).prob(), 0.3, 1e-12);
}

TEST(Quadrature, MatchesNestedIntegrationForNormals) {
  std::mt19937_64 eng(51);
  std::uniform_real_distribution<double> u(-2.0, 2.0), s(0.4, 2.5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = normals({u(eng), u(eng), u(eng)}, {s(eng), s(eng), s(eng)});
    auto o = permutations(3)[eng() % 6];
    const double ref = ordered_triple_normal(d, o[0], o[1], o[2]);
    EXPECT_NEAR(rank_prob_quadrature(R(o, 3), d).prob(), ref, 1e-10);
  }
}

TEST(Quadrature, MatchesPlackettLuceUpToTwelveAlternatives) {
  std::mt19937_64 eng(52);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int m : {4, 7, 10, 12}) {
    std::vector<double> th(m);
    for (auto& t : th) t = u(eng);
    const auto d = located(FamilyKind::gumbel, th, {});
    const auto lambda = *gumbel_as_pl(d);
    for (int rep = 0; rep < 5; ++rep) {
      const auto r = oracle::random_ranking(m, rep % 2 == 1, eng);
      EXPECT_NEAR(rank_prob_quadrature(r, d).log_prob, pl_log_prob(r, lambda), 1e-8) << "m=" << m;
    }
  }
  EXPECT_THROW(rank_prob_quadrature(R({0}, 13), normals(std::vector<double>(13, 0.0))), DataError);
}

TEST(Quadrature, TotalAndPartialProbabilitiesSumToOne) {
  std::mt19937_64 eng(53);
  std::uniform_real_distribution<double> u(-2.0, 2.0), s(0.5, 2.0);
  for (auto k : {FamilyKind::normal, FamilyKind::gumbel})
    for (int m = 2; m <= 4; ++m) {
      std::vector<double> th(m), sc(m);
      for (int j = 0; j < m; ++j) {
        th[j] = u(eng);
        sc[j] = s(eng);
      }
      const auto d = located(k, th, sc);
      std::vector<CompletedBallot> all, tops;
      for (const auto& o : permutations(m)) {
        all.push_back(complete_partial(R(o, m)));
        tops.push_back(complete_partial(R({o[0], o[1]}, m)));
      }
      double total = 0.0, top2 = 0.0;
      for (const auto& e : rank_probs_quadrature(all, d)) total += e.prob();
      for (const auto& e : rank_probs_quadrature(tops, d)) top2 += e.prob();
      EXPECT_NEAR(total, 1.0, 1e-10);
      // Each ordered top pair appears (m-2)! times among the permutations.
      double fact = 1.0;
      for (int f = 2; f <= m - 2; ++f) fact *= f;
      EXPECT_NEAR(top2 / fact, 1.0, 1e-10);
    }
}

TEST(Quadrature, ShiftInvariance) {
  std::mt19937_64 eng(54);
  for (auto k : {FamilyKind::normal, FamilyKind::gumbel}) {
    const std::vector<double> th{0.2, -1.0, 0.7, 1.1};
    auto shifted = th;
    for (auto& t : shifted) t += 2.75;
    const auto r = oracle::random_ranking(4, true, eng);
    EXPECT_NEAR(rank_prob_quadrature(r, located(k, th, {})).log_prob,
                rank_prob_quadrature(r, located(k, shifted, {})).log_prob, 1e-10);
  }
}

TEST(SIS, SymmetricAndClosedFormCases) {
  Rng rng(55);
  const auto s = rank_prob_sis(R({0, 1}, 2), normals({0, 0}), 10000, rng);
  EXPECT_EQ(s.method, ProbMethod::sis);
  EXPECT_GT(s.std_err, 0.0);
  EXPECT_NEAR(s.prob(), 0.5, 3.0 * s.std_err * s.prob());
  const auto e = rank_prob_sis(R({0, 1}, 2), normals({1, 0}), 10000, rng);
  EXPECT_NEAR(e.prob(), Phi(1.0 / std::numbers::sqrt2), 3.0 * e.std_err * e.prob());
  EXPECT_THROW(rank_prob_sis(R({0, 1}, 2), normals({0, 0}), 99, rng), DataError);
}

TEST(SIS, AgreesWithQuadratureOnRandomNormalInstances) {
  std::mt19937_64 eng(56);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Rng rng(57);
  int outside = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto d = normals({u(eng), u(eng), u(eng)});
    const auto r = oracle::random_ranking(3, rep % 3 == 0, eng);
    const auto q = rank_prob_quadrature(r, d);
    const auto s = rank_prob_sis(r, d, 20000, rng);
    outside += std::abs(s.log_prob - q.log_prob) > 3.0 * s.std_err;
  }
  // Each instance leaves 3 se with probability about 0.0027; three or more of
  // 100 has probability below 3e-4.
  EXPECT_LE(outside, 2);
}

TEST(SIS, ImpossibleRankingIsFlagged) {
  Rng rng(58);
  const auto d = located(FamilyKind::gumbel, std::vector<double>{-800.0, 800.0}, {});
  const auto s = rank_prob_sis(R({0, 1}, 2), d, 100, rng);
  EXPECT_TRUE(s.impossible);
  EXPECT_EQ(s.log_prob, -kInf);
  EXPECT_EQ(s.std_err, kInf);
}

TEST(GumbelAsPL, OnlyForCommonScale) {
  const auto d = located(FamilyKind::gumbel, std::vector<double>{0.0, std::log(2.0)}, {});
  const auto l = gumbel_as_pl(d);
  ASSERT_TRUE(l);
  EXPECT_NEAR((*l)[1] / (*l)[0], 2.0, 1e-15);
  EXPECT_FALSE(gumbel_as_pl(located(FamilyKind::gumbel, std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0})));
  EXPECT_FALSE(gumbel_as_pl(normals({0.0, 1.0})));
}

TEST(LogLikelihood, DelegatesAndWeights) {
  const FittedModel model{ModelKind::normal, {0.0, 0.4, -0.2}, {}};
  const auto one = Profile::from_rankings(3, {R({1, 0, 2}, 3)});
  const auto two = Profile({3, {{R({1, 0, 2}, 3), 2}}});
  const auto l1 = log_likelihood(one, model);
  EXPECT_EQ(l1.method, ProbMethod::quadrature);
  EXPECT_DOUBLE_EQ(l1.value, rank_prob_quadrature(R({1, 0, 2}, 3), model.distributions()).log_prob);
  EXPECT_DOUBLE_EQ(log_likelihood(two, model).value, 2.0 * l1.value);
  EXPECT_THROW(log_likelihood(one, FittedModel{ModelKind::normal, {0.0, 1.0}, {}}), DataError);
}

TEST(LogLikelihood, PlackettLuceClosedFormAndSis) {
  std::mt19937_64 eng(59);
  std::vector<Ranking> rs;
  for (int i = 0; i < 30; ++i) rs.push_back(oracle::random_ranking(5, true, eng));
  const auto p = Profile::from_rankings(5, rs);
  const FittedModel pl{ModelKind::pl, {0.0, 0.5, -0.3, 1.0, 0.2}, {}};
  const auto cf = log_likelihood(p, pl);
  EXPECT_EQ(cf.method, ProbMethod::closed_form);
  EXPECT_EQ(cf.std_err, 0.0);
  EXPECT_NEAR(cf.value, pl_log_likelihood(p, pl.lambda()), 1e-12);
  LLOptions o;
  o.method = LLMethod::sis;
  o.seed = 3;
  const auto sis = log_likelihood(p, pl, o);
  EXPECT_EQ(sis.method, ProbMethod::sis);
  EXPECT_NEAR(sis.value, cf.value, 3.0 * sis.std_err);
  o.method = LLMethod::quadrature;
  EXPECT_NEAR(log_likelihood(p, pl, o).value, cf.value, 1e-8);
  // Equal-scale Gumbel goes through the closed form automatically.
  EXPECT_EQ(log_likelihood(p, FittedModel{ModelKind::gumbel, pl.theta, {}}).method, ProbMethod::closed_form);
  o.method = LLMethod::closed_form;
  EXPECT_THROW(log_likelihood(p, FittedModel{ModelKind::normal, pl.theta, {}}, o), DataError);
}

TEST(LogLikelihood, LargeModelsSwitchToSampling) {
  const auto p = Profile::from_rankings(13, {R({3, 1, 0}, 13)});
  const auto e = log_likelihood(p, FittedModel{ModelKind::normal, std::vector<double>(13, 0.0), {}});
  EXPECT_EQ(e.method, ProbMethod::sis);
  EXPECT_GT(e.std_err, 0.0);
  // Pr of a given top-3 under exchangeable utilities is 10!/13!.
  EXPECT_NEAR(e.value, -std::log(13.0 * 12.0 * 11.0), 3.0 * e.std_err);
}

TEST(ModelCounting, FreeParameters) {
  EXPECT_EQ(count_free_params(ModelKind::pl, 10), 9);
  EXPECT_EQ(count_free_params(ModelKind::normal, 10), 9);
  EXPECT_EQ(count_free_params(ModelKind::normal_freevar, 10), 19);
  EXPECT_EQ(parse_model("normal-freevar"), ModelKind::normal_freevar);
  EXPECT_THROW(parse_model("probit"), DataError);
  EXPECT_DOUBLE_EQ(aic(-10.0, 3), 26.0);
  EXPECT_DOUBLE_EQ(bic(-10.0, 3, 100), 3.0 * std::log(100.0) + 20.0);
}

TEST(ModelCompare, IdenticalSpecsGiveZeroDifferences) {
  const auto p = simulate(FamilyKind::normal, {0, 0.5, 1.0}, {}, 40, 60);
  CompareOptions opt;
  opt.holdout = 10;
  opt.seed = 61;
  const auto r = model_compare(p, quick_spec(ModelKind::normal, 200, 3), quick_spec(ModelKind::normal, 200, 3), opt);
  EXPECT_EQ(r.ll_diff, 0.0);
  EXPECT_EQ(r.pred_ll_diff, 0.0);
  EXPECT_EQ(r.aic_diff, 0.0);
  EXPECT_EQ(r.bic_diff, 0.0);
  EXPECT_EQ(r.n_train, 30);
  EXPECT_EQ(r.n_holdout, 10);
  const auto q = model_compare(p, quick_spec(ModelKind::pl, 1, 1), quick_spec(ModelKind::pl, 1, 1), opt);
  EXPECT_EQ(q.ll_diff, 0.0);
}

TEST(ModelCompare, CriteriaAreConsistent) {
  const auto p = simulate(FamilyKind::normal, {0, 0.5, 1.0, 0.2}, {0.5, 2.0, 0.5, 1.0}, 60, 62);
  CompareOptions opt;
  opt.holdout = 20;
  opt.seed = 63;
  const auto r = model_compare(p, quick_spec(ModelKind::normal_freevar, 200, 4), quick_spec(ModelKind::pl, 1, 1), opt);
  EXPECT_EQ(r.k_a, 7);
  EXPECT_EQ(r.k_b, 3);
  EXPECT_NEAR(r.ll_diff, r.ll_a - r.ll_b, 1e-12);
  EXPECT_NEAR(r.aic_diff, -2.0 * r.ll_diff + 2.0 * (r.k_a - r.k_b), 1e-9);
  EXPECT_NEAR(r.bic_diff, -2.0 * r.ll_diff + (r.k_a - r.k_b) * std::log(40.0), 1e-9);
  EXPECT_GT(r.pred_ll_diff_sampling_se, 0.0);
}

TEST(ModelCompare, SplitErrors) {
  const auto p = simulate(FamilyKind::normal, {0, 1}, {}, 10, 64);
  CompareOptions opt;
  opt.holdout = 10;
  EXPECT_THROW(model_compare(p, quick_spec(ModelKind::pl, 1, 1), quick_spec(ModelKind::pl, 1, 1), opt), DataError);
  const auto bad = Profile({2, {{R({0, 1}, 2), 10}}});
  opt.holdout = 2;
  opt.max_split_retries = 3;
  EXPECT_THROW(model_compare(bad, quick_spec(ModelKind::pl, 1, 1), quick_spec(ModelKind::pl, 1, 1), opt),
               ConditionViolation);
}

TEST(Concavity, SingleBallotHasFlatShiftDirection) {
  const auto p = Profile::from_rankings(2, {R({0, 1}, 2)});
  const auto rep = concavity_probe(p, FamilyKind::normal, 10, 65);
  EXPECT_LE(rep.max_eigenvalue, 1e-4);
  LLOptions opt;
  opt.method = LLMethod::quadrature;
  auto ll = [&](const std::vector<double>& th) {
    return log_likelihood(p, FittedModel{ModelKind::normal, th, {}}, opt).value;
  };
  const auto H = numeric_hessian(ll, {0.3, -0.2}, 1e-3);
  EXPECT_NEAR(H(0, 0) + H(0, 1), 0.0, 1e-5);
  EXPECT_NEAR(H(1, 0) + H(1, 1), 0.0, 1e-5);
  EXPECT_LT(H(0, 0), 0.0);
}

TEST(Concavity, RandomProfilesBothFamilies) {
  std::mt19937_64 eng(66);
  for (auto k : {FamilyKind::normal, FamilyKind::gumbel}) {
    std::vector<Ranking> rs;
    for (int i = 0; i < 12; ++i) rs.push_back(oracle::random_ranking(3, true, eng));
    const auto rep = concavity_probe(Profile::from_rankings(3, rs), k, 10, 67);
    EXPECT_LE(rep.max_eigenvalue, 1e-4);
    EXPECT_EQ(rep.points.size(), 10u);
  }
  EXPECT_THROW(concavity_probe(Profile::from_rankings(5, {R({0}, 5)}), FamilyKind::normal, 1, 1), DataError);
}

TEST(Experiments, RecoveryHarnessShapes) {
  const std::vector<double> th{0, 1, 2};
  const std::vector<int> ns{20, 200};
  const auto res = recovery_experiment(th, FamilyKind::normal, {}, ns, 3, quick_spec(ModelKind::normal, 100, 3), 68);
  ASSERT_EQ(res.size(), 2u);
  for (const auto& s : res) {
    EXPECT_EQ(s.trials + s.failed, 3);
    EXPECT_LE(s.ci_low, s.mean);
    EXPECT_GE(s.ci_high, s.mean);
    for (double t : s.taus) EXPECT_TRUE(t >= -1.0 && t <= 1.0);
  }
  EXPECT_DOUBLE_EQ(res[1].mean, 1.0);
}

TEST(Experiments, FullSizeSubsampleReproducesReference) {
  const auto p = simulate(FamilyKind::normal, {0, 0.3, 0.9, 1.5}, {}, 40, 69);
  const std::vector<int> sizes{5, 40};
  const auto r = robustness_experiment(p, sizes, 3, quick_spec(ModelKind::normal, 100, 3), 70);
  ASSERT_EQ(r.sizes.size(), 2u);
  EXPECT_EQ(r.sizes[1].trials, 3);
  for (double t : r.sizes[1].taus) EXPECT_DOUBLE_EQ(t, 1.0);
  EXPECT_EQ(r.sizes[0].trials + r.sizes[0].failed, 3);
}
