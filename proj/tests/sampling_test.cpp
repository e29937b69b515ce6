// Differentiable top-k sampling: count rule fixtures, hard selection, the
// soft relaxation's invariants, agreement between the graph and plain
// samplers, and empirical selection frequencies against the enumerated
// inclusion probabilities.

#include <gtest/gtest.h>

#include <numeric>

#include "plens/sampling.hpp"
#include "testutil.hpp"

using namespace plens;

TEST(ResolveK, Fixtures) {
  EXPECT_EQ(resolve_k(60, 30), 18u);
  EXPECT_EQ(resolve_k(2, 30), 1u);   // round(0.6) = 1
  EXPECT_EQ(resolve_k(3, 100), 3u);
  EXPECT_EQ(resolve_k(1, 1), 1u);    // floor of one event
  EXPECT_EQ(resolve_fraction(4, 0.99), 4u);
  EXPECT_EQ(resolve_fraction(10, 0.25), 3u);  // round(2.5) away from zero
  EXPECT_EQ(resolve_fraction(7, 1.0), 7u);
  EXPECT_THROW(resolve_fraction(0, 0.5), ValidationError);
  for (std::size_t L = 1; L <= 50; ++L)
    for (int kp : {1, 30, 50, 100}) {
      const std::size_t k = resolve_k(L, kp);
      EXPECT_GE(k, 1u);
      EXPECT_LE(k, L);
    }
}

TEST(HardTopK, FixturesAndTies) {
  EXPECT_EQ(hard_topk({3, 1, 2}, 2), (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(hard_topk({1, 1, 0}, 1), (std::vector<double>{1, 0, 0})) << "tie -> lower index";
  EXPECT_EQ(hard_topk({-5, -1, -3}, 1), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(hard_topk({2, 2, 2}, 2), (std::vector<double>{1, 1, 0}));
  EXPECT_EQ(hard_topk({4}, 1), (std::vector<double>{1}));
  EXPECT_THROW(hard_topk({1, 2}, 0), ValidationError);
  EXPECT_THROW(hard_topk({1, 2}, 3), ValidationError);
}

TEST(RelaxedSample, SoftInvariantHolds) {
  Rng rng(1234);
  for (int it = 0; it < 500; ++it) {
    const std::size_t L = 2 + static_cast<std::size_t>(uniform_below(rng, 39));
    const std::size_t k = 1 + static_cast<std::size_t>(uniform_below(rng, L));
    std::vector<double> logits(L);
    for (auto& x : logits) x = 6.0 * (uniform01(rng) - 0.5);
    for (double tau : {0.1, 0.5, 2.0}) {
      RelaxedSample s = relaxed_sample(logits, k, tau, rng);
      double total = 0.0;
      for (double v : s.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, static_cast<double>(k), 1e-5)
          << "L=" << L << " k=" << k << " tau=" << tau;
    }
  }
}

TEST(RelaxedSample, TinyTemperatureEqualsHardTopK) {
  Rng rng(987);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t L = 2 + static_cast<std::size_t>(uniform_below(rng, 11));
    const std::size_t k = 1 + static_cast<std::size_t>(uniform_below(rng, L));
    std::vector<double> logits(L);
    for (auto& x : logits) x = 4.0 * (uniform01(rng) - 0.5);
    RelaxedSample s = relaxed_sample(logits, k, 1e-6, rng);
    std::vector<double> hard = hard_topk(s.perturbed, k);
    for (std::size_t i = 0; i < L; ++i)
      ASSERT_NEAR(s.values[i], hard[i], 1e-6) << "iteration " << it << " index " << i;
  }
}

TEST(RelaxedSample, StraightThroughForwardIsHard) {
  Rng rng(55);
  std::vector<double> logits = {0.2, -1.0, 0.9, 0.4, -0.3};
  RelaxedSample s = relaxed_sample(logits, 2, 0.5, rng, /*straight_through=*/true);
  double total = 0.0;
  for (double v : s.values) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    total += v;
  }
  EXPECT_DOUBLE_EQ(total, 2.0);
  EXPECT_EQ(s.values, hard_topk(s.perturbed, 2));
}

TEST(RelaxedSampleGraph, MatchesPlainSamplerStream) {
  Rng rng(31);
  for (int it = 0; it < 200; ++it) {
    const std::size_t L = 2 + static_cast<std::size_t>(uniform_below(rng, 14));
    const std::size_t k = 1 + static_cast<std::size_t>(uniform_below(rng, L));
    std::vector<double> logits(L);
    for (auto& x : logits) x = 5.0 * (uniform01(rng) - 0.5);
    const double tau = 0.25 + uniform01(rng);

    const Rng::result_type seed = static_cast<Rng::result_type>(1000 + it);
    Rng r1(seed), r2(seed);
    RelaxedSample plain = relaxed_sample(logits, k, tau, r1);
    Tensor<double> g =
        relaxed_sample_graph(Tensor<double>::constant(1, L, logits), k, tau, r2);
    ASSERT_EQ(g.cols(), L);
    for (std::size_t i = 0; i < L; ++i)
      ASSERT_NEAR(g.values()[i], plain.values[i], 1e-12) << "it " << it << " i " << i;
    EXPECT_EQ(r1(), r2()) << "samplers must consume identical randomness";
  }
}

TEST(RelaxedSampleGraph, GradientsFlowAndStraightThroughValues) {
  ParameterStore<double> ps;
  Tensor<double> logits = ps.create("logits", 1, 6, {0.5, -0.2, 0.8, 0.1, -0.6, 0.3});
  auto build = [&] {
    Rng rng(17);
    return sum(mul(relaxed_sample_graph(logits, 2, 0.7, rng),
                   Tensor<double>::constant(1, 6, {1, 2, 3, 4, 5, 6})));
  };
  EXPECT_LT(tu::fd_gradcheck(ps, build), 1e-4);

  Rng rng(17);
  Tensor<double> st = relaxed_sample_graph(logits, 2, 0.7, rng, /*straight_through=*/true);
  double total = 0.0;
  for (double v : st.values()) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    total += v;
  }
  EXPECT_DOUBLE_EQ(total, 2.0);
}

TEST(Marginals, BruteForceFixtures) {
  // k=1 reduces to the softmax; L=4 values enumerated independently.
  auto m3 = inclusion_marginals_bruteforce({std::log(2.0), 0.0, 0.0}, 1);
  ASSERT_EQ(m3.size(), 3u);
  EXPECT_NEAR(m3[0], 0.5, 1e-12);
  EXPECT_NEAR(m3[1], 0.25, 1e-12);
  EXPECT_NEAR(m3[2], 0.25, 1e-12);

  auto m4 = inclusion_marginals_bruteforce({0.3, -0.2, 1.1, 0.0}, 2);
  EXPECT_NEAR(m4[0], 0.501728160270631, 1e-12);
  EXPECT_NEAR(m4[1], 0.321153896320876, 1e-12);
  EXPECT_NEAR(m4[2], 0.791404871609828, 1e-12);
  EXPECT_NEAR(m4[3], 0.385713071798665, 1e-12);

  auto uniform = inclusion_marginals_bruteforce({0.7, 0.7, 0.7, 0.7}, 2);
  for (double m : uniform) EXPECT_NEAR(m, 0.5, 1e-12) << "uniform logits: k/L each";

  const double s = std::accumulate(m4.begin(), m4.end(), 0.0);
  EXPECT_NEAR(s, 2.0, 1e-12) << "marginals sum to k";
}

TEST(Marginals, SubsetDistributionConsistent) {
  const std::vector<double> logits = {0.4, -0.9, 1.3, 0.0, -0.4};
  for (std::size_t k : {1u, 2u, 3u}) {
    auto subsets = topk_subset_probabilities(logits, k);
    double total = 0.0;
    std::vector<double> marg(logits.size(), 0.0);
    for (const auto& [bits, p] : subsets) {
      EXPECT_GE(p, 0.0);
      total += p;
      for (std::size_t i = 0; i < logits.size(); ++i)
        if (bits & (1u << i)) marg[i] += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    auto want = inclusion_marginals_bruteforce(logits, k);
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(marg[i], want[i], 1e-12);
  }
}

TEST(Marginals, EmpiricalSelectionFrequenciesAgree) {
  // Spot check at unit-test scale; the acceptance run does 50 cases at 1e5.
  Rng rng(2024);
  const int draws = 20000;
  const std::vector<std::vector<double>> cases = {
      {std::log(2.0), 0.0, 0.0}, {0.3, -0.2, 1.1, 0.0}, {1.0, 1.0, -1.0, 0.5, 0.0}};
  const std::vector<std::size_t> ks = {1, 2, 2};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& logits = cases[c];
    const std::size_t k = ks[c];
    std::vector<int> hits(logits.size(), 0);
    for (int d = 0; d < draws; ++d) {
      RelaxedSample s = relaxed_sample(logits, k, 1e-6, rng);
      for (std::size_t i = 0; i < logits.size(); ++i)
        if (s.values[i] > 0.5) ++hits[i];
    }
    auto want = inclusion_marginals_bruteforce(logits, k);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double p = want[i];
      const double sd = std::sqrt(p * (1.0 - p) / draws);
      EXPECT_NEAR(hits[i] / static_cast<double>(draws), p, 5.0 * sd + 1e-9)
          << "case " << c << " index " << i;
    }
  }
}

TEST(HardTopK, ShiftInvariance) {
  Rng rng(606);
  for (int it = 0; it < 200; ++it) {
    const std::size_t L = 2 + static_cast<std::size_t>(uniform_below(rng, 5));
    const std::size_t k = 1 + static_cast<std::size_t>(uniform_below(rng, L));
    std::vector<double> logits(L), shifted(L);
    const double c = 10.0 * (uniform01(rng) - 0.5);
    for (std::size_t i = 0; i < L; ++i) {
      logits[i] = 4.0 * (uniform01(rng) - 0.5);
      shifted[i] = logits[i] + c;
    }
    EXPECT_EQ(hard_topk(logits, k), hard_topk(shifted, k));
    auto m1 = inclusion_marginals_bruteforce(logits, k);
    auto m2 = inclusion_marginals_bruteforce(shifted, k);
    for (std::size_t i = 0; i < L; ++i) EXPECT_NEAR(m1[i], m2[i], 1e-9);
  }
}

TEST(RelaxedSample, OwnLogitGradientPositiveOnMonteCarloMean) {
  // E[soft_i] must increase in logit_i: finite differences on the MC average
  // with common random numbers.
  const std::vector<double> base = {0.4, -0.3, 0.8, 0.0};
  const double h = 0.05;
  const int draws = 4000;
  for (std::size_t i = 0; i < base.size(); ++i) {
    double up = 0.0, down = 0.0;
    Rng r1(999), r2(999);  // common random numbers
    std::vector<double> hi = base, lo = base;
    hi[i] += h;
    lo[i] -= h;
    for (int d = 0; d < draws; ++d) {
      up += relaxed_sample(hi, 2, 0.5, r1).values[i];
      down += relaxed_sample(lo, 2, 0.5, r2).values[i];
    }
    EXPECT_GT(up, down) << "index " << i;
  }
}

TEST(SamplingConfig, Validation) {
  SamplingConfig ok;
  EXPECT_NO_THROW(validate_sampling_config(ok));
  SamplingConfig bad = ok;
  bad.k_percent = 0;
  EXPECT_THROW(validate_sampling_config(bad), ValidationError);
  bad = ok;
  bad.k_percent = 101;
  EXPECT_THROW(validate_sampling_config(bad), ValidationError);
  bad = ok;
  bad.temperature = 0.0;
  EXPECT_THROW(validate_sampling_config(bad), ValidationError);
  Rng rng(1);
  EXPECT_THROW(relaxed_sample({1.0, 2.0}, 1, -0.5, rng), ValidationError);
}
