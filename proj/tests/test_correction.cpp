#include <gtest/gtest.h>

#include <cmath>

#include "meshspm/correction.hpp"
#include "meshspm/rng.hpp"
#include "oracles.hpp"

using namespace meshspm;

namespace {

std::vector<double> random_p_vector(std::uint64_t seed, int min_size = 1,
                                    int max_size = 60) {
  SplitMix64 g(seed);
  const int m =
      min_size + static_cast<int>(g.next_below(max_size - min_size + 1));
  std::vector<double> p(static_cast<size_t>(m));
  for (auto& v : p) {
    v = g.next_open_double();
    // Mix in some strong signals and some ties.
    if (g.next_double() < 0.3) v *= 0.01;
    if (g.next_double() < 0.1) v = 0.5;
  }
  return p;
}

TEST(BhFdr, SinglePValue) {
  CorrectionResult r = bh_fdr(std::vector<double>{0.03}, 0.05);
  EXPECT_DOUBLE_EQ(r.p_adjusted[0], 0.03);
  EXPECT_EQ(r.mask[0], 1);
}

TEST(BhFdr, AllEqualStayEqual) {
  std::vector<double> p(7, 0.2);
  CorrectionResult r = bh_fdr(p, 0.05);
  for (double adj : r.p_adjusted) EXPECT_DOUBLE_EQ(adj, 0.2);
}

TEST(BhFdr, HandComputedExample) {
  std::vector<double> p{0.01, 0.02, 0.04, 0.20};
  CorrectionResult r = bh_fdr(p, 0.05);
  EXPECT_NEAR(r.p_adjusted[0], 0.04, 1e-15);
  EXPECT_NEAR(r.p_adjusted[1], 0.04, 1e-15);
  EXPECT_NEAR(r.p_adjusted[2], 0.16 / 3.0, 1e-15);
  EXPECT_NEAR(r.p_adjusted[3], 0.20, 1e-15);
  EXPECT_EQ(r.mask[0], 1);
  EXPECT_EQ(r.mask[1], 1);
  EXPECT_EQ(r.mask[2], 0);
  EXPECT_EQ(r.mask[3], 0);
}

TEST(BhFdr, EmptyVector) {
  CorrectionResult r = bh_fdr(std::vector<double>{}, 0.05);
  EXPECT_TRUE(r.p_adjusted.empty());
  EXPECT_TRUE(r.mask.empty());
}

TEST(BhFdr, RejectsInvalidInput) {
  EXPECT_THROW(bh_fdr(std::vector<double>{0.0}, 0.05), ValidationError);
  EXPECT_THROW(bh_fdr(std::vector<double>{1.5}, 0.05), ValidationError);
  EXPECT_THROW(bh_fdr(std::vector<double>{0.5}, 1.0), ValidationError);
}

TEST(BhFdr, MatchesStepUpOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<double> p = random_p_vector(seed);
    CorrectionResult r = bh_fdr(p, 0.05);
    oracle::BhOracle ref = oracle::bh(p, 0.05);
    for (size_t i = 0; i < p.size(); ++i) {
      ASSERT_NEAR(r.p_adjusted[i], ref.adjusted[i], 1e-12);
      ASSERT_EQ(r.mask[i] != 0, ref.rejected[i] != 0);
    }
  }
}

TEST(TwoStageBh, AllOnesNothingSignificant) {
  std::vector<double> p(5, 1.0);
  CorrectionResult r = two_stage_bh(p, 0.05);
  for (size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(r.mask[i], 0);
    EXPECT_DOUBLE_EQ(r.p_adjusted[i], 1.0);
  }
}

TEST(TwoStageBh, StageTwoScalesByEstimatedNulls) {
  // Stage one at q / (1 + q) rejects r of m; stage two reruns the step-up
  // with the threshold inflated by m / (m - r).
  std::vector<double> p{1e-6, 1e-5, 0.03, 0.4, 0.6, 0.9};
  const double q = 0.05;
  CorrectionResult r = two_stage_bh(p, q);

  const double q1 = q / (1.0 + q);
  oracle::BhOracle stage1 = oracle::bh(p, q1);
  int r1 = 0;
  for (char c : stage1.rejected) r1 += c != 0;
  ASSERT_EQ(r1, 2);
  const double level2 = q * 6.0 / (6.0 - r1);
  oracle::BhOracle stage2 = oracle::bh(p, level2);
  for (size_t i = 0; i < p.size(); ++i)
    EXPECT_EQ(r.mask[i] != 0, stage2.rejected[i] != 0) << i;
  // 0.03 <= level2 * 3/6 only with the scaled threshold.
  EXPECT_EQ(r.mask[2], 1);
  oracle::BhOracle plain = oracle::bh(p, q);
  EXPECT_EQ(plain.rejected[2], 0);
}

TEST(TwoStageBh, MaskContainsBhMask) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    std::vector<double> p = random_p_vector(seed + 1000);
    CorrectionResult bh = bh_fdr(p, 0.05);
    CorrectionResult ts = two_stage_bh(p, 0.05);
    for (size_t i = 0; i < p.size(); ++i)
      if (bh.mask[i]) ASSERT_EQ(ts.mask[i], 1);
  }
}

TEST(TwoStageBh, AdjustedNeverBelowRaw) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<double> p = random_p_vector(seed + 2000);
    CorrectionResult ts = two_stage_bh(p, 0.05);
    for (size_t i = 0; i < p.size(); ++i)
      ASSERT_GE(ts.p_adjusted[i], p[i]);
  }
}

TEST(FwerMaxStat, OrderStatisticRule) {
  std::vector<double> maxima(19);
  for (int i = 0; i < 19; ++i) maxima[i] = i + 1.0;
  std::vector<double> observed{18.5, 19.5, 2.0};
  MaxStatResult r = fwer_maxstat(observed, maxima, 0.05);
  // ceil(0.95 * 20) = 19th smallest of 19 values.
  EXPECT_DOUBLE_EQ(r.threshold, 19.0);
  EXPECT_EQ(r.mask[0], 0);
  EXPECT_EQ(r.mask[1], 1);
  EXPECT_EQ(r.mask[2], 0);
}

TEST(FwerMaxStat, ObservedBelowAllNulls) {
  std::vector<double> maxima{5.0, 6.0, 7.0};
  std::vector<double> observed{1.0, 2.0};
  MaxStatResult r = fwer_maxstat(observed, maxima, 0.05);
  for (auto m : r.mask) EXPECT_EQ(m, 0);
}

TEST(FwerMaxStat, SingleNullMapThresholdIsItsMaximum) {
  std::vector<double> maxima{3.25};
  std::vector<double> observed{3.3, 3.2};
  MaxStatResult r = fwer_maxstat(observed, maxima, 0.05);
  EXPECT_DOUBLE_EQ(r.threshold, 3.25);
  EXPECT_EQ(r.mask[0], 1);
  EXPECT_EQ(r.mask[1], 0);
}

// Adjusted values never reorder hypotheses relative to raw ones.
TEST(Correction, AdjustedMonotoneInRawP) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::vector<double> p = random_p_vector(seed + 9000, 5);
    for (auto correct : {bh_fdr, two_stage_bh}) {
      CorrectionResult r = correct(p, 0.05);
      std::vector<int> order(p.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return p[a] < p[b]; });
      for (size_t k = 1; k < order.size(); ++k)
        ASSERT_LE(r.p_adjusted[order[k - 1]], r.p_adjusted[order[k]] + 1e-15);
    }
  }
}

TEST(FwerMaxStat, AdjustedPMonotoneInScore) {
  // The single-step FWER-adjusted p used downstream is (1 + #{max >= s}) /
  // (N + 1); check it decreases as the observed score grows.
  std::vector<double> maxima{0.5, 1.2, 2.0, 3.1, 4.4};
  auto adjusted = [&](double s) {
    int b = 0;
    for (double m : maxima) b += m >= s;
    return (1.0 + b) / (maxima.size() + 1.0);
  };
  double prev = 1.1;
  for (double s : {0.1, 0.6, 1.5, 2.5, 5.0}) {
    EXPECT_LE(adjusted(s), prev);
    prev = adjusted(s);
  }
}

TEST(PooledFdr, OneModelEqualsBh) {
  std::vector<double> p{0.01, 0.2, 0.03, 0.9};
  PooledFdrResult pooled = pooled_fdr({p}, 0.05);
  CorrectionResult solo = bh_fdr(p, 0.05);
  for (size_t i = 0; i < p.size(); ++i) {
    EXPECT_DOUBLE_EQ(pooled.p_adjusted[0][i], solo.p_adjusted[i]);
    EXPECT_EQ(pooled.masks[0][i], solo.mask[i]);
  }
}

TEST(PooledFdr, IdenticalModelsMatchInflatedSolo) {
  std::vector<double> p{0.004, 0.02, 0.6};
  std::vector<std::vector<double>> six(6, p);
  PooledFdrResult pooled = pooled_fdr(six, 0.05);
  // Six identical copies: same mask as one copy corrected for 6x the tests.
  std::vector<double> inflated;
  for (int rep = 0; rep < 6; ++rep)
    inflated.insert(inflated.end(), p.begin(), p.end());
  CorrectionResult joint = bh_fdr(inflated, 0.05);
  for (int model = 0; model < 6; ++model)
    for (size_t i = 0; i < p.size(); ++i)
      EXPECT_EQ(pooled.masks[model][i], joint.mask[i]);
}

// Pooling a pure-noise model with a strong-signal model: every noise-model
// discovery is false by construction, and the pooled pass must keep the
// overall realized false discovery proportion at the nominal level.
TEST(PooledFdr, OverallFdrControlledAcrossModels) {
  const int reps = 100, m = 100;
  double fdp_sum = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    SplitMix64 g(5000 + rep);
    std::vector<double> noise(m), signal(m);
    for (auto& v : noise) v = g.next_open_double();
    for (auto& v : signal) v = g.next_open_double() * 1e-5;
    PooledFdrResult pooled = pooled_fdr({noise, signal}, 0.05);
    long false_disc = 0, total_disc = 0;
    for (int i = 0; i < m; ++i) {
      false_disc += pooled.masks[0][static_cast<size_t>(i)] != 0;
      total_disc += pooled.masks[0][static_cast<size_t>(i)] != 0;
      total_disc += pooled.masks[1][static_cast<size_t>(i)] != 0;
    }
    fdp_sum += static_cast<double>(false_disc) /
               static_cast<double>(std::max(1L, total_disc));
  }
  EXPECT_LE(fdp_sum / reps, 0.05 + 0.02);
}

}  // namespace
