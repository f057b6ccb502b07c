#include <gtest/gtest.h>

#include <cmath>

#include "meshspm/inference.hpp"
#include "meshspm/synth.hpp"
#include "oracles.hpp"

using namespace meshspm;

namespace {

// Small synthetic world shared by the tests: jittered grid mesh, intercept +
// dosage design, seeded Gaussian noise.
struct World {
  TriangleMesh mesh;
  DesignMatrix design;
  PhenotypeMatrix pheno;

  World(int rows, int cols, int subjects, std::uint64_t seed,
        double signal = 0.0, double sig_coverage = 0.2) {
    mesh = make_grid_mesh(rows, cols, 1.0, 0.15, seed);
    design.values.resize(subjects, 2);
    design.values.col(0).setOnes();
    design.values.col(1) = make_dosage_predictor(subjects, seed);
    design.column_names = {"intercept", "dose"};
    design.intercept_column = 0;
    design.nuisance_columns = {0};
    design.interest_columns = {1};
    pheno.values = make_null_phenotype(subjects, mesh.vertex_count(), seed);
    if (signal != 0.0) {
      SyntheticSignalSpec spec;
      spec.beta_map = make_patch_beta_map(mesh, sig_coverage, seed + 17);
      spec.intensity = signal;
      spec.predictor = design.values.col(1);
      pheno.values = inject_signal(pheno.values, spec);
      truth = spec.true_mask();
    }
  }

  std::vector<std::uint8_t> truth;
};

TEST(ResidualForming, InterceptOnlyCenters) {
  Matrix z = Matrix::Ones(4, 1);
  Matrix rz = residual_forming_matrix(z);
  Vector y(4);
  y << 1.0, 3.0, -2.0, 6.0;
  Vector centered = rz * y;
  const double mean = y.mean();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(centered[i], y[i] - mean, 1e-12);
}

TEST(ResidualForming, IdempotentAndAnnihilating) {
  SplitMix64 g(3);
  Matrix z(6, 2);
  for (int i = 0; i < 6; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = g.next_gaussian();
  }
  Matrix rz = residual_forming_matrix(z);
  EXPECT_LT((rz * rz - rz).norm(), 1e-9);
  EXPECT_LT((rz * z).norm(), 1e-10);
  EXPECT_LT((rz - rz.transpose()).norm(), 1e-10);
}

TEST(ResidualForming, MatchesExplicitInversionOracle) {
  SplitMix64 g(9);
  Matrix z(5, 2);
  for (int i = 0; i < 5; ++i) {
    z(i, 0) = 1.0;
    z(i, 1) = 0.5 * i + g.next_double();
  }
  Matrix rz = residual_forming_matrix(z);
  Matrix ref = Matrix::Identity(5, 5) -
               z * oracle::invert(z.transpose() * z) * z.transpose();
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(rz(i, j), ref(i, j), 1e-12);
}

TEST(ResidualForming, RankDeficientThrows) {
  Matrix z(4, 2);
  z.col(0).setOnes();
  z.col(1).setOnes();
  EXPECT_THROW(residual_forming_matrix(z), ValidationError);
}

TEST(FreedmanLane, ResponseInNuisanceSpanGivesFlatP) {
  World w(5, 8, 24, 42);
  // Y = Z c exactly: a constant per vertex.
  for (int v = 0; v < w.mesh.vertex_count(); ++v)
    w.pheno.values.col(v).setConstant(1.0 + 0.1 * v);
  PermutationPlan plan;
  plan.num_permutations = 50;
  plan.seed = 7;
  InferenceResult r = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  for (size_t v = 0; v < r.p_raw.size(); ++v) {
    EXPECT_EQ(r.score[v], 0.0);
    EXPECT_DOUBLE_EQ(r.p_raw[v], 1.0);
    EXPECT_EQ(r.fit_flags[v], 1);
  }
}

TEST(FreedmanLane, StrongEffectHitsPFloor) {
  World w(6, 9, 40, 11, /*signal=*/3.0, /*coverage=*/0.3);
  PermutationPlan plan;
  plan.num_permutations = 99;
  plan.seed = 5;
  InferenceResult r = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  const double floor = 1.0 / 100.0;
  double min_in_patch = 1.0;
  for (size_t v = 0; v < r.p_raw.size(); ++v) {
    EXPECT_GT(r.p_raw[v], 0.0);
    EXPECT_LE(r.p_raw[v], 1.0);
    if (w.truth[v]) min_in_patch = std::min(min_in_patch, r.p_raw[v]);
  }
  EXPECT_DOUBLE_EQ(min_in_patch, floor);
}

TEST(FreedmanLane, DeterministicAcrossWorkerCounts) {
  World w(5, 8, 30, 23, 0.8, 0.25);
  for (Estimator est : {Estimator::classical, Estimator::hc4m}) {
    PermutationPlan plan;
    plan.num_permutations = 40;
    plan.seed = 99;
    plan.estimator = est;
    plan.workers = 1;
    InferenceResult a = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
    plan.workers = 3;
    InferenceResult b = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
    plan.workers = 8;
    InferenceResult c = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
    ASSERT_EQ(a.p_raw, b.p_raw);
    ASSERT_EQ(a.p_raw, c.p_raw);
    ASSERT_EQ(a.null_max, b.null_max);
    ASSERT_EQ(a.null_max, c.null_max);
    ASSERT_EQ(a.score, c.score);
  }
}

TEST(FreedmanLane, SameSeedSameResultDifferentSeedDiffers) {
  World w(5, 6, 26, 31, 0.5, 0.3);
  PermutationPlan plan;
  plan.num_permutations = 60;
  plan.seed = 1;
  InferenceResult a = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  InferenceResult b = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  EXPECT_EQ(a.p_raw, b.p_raw);
  plan.seed = 2;
  InferenceResult c = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  EXPECT_NE(a.p_raw, c.p_raw);
}

// Adding a nuisance-span shift to Y leaves every permutation's t map, and
// hence p_raw, unchanged: R_Z (Y + Z c) = R_Z Y and the observed contrast is
// nuisance-invariant.
TEST(FreedmanLane, NuisanceShiftInvariance) {
  World w(5, 8, 28, 77, 0.6, 0.3);
  PermutationPlan plan;
  plan.num_permutations = 50;
  plan.seed = 3;
  InferenceResult base = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);

  PhenotypeMatrix shifted = w.pheno;
  shifted.values.colwise() += Vector(4.0 * w.design.values.col(0));
  InferenceResult moved = freedman_lane(w.design, shifted, &w.mesh, 1, plan);
  for (size_t v = 0; v < base.p_raw.size(); ++v)
    EXPECT_NEAR(base.p_raw[v], moved.p_raw[v], 1.0 / 51.0 + 1e-12);
  double max_dp = 0.0;
  for (size_t v = 0; v < base.p_raw.size(); ++v)
    max_dp = std::max(max_dp, std::fabs(base.p_raw[v] - moved.p_raw[v]));
  EXPECT_LE(max_dp, 1.0 / 51.0);
}

TEST(FreedmanLane, PlainModeScoresOnAbsT) {
  World w(5, 6, 26, 13, 1.0, 0.3);
  PermutationPlan plan;
  plan.num_permutations = 30;
  plan.seed = 8;
  plan.tfce.reset();
  InferenceResult r = freedman_lane(w.design, w.pheno, nullptr, 1, plan);
  for (size_t v = 0; v < r.p_raw.size(); ++v)
    if (!r.fit_flags[v]) EXPECT_EQ(r.score[v], r.tstat[static_cast<Index>(v)]);
}

TEST(FreedmanLane, ZeroPermutationsRejected) {
  World w(4, 5, 20, 2);
  PermutationPlan plan;
  plan.num_permutations = 0;
  EXPECT_THROW(freedman_lane(w.design, w.pheno, &w.mesh, 1, plan),
               ValidationError);
}

TEST(ApplyCorrection, MaskImpliesAdjustedBelowQ) {
  World w(5, 8, 30, 55, 1.2, 0.25);
  PermutationPlan plan;
  plan.num_permutations = 80;
  plan.seed = 4;
  InferenceResult r = freedman_lane(w.design, w.pheno, &w.mesh, 1, plan);
  for (CorrectionMethod m : {CorrectionMethod::bh, CorrectionMethod::two_stage_bh,
                             CorrectionMethod::max_stat}) {
    apply_correction(r, m, 0.05, &w.mesh);
    ASSERT_EQ(r.p_adjusted.size(), r.p_raw.size());
    for (size_t v = 0; v < r.p_raw.size(); ++v) {
      EXPECT_GE(r.p_adjusted[v] + 1e-15, r.p_raw[v]);
      if (r.significant[v]) EXPECT_LE(r.p_adjusted[v], 0.05);
    }
    double area = 0.0;
    for (size_t v = 0; v < r.significant.size(); ++v)
      if (r.significant[v]) area += w.mesh.vertex_area[v];
    EXPECT_NEAR(r.significant_area_fraction, area / w.mesh.total_area, 1e-12);
  }
}

TEST(ClusterExtent, NoSupraThresholdVertices) {
  World w(5, 6, 24, 91);
  PermutationPlan plan;
  plan.num_permutations = 20;
  plan.seed = 6;
  plan.tfce.reset();
  ClusterInferenceResult r =
      cluster_extent_inference(w.design, w.pheno, w.mesh, 1, 50.0, plan);
  EXPECT_TRUE(r.observed_clusters.empty());
  for (auto m : r.significant) EXPECT_EQ(m, 0);
}

TEST(ClusterExtent, StrongCompactSignalFound) {
  World w(8, 10, 60, 19, 3.0, 0.12);
  PermutationPlan plan;
  plan.num_permutations = 199;
  plan.seed = 12;
  plan.tfce.reset();
  ClusterInferenceResult r =
      cluster_extent_inference(w.design, w.pheno, w.mesh, 1, 2.0, plan);
  long sig = 0;
  for (size_t v = 0; v < r.significant.size(); ++v) {
    sig += r.significant[v] != 0;
    // Mask is confined to supra-threshold vertices by construction.
    if (r.significant[v])
      EXPECT_TRUE(std::fabs(r.tstat[static_cast<Index>(v)]) >= 2.0);
  }
  EXPECT_GT(sig, 0);
}

TEST(ClusterExtent, InvalidThresholdRejected) {
  World w(4, 5, 20, 1);
  PermutationPlan plan;
  EXPECT_THROW(
      cluster_extent_inference(w.design, w.pheno, w.mesh, 1, 0.0, plan),
      ValidationError);
}

}  // namespace
