#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/correction.hpp"
#include "meshspm/design.hpp"
#include "meshspm/glm.hpp"
#include "meshspm/mesh.hpp"
#include "meshspm/rng.hpp"
#include "meshspm/tfce.hpp"

namespace meshspm {

/// Permutation run description. Shuffles are derived from (seed, permutation
/// index) alone, so the same plan gives the same inference no matter how the
/// permutations are scheduled across workers.
struct PermutationPlan {
  int num_permutations = 1000;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::classical;
  std::optional<TfceParams> tfce = TfceParams{};  // nullopt: plain |t| scoring
  int workers = 1;

  void validate() const {
    if (num_permutations < 1)
      throw ValidationError("need at least one permutation");
    if (workers < 1) throw ValidationError("workers must be >= 1");
    if (tfce) tfce->validate();
  }
};

// R_Z = I - Z (Z'Z)^-1 Z', the projector annihilating the nuisance column
// span, built from an orthonormal basis rather than an explicit inverse.
inline Matrix residual_forming_matrix(const Matrix& z) {
  const Index n = z.rows();
  if (z.cols() == 0) return Matrix::Identity(n, n);
  if (!z.allFinite()) throw ValidationError("non-finite nuisance entry");
  Eigen::ColPivHouseholderQR<Matrix> qr(z);
  if (qr.rank() < z.cols()) throw ValidationError("rank-deficient nuisance design");
  const Matrix q1 = qr.householderQ() * Matrix::Identity(n, z.cols());
  return Matrix::Identity(n, n) - q1 * q1.transpose();
}

struct InferenceResult {
  // Observed contrast fit.
  Vector beta;
  Vector se;
  Vector tstat;
  std::vector<std::uint8_t> fit_flags;

  // Observed score map: signed TFCE, or the degenerate-cleaned t map when
  // TFCE is off. Permutation p-values are two-sided on its absolute value.
  std::vector<double> score;
  std::vector<double> p_raw;
  std::vector<double> null_max;  // per-permutation max |score|

  // Filled by apply_correction.
  std::vector<double> p_adjusted;
  std::vector<std::uint8_t> significant;
  CorrectionMethod correction = CorrectionMethod::bh;
  double q = 0.05;
  double significant_area_fraction = 0.0;
};

namespace detail {

// Contrast statistics for one (possibly row-shuffled) response matrix,
// sharing the design factorization across all permutations. The shuffled
// response never gets materialized for the classical path: the row
// permutation is folded into the small p x n factors instead.
class PermutationKernel {
 public:
  PermutationKernel(const GlmSolver& solver, int contrast, Estimator estimator)
      : solver_(solver), contrast_(contrast), estimator_(estimator) {
    const Index n = solver.design().rows();
    const Index p = solver.design().cols();
    if (contrast < 0 || contrast >= static_cast<int>(p))
      throw ValidationError("contrast column out of range");
    if (estimator_ == Estimator::hc4m) {
      hc4m_w_.resize(n);
      const double ratio_scale = static_cast<double>(n) / static_cast<double>(p);
      for (Index i = 0; i < n; ++i) {
        const double h = solver.leverages()[i];
        if (h >= 1.0) throw NumericalError("exact leverage point");
        const double r = ratio_scale * h;
        const double delta = std::min(1.0, r) + std::min(1.5, r);
        const double a = solver.pseudo_inverse()(contrast_, i);
        hc4m_w_[i] = a * a * std::exp(-delta * std::log1p(-h));
      }
    }
  }

  /// Fills `tmap` with the degenerate-cleaned t map of `data` under the row
  /// shuffle sigma (data row i of the shuffled response = data.row(sigma[i])).
  /// `colsq` must hold the squared column norms of `data`.
  void tmap_into(const Matrix& data, const std::vector<int>& sigma,
                 const Vector& colsq, std::vector<double>& tmap) {
    const Index n = solver_.design().rows();
    const Index p = solver_.design().cols();
    const Index nvert = data.cols();
    const double dof = static_cast<double>(n - p);
    const double d_c = solver_.xtx_inverse_diag()[contrast_];
    tmap.resize(static_cast<size_t>(nvert));

    gather_.resize(p, n);
    for (Index i = 0; i < n; ++i)
      gather_.col(sigma[static_cast<size_t>(i)]) =
          solver_.pseudo_inverse().col(i);
    beta_ = gather_.row(contrast_) * data;

    if (estimator_ == Estimator::classical) {
      for (Index i = 0; i < n; ++i)
        gather_.col(sigma[static_cast<size_t>(i)]) =
            solver_.q1_transpose().col(i);
      proj_.noalias() = gather_ * data;
      for (Index v = 0; v < nvert; ++v) {
        double rss = colsq[v] - proj_.col(v).squaredNorm();
        if (rss < 0.0) rss = 0.0;
        tmap[static_cast<size_t>(v)] =
            degenerate_rss(rss, colsq[v])
                ? 0.0
                : beta_(0, v) / std::sqrt(rss / dof * d_c);
      }
    } else {
      coef_.noalias() = gather_ * data;  // gather_ still holds shuffled X+
      fitted_.noalias() = solver_.design() * coef_;
      resid_.resize(n, nvert);
      for (Index i = 0; i < n; ++i)
        resid_.row(i) = data.row(sigma[static_cast<size_t>(i)]) - fitted_.row(i);
      for (Index v = 0; v < nvert; ++v) {
        const double rss = resid_.col(v).squaredNorm();
        if (degenerate_rss(rss, colsq[v])) {
          tmap[static_cast<size_t>(v)] = 0.0;
          continue;
        }
        const double var =
            (hc4m_w_.array() * resid_.col(v).array().square()).sum();
        tmap[static_cast<size_t>(v)] =
            (var > 0.0 && std::isfinite(var))
                ? beta_(0, v) / std::sqrt(var)
                : 0.0;
      }
    }
  }

 private:
  const GlmSolver& solver_;
  int contrast_;
  Estimator estimator_;
  Vector hc4m_w_;
  // Scratch, reused across permutations.
  Matrix gather_, proj_, coef_, fitted_, resid_;
  Eigen::Matrix<double, 1, Eigen::Dynamic> beta_;
};

}  // namespace detail

/// Freedman-Lane permutation inference for one contrast. The observed pass
/// fits the full model on Y; each permutation row-shuffles the
/// nuisance-residualized response R_Z Y, refits the full model and scores the
/// resulting t map the same way as the observed one (same estimator, same
/// TFCE parameters, per-map threshold grid). p_raw = (1 + b) / (1 + N) on
/// |score|, two-sided. Bit-identical for a given (inputs, seed, N) whatever
/// the worker count.
inline InferenceResult freedman_lane(const DesignMatrix& design,
                                     const PhenotypeMatrix& phenotypes,
                                     const TriangleMesh* mesh, int contrast,
                                     const PermutationPlan& plan) {
  design.validate();
  phenotypes.validate();
  plan.validate();
  if (phenotypes.subjects() != design.subjects())
    throw ValidationError("phenotype/design subject count mismatch");
  if (plan.tfce && mesh == nullptr)
    throw ValidationError("TFCE scoring requires a mesh");
  if (mesh && mesh->vertex_count() != phenotypes.vertex_count())
    throw ValidationError("mesh/phenotype vertex count mismatch");

  const int n = design.subjects();
  const int nvert = phenotypes.vertex_count();
  const int num_perms = plan.num_permutations;

  GlmSolver solver(design.values);

  InferenceResult result;
  {
    MassUnivariateResult fit =
        mass_univariate(solver, phenotypes.values, contrast, plan.estimator);
    result.beta = std::move(fit.beta);
    result.se = std::move(fit.se);
    result.tstat = std::move(fit.tstat);
    result.fit_flags = std::move(fit.flags);
  }

  std::vector<double> observed_t(static_cast<size_t>(nvert));
  for (int v = 0; v < nvert; ++v)
    observed_t[static_cast<size_t>(v)] =
        result.fit_flags[static_cast<size_t>(v)] ? 0.0 : result.tstat[v];

  if (plan.tfce) {
    TfceWorkspace ws;
    tfce_transform_into(*mesh, observed_t, *plan.tfce, result.score, ws);
  } else {
    result.score = observed_t;
  }
  std::vector<double> observed_abs(static_cast<size_t>(nvert));
  for (int v = 0; v < nvert; ++v)
    observed_abs[static_cast<size_t>(v)] =
        std::fabs(result.score[static_cast<size_t>(v)]);

  // Permutations act on the Z-residualized response.
  const Matrix rz = residual_forming_matrix(design.nuisance_values());
  const Matrix ry = rz * phenotypes.values;
  const Vector ry_colsq = ry.colwise().squaredNorm();

  const int workers = std::min(plan.workers, num_perms);
  std::vector<std::vector<std::uint32_t>> exceed(
      static_cast<size_t>(std::max(1, workers)),
      std::vector<std::uint32_t>(static_cast<size_t>(nvert), 0));
  result.null_max.assign(static_cast<size_t>(num_perms), 0.0);

  struct WorkerState {
    std::unique_ptr<detail::PermutationKernel> kernel;
    std::vector<double> tmap, scores;
    TfceWorkspace ws;
  };
  std::vector<WorkerState> states(static_cast<size_t>(std::max(1, workers)));
  for (auto& s : states)
    s.kernel = std::make_unique<detail::PermutationKernel>(solver, contrast,
                                                           plan.estimator);

  parallel_for(num_perms, workers, [&](int w, int k) {
    WorkerState& st = states[static_cast<size_t>(w)];
    SplitMix64 g = stream_for(plan.seed, rng_domain::permutation,
                              static_cast<std::uint64_t>(k));
    const std::vector<int> sigma = random_permutation(n, g);
    st.kernel->tmap_into(ry, sigma, ry_colsq, st.tmap);

    const std::vector<double>* cmp = &st.tmap;
    if (plan.tfce) {
      tfce_transform_into(*mesh, st.tmap, *plan.tfce, st.scores, st.ws);
      cmp = &st.scores;
    }
    auto& counts = exceed[static_cast<size_t>(w)];
    double perm_max = 0.0;
    for (int v = 0; v < nvert; ++v) {
      const double a = std::fabs((*cmp)[static_cast<size_t>(v)]);
      perm_max = std::max(perm_max, a);
      if (a >= observed_abs[static_cast<size_t>(v)])
        ++counts[static_cast<size_t>(v)];
    }
    result.null_max[static_cast<size_t>(k)] = perm_max;
  });

  result.p_raw.assign(static_cast<size_t>(nvert), 0.0);
  const double denom = static_cast<double>(num_perms) + 1.0;
  for (int v = 0; v < nvert; ++v) {
    std::uint64_t b = 0;
    for (const auto& counts : exceed) b += counts[static_cast<size_t>(v)];
    result.p_raw[static_cast<size_t>(v)] = (1.0 + static_cast<double>(b)) / denom;
  }
  return result;
}

// Fills p_adjusted / significant / area fraction on a completed permutation
// run. For maxstat the adjusted value is the single-step empirical FWER p,
// (1 + #{null max >= observed}) / (N + 1); its mask is equivalent to
// thresholding at the fwer_maxstat order statistic.
inline void apply_correction(InferenceResult& result, CorrectionMethod method,
                             double q, const TriangleMesh* mesh) {
  result.correction = method;
  result.q = q;
  const size_t nvert = result.p_raw.size();
  switch (method) {
    case CorrectionMethod::bh: {
      CorrectionResult c = bh_fdr(result.p_raw, q);
      result.p_adjusted = std::move(c.p_adjusted);
      result.significant = std::move(c.mask);
      break;
    }
    case CorrectionMethod::two_stage_bh: {
      CorrectionResult c = two_stage_bh(result.p_raw, q);
      result.p_adjusted = std::move(c.p_adjusted);
      result.significant = std::move(c.mask);
      break;
    }
    case CorrectionMethod::max_stat: {
      std::vector<double> observed_abs(nvert);
      for (size_t v = 0; v < nvert; ++v)
        observed_abs[v] = std::fabs(result.score[v]);
      MaxStatResult ms = fwer_maxstat(observed_abs, result.null_max, q);
      result.significant = std::move(ms.mask);
      result.p_adjusted.assign(nvert, 0.0);
      const double denom = static_cast<double>(result.null_max.size()) + 1.0;
      for (size_t v = 0; v < nvert; ++v) {
        std::uint64_t b = 0;
        for (double m : result.null_max)
          if (m >= observed_abs[v]) ++b;
        result.p_adjusted[v] = (1.0 + static_cast<double>(b)) / denom;
      }
      break;
    }
  }
  double sig_area = 0.0, total = 0.0;
  if (mesh != nullptr) {
    for (size_t v = 0; v < nvert; ++v) {
      total += mesh->vertex_area[v];
      if (result.significant[v]) sig_area += mesh->vertex_area[v];
    }
  } else {
    total = static_cast<double>(nvert);
    for (size_t v = 0; v < nvert; ++v)
      if (result.significant[v]) sig_area += 1.0;
  }
  result.significant_area_fraction = total > 0.0 ? sig_area / total : 0.0;
}

/// Cluster-extent thresholding baseline. Observed clusters form at
/// t >= h_thr and t <= -h_thr; the null distribution is the largest cluster
/// extent (area, both signs) in each Freedman-Lane permuted map, and
/// clusters whose extent strictly exceeds its (1 - alpha) order statistic
/// are significant.
struct ClusterInferenceResult {
  Vector beta;
  Vector tstat;
  std::vector<std::uint8_t> fit_flags;
  std::vector<VertexCluster> observed_clusters;
  std::vector<double> cluster_extents;
  std::vector<std::uint8_t> cluster_significant;
  std::vector<double> null_max_extent;
  double extent_threshold = 0.0;
  std::vector<std::uint8_t> significant;  // per vertex
};

namespace detail {

inline double max_cluster_extent(const TriangleMesh& mesh,
                                 std::span<const double> tmap, double h_thr) {
  double best = 0.0;
  for (const auto& c : thresholded_components(mesh, tmap, h_thr,
                                              Direction::positive))
    best = std::max(best, c.extent);
  for (const auto& c : thresholded_components(mesh, tmap, -h_thr,
                                              Direction::negative))
    best = std::max(best, c.extent);
  return best;
}

}  // namespace detail

inline ClusterInferenceResult cluster_extent_inference(
    const DesignMatrix& design, const PhenotypeMatrix& phenotypes,
    const TriangleMesh& mesh, int contrast, double h_thr,
    const PermutationPlan& plan, double alpha = 0.05) {
  if (!(h_thr > 0.0)) throw ValidationError("cluster-forming threshold must be > 0");
  design.validate();
  phenotypes.validate();
  plan.validate();
  if (phenotypes.subjects() != design.subjects())
    throw ValidationError("phenotype/design subject count mismatch");
  if (mesh.vertex_count() != phenotypes.vertex_count())
    throw ValidationError("mesh/phenotype vertex count mismatch");

  const int n = design.subjects();
  const int nvert = phenotypes.vertex_count();
  const int num_perms = plan.num_permutations;

  GlmSolver solver(design.values);
  ClusterInferenceResult result;
  {
    MassUnivariateResult fit =
        mass_univariate(solver, phenotypes.values, contrast, plan.estimator);
    result.beta = std::move(fit.beta);
    result.tstat = std::move(fit.tstat);
    result.fit_flags = std::move(fit.flags);
  }
  std::vector<double> observed_t(static_cast<size_t>(nvert));
  for (int v = 0; v < nvert; ++v)
    observed_t[static_cast<size_t>(v)] =
        result.fit_flags[static_cast<size_t>(v)] ? 0.0 : result.tstat[v];

  result.observed_clusters =
      thresholded_components(mesh, observed_t, h_thr, Direction::positive);
  for (auto& c : thresholded_components(mesh, observed_t, -h_thr,
                                        Direction::negative))
    result.observed_clusters.push_back(std::move(c));

  const Matrix rz = residual_forming_matrix(design.nuisance_values());
  const Matrix ry = rz * phenotypes.values;
  const Vector ry_colsq = ry.colwise().squaredNorm();

  const int workers = std::min(plan.workers, num_perms);
  result.null_max_extent.assign(static_cast<size_t>(num_perms), 0.0);

  struct WorkerState {
    std::unique_ptr<detail::PermutationKernel> kernel;
    std::vector<double> tmap;
  };
  std::vector<WorkerState> states(static_cast<size_t>(std::max(1, workers)));
  for (auto& s : states)
    s.kernel = std::make_unique<detail::PermutationKernel>(solver, contrast,
                                                           plan.estimator);

  parallel_for(num_perms, workers, [&](int w, int k) {
    WorkerState& st = states[static_cast<size_t>(w)];
    SplitMix64 g = stream_for(plan.seed, rng_domain::permutation,
                              static_cast<std::uint64_t>(k));
    const std::vector<int> sigma = random_permutation(n, g);
    st.kernel->tmap_into(ry, sigma, ry_colsq, st.tmap);
    result.null_max_extent[static_cast<size_t>(k)] =
        detail::max_cluster_extent(mesh, st.tmap, h_thr);
  });

  std::vector<double> sorted = result.null_max_extent;
  std::sort(sorted.begin(), sorted.end());
  int kth = static_cast<int>(
      std::ceil((1.0 - alpha) * static_cast<double>(num_perms + 1)));
  kth = std::clamp(kth, 1, num_perms);
  result.extent_threshold = sorted[static_cast<size_t>(kth - 1)];

  result.significant.assign(static_cast<size_t>(nvert), 0);
  for (const auto& c : result.observed_clusters) {
    result.cluster_extents.push_back(c.extent);
    const bool sig = c.extent > result.extent_threshold;
    result.cluster_significant.push_back(sig);
    if (sig)
      for (int v : c.vertex_ids) result.significant[static_cast<size_t>(v)] = 1;
  }
  return result;
}

}  // namespace meshspm
