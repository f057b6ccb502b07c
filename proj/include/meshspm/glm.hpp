#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/design.hpp"

namespace meshspm {

enum class Estimator { classical, hc4m };

inline const char* estimator_name(Estimator e) {
  return e == Estimator::classical ? "ols" : "hc4m";
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "ols" || s == "classical") return Estimator::classical;
  if (s == "hc4m") return Estimator::hc4m;
  throw ValidationError("unknown estimator '" + s + "'");
}

/// Single-response least squares output.
struct FitSummary {
  Vector coefficients;
  Vector se;         // classical, from the unbiased variance estimate
  Vector residuals;
  double sigma2 = 0.0;
};

/// One QR factorization of the design, shared by every vertex fit and every
/// permutation pass. The design never changes across vertices, so all the
/// expensive pieces (pseudo-inverse, orthonormal column basis, leverages,
/// Gram inverse) are computed exactly once.
class GlmSolver {
 public:
  explicit GlmSolver(Matrix design) : x_(std::move(design)) {
    const Index n = x_.rows(), p = x_.cols();
    if (n <= p) throw ValidationError("underdetermined: subjects <= predictors");
    if (!x_.allFinite()) throw ValidationError("non-finite design entry");
    Eigen::ColPivHouseholderQR<Matrix> qr(x_);
    if (qr.rank() < p) throw ValidationError("singular design");
    pinv_ = qr.solve(Matrix::Identity(n, n));
    q1t_ = (qr.householderQ() * Matrix::Identity(n, p)).transpose();
    leverages_ = q1t_.colwise().squaredNorm();
    xtx_inverse_ = pinv_ * pinv_.transpose();
    xtx_inverse_diag_ = xtx_inverse_.diagonal();
  }

  const Matrix& design() const { return x_; }
  int observations() const { return static_cast<int>(x_.rows()); }
  int predictors() const { return static_cast<int>(x_.cols()); }

  /// (X'X)^-1 X', shape predictors x observations.
  const Matrix& pseudo_inverse() const { return pinv_; }
  /// Orthonormal basis of the design column span, transposed (p x n).
  const Matrix& q1_transpose() const { return q1t_; }
  /// Hat-matrix diagonal.
  const Vector& leverages() const { return leverages_; }
  const Matrix& xtx_inverse() const { return xtx_inverse_; }
  const Vector& xtx_inverse_diag() const { return xtx_inverse_diag_; }

  FitSummary fit(const Vector& y) const {
    if (y.size() != x_.rows()) throw ValidationError("response length mismatch");
    FitSummary out;
    out.coefficients = pinv_ * y;
    out.residuals = y - x_ * out.coefficients;
    const double dof = static_cast<double>(x_.rows() - x_.cols());
    out.sigma2 = out.residuals.squaredNorm() / dof;
    out.se = (out.sigma2 * xtx_inverse_diag_.array()).sqrt();
    return out;
  }

 private:
  Matrix x_;
  Matrix pinv_;
  Matrix q1t_;
  Vector leverages_;
  Matrix xtx_inverse_;
  Vector xtx_inverse_diag_;
};

inline FitSummary ols_fit(const Matrix& design, const Vector& y) {
  return GlmSolver(design).fit(y);
}

// HC4m sandwich standard errors. Squared residuals are discounted by
// (1 - h_i)^delta_i with delta_i = min(g1, n h_i / p) + min(g2, n h_i / p);
// g1 = 1 and g2 = 1.5 are the estimator's published constants and are only
// exposed for experimentation.
inline Vector hc4m_se(const Matrix& pseudo_inverse, const Vector& residuals,
                      const Vector& leverages, double gamma1 = 1.0,
                      double gamma2 = 1.5) {
  const Index p = pseudo_inverse.rows();
  const Index n = pseudo_inverse.cols();
  if (residuals.size() != n || leverages.size() != n)
    throw ValidationError("residual/leverage length mismatch");
  Vector omega(n);
  const double ratio_scale = static_cast<double>(n) / static_cast<double>(p);
  for (Index i = 0; i < n; ++i) {
    const double h = leverages[i];
    if (h >= 1.0) throw NumericalError("exact leverage point");
    const double r = ratio_scale * h;
    const double delta = std::min(gamma1, r) + std::min(gamma2, r);
    omega[i] = residuals[i] * residuals[i] *
               std::exp(-delta * std::log1p(-h));
  }
  Vector se(p);
  for (Index c = 0; c < p; ++c)
    se[c] = std::sqrt(
        (pseudo_inverse.row(c).array().square() * omega.transpose().array())
            .sum());
  return se;
}

/// Per-vertex contrast statistics. Flagged vertices (flags[v] != 0) had a
/// degenerate fit: residual variance at rounding-noise level or a
/// non-finite standard error. Their t is NaN and must be treated as "no
/// evidence" downstream, never dropped.
struct MassUnivariateResult {
  Vector beta;
  Vector se;
  Vector tstat;
  std::vector<std::uint8_t> flags;
  Matrix residuals;  // subjects x vertices, only when requested
};

namespace detail {

// Residual sum of squares is at numerical-noise level relative to the
// response scale: the fit is exact and a t-statistic would be meaningless.
// The projection route computes rss as a difference of squared norms whose
// cancellation error is a few hundred ulps of |y|^2, so the cutoff sits well
// above that and still far below any R^2 a real response can reach.
inline bool degenerate_rss(double rss, double response_sq_norm) {
  return !(rss > response_sq_norm * 1e-12);
}

}  // namespace detail

inline MassUnivariateResult mass_univariate(const GlmSolver& solver,
                                            const Matrix& phenotypes,
                                            int contrast, Estimator estimator,
                                            bool keep_residuals = false) {
  const Index n = solver.design().rows();
  const Index p = solver.design().cols();
  const Index nvert = phenotypes.cols();
  if (phenotypes.rows() != n)
    throw ValidationError("phenotype/design subject count mismatch");
  if (contrast < 0 || contrast >= p)
    throw ValidationError("contrast column out of range");

  MassUnivariateResult out;
  out.beta = solver.pseudo_inverse().row(contrast) * phenotypes;
  out.se.resize(nvert);
  out.tstat.resize(nvert);
  out.flags.assign(static_cast<size_t>(nvert), 0);

  const double dof = static_cast<double>(n - p);
  const double d_c = solver.xtx_inverse_diag()[contrast];

  if (estimator == Estimator::classical) {
    // rss = |y|^2 - |Q1' y|^2; the projection route avoids materializing the
    // residual matrix unless asked for.
    const Matrix proj = solver.q1_transpose() * phenotypes;
    for (Index v = 0; v < nvert; ++v) {
      const double ysq = phenotypes.col(v).squaredNorm();
      double rss = ysq - proj.col(v).squaredNorm();
      if (rss < 0.0) rss = 0.0;
      if (detail::degenerate_rss(rss, ysq)) {
        out.se[v] = 0.0;
        out.tstat[v] = std::numeric_limits<double>::quiet_NaN();
        out.flags[static_cast<size_t>(v)] = 1;
        continue;
      }
      out.se[v] = std::sqrt(rss / dof * d_c);
      out.tstat[v] = out.beta[v] / out.se[v];
    }
    if (keep_residuals) {
      Matrix coef = solver.pseudo_inverse() * phenotypes;
      out.residuals = phenotypes - solver.design() * coef;
    }
  } else {
    Matrix coef = solver.pseudo_inverse() * phenotypes;
    Matrix resid = phenotypes - solver.design() * coef;
    // Per-observation sandwich weights for the contrast row, fixed across
    // vertices; only the squared residuals vary.
    Vector w(n);
    const double ratio_scale =
        static_cast<double>(n) / static_cast<double>(p);
    for (Index i = 0; i < n; ++i) {
      const double h = solver.leverages()[i];
      if (h >= 1.0) throw NumericalError("exact leverage point");
      const double r = ratio_scale * h;
      const double delta = std::min(1.0, r) + std::min(1.5, r);
      const double a = solver.pseudo_inverse()(contrast, i);
      w[i] = a * a * std::exp(-delta * std::log1p(-h));
    }
    for (Index v = 0; v < nvert; ++v) {
      const double ysq = phenotypes.col(v).squaredNorm();
      const double rss = resid.col(v).squaredNorm();
      if (detail::degenerate_rss(rss, ysq)) {
        out.se[v] = 0.0;
        out.tstat[v] = std::numeric_limits<double>::quiet_NaN();
        out.flags[static_cast<size_t>(v)] = 1;
        continue;
      }
      const double var = (w.array() * resid.col(v).array().square()).sum();
      if (!(var > 0.0) || !std::isfinite(var)) {
        out.se[v] = 0.0;
        out.tstat[v] = std::numeric_limits<double>::quiet_NaN();
        out.flags[static_cast<size_t>(v)] = 1;
        continue;
      }
      out.se[v] = std::sqrt(var);
      out.tstat[v] = out.beta[v] / out.se[v];
    }
    if (keep_residuals) out.residuals = std::move(resid);
  }
  return out;
}

inline MassUnivariateResult mass_univariate(const DesignMatrix& design,
                                            const PhenotypeMatrix& phenotypes,
                                            int contrast, Estimator estimator,
                                            bool keep_residuals = false) {
  design.validate();
  phenotypes.validate();
  if (phenotypes.subjects() != design.subjects())
    throw ValidationError("phenotype/design subject count mismatch");
  GlmSolver solver(design.values);
  return mass_univariate(solver, phenotypes.values, contrast, estimator,
                         keep_residuals);
}

// t map with degenerate fits replaced by zero, the form consumed by TFCE and
// permutation scoring.
inline std::vector<double> clean_tmap(const MassUnivariateResult& fit) {
  std::vector<double> t(static_cast<size_t>(fit.tstat.size()));
  for (Index v = 0; v < fit.tstat.size(); ++v)
    t[static_cast<size_t>(v)] = fit.flags[static_cast<size_t>(v)] ? 0.0 : fit.tstat[v];
  return t;
}

}  // namespace meshspm
