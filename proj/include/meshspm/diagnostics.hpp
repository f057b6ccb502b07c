#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/design.hpp"
#include "meshspm/glm.hpp"
#include "meshspm/special.hpp"

namespace meshspm {

/// Design and residual diagnostics. VIF and the condition number describe
/// multicollinearity of the design alone; the Breusch-Pagan and White tests
/// need responses and are skipped when no phenotype is given.
struct DiagnosticsReport {
  std::vector<std::string> vif_names;
  std::vector<double> vif;  // +inf marks perfect collinearity
  double condition_number = 0.0;
  std::vector<double> breusch_pagan_p;  // per vertex, empty without phenotype
  std::vector<double> white_p;
  bool white_terms_truncated = false;
};

namespace detail {

// R^2 of column y against the given regressors (centered total sum of
// squares), via least squares on the regressor column span.
inline double aux_r_squared(const Matrix& regressors, const Vector& y) {
  Eigen::ColPivHouseholderQR<Matrix> qr(regressors);
  const Vector fitted = regressors * qr.solve(y);
  const double rss = (y - fitted).squaredNorm();
  const double mean = y.mean();
  const double tss = (y.array() - mean).square().sum();
  if (tss <= 0.0) return 0.0;
  double r2 = 1.0 - rss / tss;
  if (r2 < 0.0) r2 = 0.0;
  if (r2 > 1.0) r2 = 1.0;
  return r2;
}

// Lagrange-multiplier p-value from regressing squared residuals on aux
// regressors: LM = n R^2, chi-square with rank(aux)-1 dof (Koenker's
// studentized form).
inline double lm_test_p(const Matrix& aux, const Vector& squared_residuals) {
  Eigen::ColPivHouseholderQR<Matrix> qr(aux);
  const Index rank = qr.rank();
  if (rank <= 1) return 1.0;  // only an intercept survives; nothing to test
  const Vector fitted = aux * qr.solve(squared_residuals);
  const double rss = (squared_residuals - fitted).squaredNorm();
  const double mean = squared_residuals.mean();
  const double tss = (squared_residuals.array() - mean).square().sum();
  if (tss <= 0.0) return 1.0;
  double r2 = 1.0 - rss / tss;
  if (r2 < 0.0) r2 = 0.0;
  if (r2 > 1.0) r2 = 1.0;
  const double lm = static_cast<double>(aux.rows()) * r2;
  return chi_squared_sf(lm, static_cast<double>(rank - 1));
}

}  // namespace detail

// White-test auxiliary design: intercept, predictors, squares, then cross
// products, truncated so the auxiliary regression keeps at least two
// residual degrees of freedom.
inline Matrix white_auxiliary_design(const Matrix& x, int intercept_column,
                                     bool* truncated = nullptr) {
  const Index n = x.rows();
  std::vector<Vector> cols;
  cols.push_back(Vector::Ones(n));
  std::vector<Index> base;
  for (Index j = 0; j < x.cols(); ++j)
    if (j != intercept_column) base.push_back(j);
  for (Index j : base) cols.push_back(x.col(j));
  for (Index j : base) cols.push_back(x.col(j).array().square());
  for (size_t a = 0; a < base.size(); ++a)
    for (size_t b = a + 1; b < base.size(); ++b)
      cols.push_back(x.col(base[a]).array() * x.col(base[b]).array());

  const size_t max_cols =
      n > 3 ? static_cast<size_t>(n - 2) : static_cast<size_t>(1);
  if (truncated) *truncated = cols.size() > max_cols;
  if (cols.size() > max_cols) cols.resize(max_cols);

  Matrix aux(n, static_cast<Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j)
    aux.col(static_cast<Index>(j)) = cols[j];
  return aux;
}

inline DiagnosticsReport diagnostics(const DesignMatrix& design,
                                     const PhenotypeMatrix* phenotypes = nullptr,
                                     int workers = 1) {
  const Matrix& x = design.values;
  const Index n = x.rows();
  const Index p = x.cols();
  if (n <= p) throw ValidationError("underdetermined: subjects <= predictors");

  DiagnosticsReport report;

  // VIF per non-intercept column from the auxiliary regression of that
  // column on all the others.
  for (Index j = 0; j < p; ++j) {
    if (j == design.intercept_column) continue;
    Matrix others(n, p - 1);
    Index k = 0;
    for (Index m = 0; m < p; ++m)
      if (m != j) others.col(k++) = x.col(m);
    const double r2 = detail::aux_r_squared(others, x.col(j));
    report.vif_names.push_back(design.column_names[static_cast<size_t>(j)]);
    report.vif.push_back(r2 >= 1.0 ? std::numeric_limits<double>::infinity()
                                   : 1.0 / (1.0 - r2));
  }

  {
    Matrix standardized = x;
    for (Index j = 0; j < p; ++j) {
      if (j == design.intercept_column) continue;
      const double mean = x.col(j).mean();
      const double sd = sample_sd(x.col(j));
      if (sd > 0.0) standardized.col(j) = (x.col(j).array() - mean) / sd;
    }
    Eigen::JacobiSVD<Matrix> svd(standardized);
    const auto& sigma = svd.singularValues();
    const double smin = sigma[sigma.size() - 1];
    report.condition_number =
        smin > 0.0 ? sigma[0] / smin : std::numeric_limits<double>::infinity();
  }

  if (phenotypes != nullptr) {
    if (phenotypes->subjects() != static_cast<int>(n))
      throw ValidationError("phenotype/design subject count mismatch");
    const Index nvert = phenotypes->values.cols();
    GlmSolver solver(x);
    Matrix coef = solver.pseudo_inverse() * phenotypes->values;
    Matrix resid = phenotypes->values - x * coef;

    Matrix bp_aux;
    if (design.intercept_column >= 0) {
      bp_aux = x;
    } else {
      bp_aux.resize(n, p + 1);
      bp_aux << Vector::Ones(n), x;
    }
    Matrix white_aux =
        white_auxiliary_design(x, design.intercept_column,
                               &report.white_terms_truncated);

    report.breusch_pagan_p.assign(static_cast<size_t>(nvert), 1.0);
    report.white_p.assign(static_cast<size_t>(nvert), 1.0);
    parallel_for(static_cast<int>(nvert), workers, [&](int, int v) {
      const Vector e2 = resid.col(v).array().square();
      report.breusch_pagan_p[static_cast<size_t>(v)] =
          detail::lm_test_p(bp_aux, e2);
      report.white_p[static_cast<size_t>(v)] = detail::lm_test_p(white_aux, e2);
    });
  }

  return report;
}

}  // namespace meshspm
