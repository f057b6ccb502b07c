#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/csv.hpp"

namespace meshspm {

/// Subjects-by-predictors design. Column roles drive the whole pipeline:
/// interest columns are the predictors being tested, nuisance columns
/// (including the intercept) are the covariates residualized away by the
/// permutation scheme. The two role lists must partition all columns.
struct DesignMatrix {
  Matrix values;
  std::vector<std::string> column_names;
  std::vector<int> interest_columns;
  std::vector<int> nuisance_columns;
  int intercept_column = -1;  // -1 when the model has no intercept

  int subjects() const { return static_cast<int>(values.rows()); }
  int predictors() const { return static_cast<int>(values.cols()); }

  int column_index(const std::string& name) const {
    for (size_t j = 0; j < column_names.size(); ++j)
      if (column_names[j] == name) return static_cast<int>(j);
    return -1;
  }

  Matrix nuisance_values() const {
    Matrix z(values.rows(), static_cast<Index>(nuisance_columns.size()));
    for (size_t j = 0; j < nuisance_columns.size(); ++j)
      z.col(static_cast<Index>(j)) = values.col(nuisance_columns[j]);
    return z;
  }

  void validate() const {
    const int p = predictors();
    if (subjects() == 0 || p == 0) throw ValidationError("empty design");
    std::vector<char> role(static_cast<size_t>(p), 0);
    for (int j : interest_columns) {
      if (j < 0 || j >= p) throw ValidationError("interest column out of range");
      role[static_cast<size_t>(j)] += 1;
    }
    for (int j : nuisance_columns) {
      if (j < 0 || j >= p) throw ValidationError("nuisance column out of range");
      role[static_cast<size_t>(j)] += 1;
    }
    for (int j = 0; j < p; ++j)
      if (role[static_cast<size_t>(j)] != 1)
        throw ValidationError("column '" + column_names[static_cast<size_t>(j)] +
                              "' must have exactly one role");
    if (intercept_column >= 0 &&
        std::find(nuisance_columns.begin(), nuisance_columns.end(),
                  intercept_column) == nuisance_columns.end())
      throw ValidationError("intercept must be a nuisance column");
    for (int j = 0; j < p; ++j) {
      if (j == intercept_column) continue;
      const double first = values(0, j);
      if ((values.col(j).array() == first).all())
        throw ValidationError("constant non-intercept column '" +
                              column_names[static_cast<size_t>(j)] + "'");
    }
    if (!values.allFinite()) throw ValidationError("non-finite design entry");
  }
};

/// Subjects-by-vertices phenotype values; row order must match the design.
struct PhenotypeMatrix {
  Matrix values;
  std::vector<std::string> subject_ids;  // may be empty

  int subjects() const { return static_cast<int>(values.rows()); }
  int vertex_count() const { return static_cast<int>(values.cols()); }

  void validate() const {
    if (values.size() == 0) throw ValidationError("empty phenotype matrix");
    if (!values.allFinite()) throw ValidationError("non-finite phenotype entry");
  }
};

inline double sample_mean(const Eigen::Ref<const Vector>& x) {
  return x.mean();
}

// Sample standard deviation with the n-1 denominator.
inline double sample_sd(const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  if (n < 2) throw ValidationError("need at least two observations");
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() /
                   static_cast<double>(n - 1));
}

// Columns scaled to mean 0, sample sd 1. `skip_column` exempts an intercept.
inline Matrix standardize_columns(const Matrix& m, int skip_column = -1) {
  Matrix out = m;
  for (Index j = 0; j < m.cols(); ++j) {
    if (j == skip_column) continue;
    const double mean = m.col(j).mean();
    const double sd = sample_sd(m.col(j));
    if (sd == 0.0)
      throw ValidationError("zero variance predictor in column " +
                            std::to_string(j));
    out.col(j) = (m.col(j).array() - mean) / sd;
  }
  return out;
}

inline void standardize_design(DesignMatrix& design) {
  design.values = standardize_columns(design.values, design.intercept_column);
}

// Per-vertex standardization of the phenotype (each vertex is its own
// response with its own sample sd). Vertices with zero variance cannot be
// scaled; they are centered and reported so fits there can be flagged.
inline std::vector<int> standardize_phenotype(PhenotypeMatrix& pheno) {
  std::vector<int> degenerate;
  for (Index v = 0; v < pheno.values.cols(); ++v) {
    const double mean = pheno.values.col(v).mean();
    const double sd = sample_sd(pheno.values.col(v));
    if (sd == 0.0) {
      pheno.values.col(v).array() -= mean;
      degenerate.push_back(static_cast<int>(v));
    } else {
      pheno.values.col(v) = (pheno.values.col(v).array() - mean) / sd;
    }
  }
  return degenerate;
}

// Design CSV: header row of column names, numeric body. A column named in
// `id_column` (default "subject") is treated as row labels, not data.
inline DesignMatrix load_design_csv(const std::string& path,
                                    const std::string& id_column = "subject") {
  const CsvTable table = read_csv(path);
  if (table.rows.empty()) throw IoError(path + ": no data rows");
  const int id = table.column(id_column);
  std::vector<int> data_cols;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (static_cast<int>(j) != id) data_cols.push_back(static_cast<int>(j));
  if (data_cols.empty()) throw IoError(path + ": no data columns");

  DesignMatrix design;
  design.values.resize(static_cast<Index>(table.rows.size()),
                       static_cast<Index>(data_cols.size()));
  for (int j : data_cols)
    design.column_names.push_back(table.header[static_cast<size_t>(j)]);
  for (size_t i = 0; i < table.rows.size(); ++i)
    for (size_t j = 0; j < data_cols.size(); ++j)
      design.values(static_cast<Index>(i), static_cast<Index>(j)) =
          parse_double(table.rows[i][static_cast<size_t>(data_cols[j])],
                       path + " row " + std::to_string(i + 2));
  return design;
}

inline PhenotypeMatrix load_phenotype_csv(
    const std::string& path, const std::string& id_column = "subject") {
  const CsvTable table = read_csv(path);
  if (table.rows.empty()) throw IoError(path + ": no data rows");
  const int id = table.column(id_column);
  std::vector<int> data_cols;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (static_cast<int>(j) != id) data_cols.push_back(static_cast<int>(j));
  if (data_cols.empty()) throw IoError(path + ": no data columns");

  PhenotypeMatrix pheno;
  pheno.values.resize(static_cast<Index>(table.rows.size()),
                      static_cast<Index>(data_cols.size()));
  for (size_t i = 0; i < table.rows.size(); ++i) {
    if (id >= 0) pheno.subject_ids.push_back(table.rows[i][static_cast<size_t>(id)]);
    for (size_t j = 0; j < data_cols.size(); ++j)
      pheno.values(static_cast<Index>(i), static_cast<Index>(j)) =
          parse_double(table.rows[i][static_cast<size_t>(data_cols[j])],
                       path + " row " + std::to_string(i + 2));
  }
  return pheno;
}

}  // namespace meshspm
