#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/design.hpp"
#include "meshspm/glm.hpp"
#include "meshspm/inference.hpp"
#include "meshspm/mesh.hpp"
#include "meshspm/rng.hpp"
#include "meshspm/tfce.hpp"

namespace meshspm {

// Triangulated rows x cols grid; jitter > 0 perturbs coordinates so the
// triangles are non-congruent and vertex areas uneven, like a real surface.
inline TriangleMesh make_grid_mesh(int rows, int cols, double spacing = 1.0,
                                   double jitter = 0.0,
                                   std::uint64_t seed = 0) {
  if (rows < 2 || cols < 2) throw ValidationError("grid needs >= 2x2 vertices");
  std::vector<std::array<double, 3>> vertices;
  vertices.reserve(static_cast<size_t>(rows) * static_cast<size_t>(cols));
  SplitMix64 g = stream_for(seed, rng_domain::geometry, 0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double dx = 0.0, dy = 0.0, dz = 0.0;
      if (jitter > 0.0) {
        dx = jitter * (2.0 * g.next_double() - 1.0);
        dy = jitter * (2.0 * g.next_double() - 1.0);
        dz = jitter * (2.0 * g.next_double() - 1.0);
      }
      vertices.push_back({i * spacing + dx, j * spacing + dy, dz});
    }
  auto at = [cols](int i, int j) { return i * cols + j; };
  std::vector<std::array<int, 3>> triangles;
  for (int i = 0; i + 1 < rows; ++i)
    for (int j = 0; j + 1 < cols; ++j) {
      triangles.push_back({at(i, j), at(i, j + 1), at(i + 1, j)});
      triangles.push_back({at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)});
    }
  return TriangleMesh::build(std::move(vertices), std::move(triangles));
}

// Vertices within `depth` adjacency hops of any marked vertex (the mark
// itself is distance 0).
inline std::vector<std::uint8_t> vertices_within_distance(
    const TriangleMesh& mesh, const std::vector<std::uint8_t>& marks,
    int depth) {
  const int nv = mesh.vertex_count();
  if (static_cast<int>(marks.size()) != nv)
    throw ValidationError("mark length mismatch");
  std::vector<int> dist(static_cast<size_t>(nv), -1);
  std::deque<int> frontier;
  for (int v = 0; v < nv; ++v)
    if (marks[static_cast<size_t>(v)]) {
      dist[static_cast<size_t>(v)] = 0;
      frontier.push_back(v);
    }
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop_front();
    if (dist[static_cast<size_t>(v)] >= depth) continue;
    for (int w : mesh.neighbors[static_cast<size_t>(v)])
      if (dist[static_cast<size_t>(w)] < 0) {
        dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
        frontier.push_back(w);
      }
  }
  std::vector<std::uint8_t> within(static_cast<size_t>(nv), 0);
  for (int v = 0; v < nv; ++v)
    within[static_cast<size_t>(v)] = dist[static_cast<size_t>(v)] >= 0;
  return within;
}

/// Injected-signal description: the effect added to subject s at vertex v is
/// intensity * beta_map[v] * predictor[s].
struct SyntheticSignalSpec {
  std::vector<double> beta_map;  // values in [-1, 1]
  double intensity = 0.0;
  Vector predictor;

  double coverage() const {
    if (beta_map.empty()) return 0.0;
    size_t nonzero = 0;
    for (double b : beta_map) nonzero += b != 0.0;
    return static_cast<double>(nonzero) / static_cast<double>(beta_map.size());
  }

  std::vector<std::uint8_t> true_mask() const {
    std::vector<std::uint8_t> mask(beta_map.size(), 0);
    for (size_t v = 0; v < beta_map.size(); ++v) mask[v] = beta_map[v] != 0.0;
    return mask;
  }
};

inline Matrix inject_signal(const Matrix& phenotype,
                            const SyntheticSignalSpec& spec) {
  if (static_cast<size_t>(phenotype.cols()) != spec.beta_map.size())
    throw ValidationError("beta map length does not match vertex count");
  if (phenotype.rows() != spec.predictor.size())
    throw ValidationError("predictor length does not match subject count");
  Eigen::RowVectorXd beta(static_cast<Index>(spec.beta_map.size()));
  for (size_t v = 0; v < spec.beta_map.size(); ++v)
    beta[static_cast<Index>(v)] = spec.beta_map[v];
  return phenotype + spec.intensity * (spec.predictor * beta);
}

struct DetectionMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double fdr = 0.0;
  long true_positives = 0, false_positives = 0;
  long true_negatives = 0, false_negatives = 0;
};

inline DetectionMetrics evaluate_detection(
    const std::vector<std::uint8_t>& detected,
    const std::vector<std::uint8_t>& truth) {
  if (detected.size() != truth.size())
    throw ValidationError("mask length mismatch");
  DetectionMetrics m;
  for (size_t v = 0; v < truth.size(); ++v) {
    const bool d = detected[v] != 0, t = truth[v] != 0;
    m.true_positives += d && t;
    m.false_positives += d && !t;
    m.true_negatives += !d && !t;
    m.false_negatives += !d && t;
  }
  const long pos = m.true_positives + m.false_negatives;
  const long neg = m.true_negatives + m.false_positives;
  m.sensitivity = pos > 0 ? static_cast<double>(m.true_positives) / pos : 0.0;
  m.specificity = neg > 0 ? static_cast<double>(m.true_negatives) / neg : 1.0;
  m.fdr = static_cast<double>(m.false_positives) /
          std::max(1L, m.false_positives + m.true_positives);
  return m;
}

// Seeded iid Gaussian noise standing in for a real null cohort.
inline Matrix make_null_phenotype(int subjects, int vertices,
                                  std::uint64_t seed) {
  if (subjects < 1 || vertices < 1) throw ValidationError("empty phenotype");
  Matrix y(subjects, vertices);
  SplitMix64 g = stream_for(seed, rng_domain::noise, 0);
  for (int s = 0; s < subjects; ++s)
    for (int v = 0; v < vertices; ++v) y(s, v) = g.next_gaussian();
  return y;
}

// Neighbour-averaging smoothing passes add spatial coherence to synthetic
// noise, mimicking the correlation structure of measured surface phenotypes.
inline void smooth_phenotype(const TriangleMesh& mesh, Matrix& phenotype,
                             int passes) {
  if (mesh.vertex_count() != static_cast<int>(phenotype.cols()))
    throw ValidationError("mesh/phenotype vertex count mismatch");
  const int nv = mesh.vertex_count();
  Matrix current = phenotype;
  Matrix next(phenotype.rows(), phenotype.cols());
  for (int pass = 0; pass < passes; ++pass) {
    for (int v = 0; v < nv; ++v) {
      Vector acc = current.col(v);
      const auto& nb = mesh.neighbors[static_cast<size_t>(v)];
      for (int w : nb) acc += current.col(w);
      next.col(v) = acc / static_cast<double>(nb.size() + 1);
    }
    std::swap(current, next);
  }
  phenotype = std::move(current);
}

// Contiguous patch of non-null coefficients grown breadth-first from a
// seeded start vertex. Values peak at 1 in the middle and decay towards
// `rim_value` at the patch boundary; `sign` selects positive or negative
// effect maps.
inline std::vector<double> make_patch_beta_map(const TriangleMesh& mesh,
                                               double coverage,
                                               std::uint64_t seed,
                                               double sign = 1.0,
                                               double rim_value = 0.2) {
  const int nv = mesh.vertex_count();
  if (!(coverage > 0.0 && coverage <= 1.0))
    throw ValidationError("coverage must lie in (0, 1]");
  const int target = std::max(1, static_cast<int>(std::lround(coverage * nv)));
  SplitMix64 g = stream_for(seed, rng_domain::signal, 0);
  const int start = static_cast<int>(g.next_below(static_cast<std::uint64_t>(nv)));

  std::vector<int> depth(static_cast<size_t>(nv), -1);
  std::vector<int> members;
  std::deque<int> frontier;
  depth[static_cast<size_t>(start)] = 0;
  frontier.push_back(start);
  int next_seed = 0;
  while (static_cast<int>(members.size()) < target) {
    if (frontier.empty()) {
      // Disconnected mesh: continue from the lowest untouched vertex so the
      // requested coverage is still met.
      while (next_seed < nv && depth[static_cast<size_t>(next_seed)] >= 0)
        ++next_seed;
      if (next_seed >= nv) break;
      depth[static_cast<size_t>(next_seed)] = 0;
      frontier.push_back(next_seed);
    }
    const int v = frontier.front();
    frontier.pop_front();
    members.push_back(v);
    for (int w : mesh.neighbors[static_cast<size_t>(v)])
      if (depth[static_cast<size_t>(w)] < 0) {
        depth[static_cast<size_t>(w)] = depth[static_cast<size_t>(v)] + 1;
        frontier.push_back(w);
      }
  }

  int max_depth = 0;
  for (int v : members) max_depth = std::max(max_depth, depth[static_cast<size_t>(v)]);
  std::vector<double> beta(static_cast<size_t>(nv), 0.0);
  for (int v : members) {
    const double frac =
        max_depth > 0
            ? static_cast<double>(depth[static_cast<size_t>(v)]) / max_depth
            : 0.0;
    beta[static_cast<size_t>(v)] = sign * (1.0 - (1.0 - rim_value) * frac);
  }
  return beta;
}

// Continuous allele-dosage style predictor in [0, 2]: Hardy-Weinberg
// genotype draws plus a little imputation-style noise.
inline Vector make_dosage_predictor(int subjects, std::uint64_t seed,
                                    double maf = 0.3) {
  Vector x(subjects);
  for (int attempt = 0; attempt < 16; ++attempt) {
    SplitMix64 g = stream_for(seed, rng_domain::dosage,
                              static_cast<std::uint64_t>(attempt));
    for (int s = 0; s < subjects; ++s) {
      const double u = g.next_double();
      const double p0 = (1.0 - maf) * (1.0 - maf);
      const double p1 = p0 + 2.0 * maf * (1.0 - maf);
      double dose = u < p0 ? 0.0 : (u < p1 ? 1.0 : 2.0);
      dose += 0.05 * g.next_gaussian();
      x[s] = std::clamp(dose, 0.0, 2.0);
    }
    if ((x.array() != x[0]).any()) return x;
  }
  throw NumericalError("could not draw a non-constant dosage predictor");
}

enum class PipelineVariant { mur, tfce, cluster_extent };

inline const char* variant_name(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::mur: return "mur";
    case PipelineVariant::tfce: return "tfce";
    case PipelineVariant::cluster_extent: return "cluster-extent";
  }
  return "?";
}

struct SweepConfig {
  std::vector<int> subsample_sizes;
  std::vector<double> intensities;
  std::vector<PipelineVariant> variants{PipelineVariant::tfce};
  std::vector<TfceParams> tfce_grid{TfceParams{}};   // tfce variant cells
  std::vector<double> cluster_thresholds{2.0};       // cluster-extent cells
  int replicates = 1;
  int num_permutations = 500;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::classical;
  double q = 0.05;
  int workers = 1;
};

struct SweepRow {
  // Provenance: enough to re-run this cell in isolation.
  int cell_index = 0;
  int replicate = 0;
  std::uint64_t cell_seed = 0;
  int subsample = 0;
  double intensity = 0.0;
  PipelineVariant variant = PipelineVariant::tfce;
  TfceParams tfce;       // meaningful for the tfce variant
  double h_thr = 0.0;    // meaningful for the cluster-extent variant
  int num_permutations = 0;
  double q = 0.05;
  DetectionMetrics metrics;
  double significant_area_fraction = 0.0;
};

// Full factorial sweep: variants x variant parameters x subsample sizes x
// intensities x replicates, in that fixed nesting order. Each cell owns a
// derived seed, subsamples the cohort without replacement, injects the
// signal and runs the selected pipeline; rows come back in grid order.
inline std::vector<SweepRow> sweep(const TriangleMesh& mesh,
                                   const Matrix& null_phenotype,
                                   const SyntheticSignalSpec& spec,
                                   const SweepConfig& config,
                                   const Matrix* extra_nuisance = nullptr) {
  const int cohort = static_cast<int>(null_phenotype.rows());
  if (static_cast<int>(spec.beta_map.size()) != mesh.vertex_count() ||
      static_cast<int>(null_phenotype.cols()) != mesh.vertex_count())
    throw ValidationError("mesh/phenotype vertex count mismatch");
  if (spec.predictor.size() != cohort)
    throw ValidationError("predictor length does not match cohort");
  if (extra_nuisance && extra_nuisance->rows() != cohort)
    throw ValidationError("nuisance covariate row count mismatch");
  for (int n : config.subsample_sizes)
    if (n > cohort) throw ValidationError("subsample larger than cohort");

  const std::vector<std::uint8_t> truth = spec.true_mask();

  std::vector<SweepRow> rows;
  int cell_index = 0;
  std::uint64_t stream_id = 0;

  auto run_cell = [&](PipelineVariant variant, const TfceParams& tfce_params,
                      double h_thr, int n_sub, double intensity, int rep) {
    SplitMix64 g = stream_for(config.seed, rng_domain::subsample, stream_id++);
    const std::uint64_t cell_seed = g.next();

    SplitMix64 sub_rng = stream_for(cell_seed, rng_domain::subsample, 0);
    std::vector<int> subjects = random_subsample(cohort, n_sub, sub_rng);
    std::sort(subjects.begin(), subjects.end());

    SyntheticSignalSpec cell_spec = spec;
    cell_spec.intensity = intensity;
    cell_spec.predictor.resize(n_sub);
    Matrix y(n_sub, null_phenotype.cols());
    for (int i = 0; i < n_sub; ++i) {
      y.row(i) = null_phenotype.row(subjects[static_cast<size_t>(i)]);
      cell_spec.predictor[i] = spec.predictor[subjects[static_cast<size_t>(i)]];
    }
    y = inject_signal(y, cell_spec);

    const int extra = extra_nuisance ? static_cast<int>(extra_nuisance->cols()) : 0;
    DesignMatrix design;
    design.values.resize(n_sub, 2 + extra);
    design.values.col(0) = Vector::Ones(n_sub);
    design.values.col(1) = cell_spec.predictor;
    design.column_names = {"intercept", "predictor"};
    for (int j = 0; j < extra; ++j) {
      for (int i = 0; i < n_sub; ++i)
        design.values(i, 2 + j) =
            (*extra_nuisance)(subjects[static_cast<size_t>(i)], j);
      design.column_names.push_back("nuisance" + std::to_string(j));
    }
    design.intercept_column = 0;
    design.interest_columns = {1};
    design.nuisance_columns = {0};
    for (int j = 0; j < extra; ++j) design.nuisance_columns.push_back(2 + j);

    PhenotypeMatrix pheno;
    pheno.values = std::move(y);

    PermutationPlan plan;
    plan.num_permutations = config.num_permutations;
    plan.seed = cell_seed;
    plan.estimator = config.estimator;
    plan.workers = config.workers;

    SweepRow row;
    row.cell_index = cell_index;
    row.replicate = rep;
    row.cell_seed = cell_seed;
    row.subsample = n_sub;
    row.intensity = intensity;
    row.variant = variant;
    row.tfce = tfce_params;
    row.h_thr = h_thr;
    row.num_permutations = config.num_permutations;
    row.q = config.q;

    std::vector<std::uint8_t> detected;
    if (variant == PipelineVariant::cluster_extent) {
      plan.tfce.reset();
      ClusterInferenceResult r = cluster_extent_inference(
          design, pheno, mesh, 1, h_thr, plan, config.q);
      detected = r.significant;
      double area = 0.0;
      for (int v = 0; v < mesh.vertex_count(); ++v)
        if (detected[static_cast<size_t>(v)])
          area += mesh.vertex_area[static_cast<size_t>(v)];
      row.significant_area_fraction =
          mesh.total_area > 0.0 ? area / mesh.total_area : 0.0;
    } else {
      if (variant == PipelineVariant::tfce)
        plan.tfce = tfce_params;
      else
        plan.tfce.reset();
      InferenceResult r = freedman_lane(design, pheno, &mesh, 1, plan);
      apply_correction(r, CorrectionMethod::bh, config.q, &mesh);
      detected = r.significant;
      row.significant_area_fraction = r.significant_area_fraction;
    }
    row.metrics = evaluate_detection(detected, truth);
    rows.push_back(row);
  };

  auto run_block = [&](PipelineVariant variant, const TfceParams& params,
                       double h_thr) {
    for (int n_sub : config.subsample_sizes)
      for (double intensity : config.intensities) {
        for (int rep = 0; rep < config.replicates; ++rep)
          run_cell(variant, params, h_thr, n_sub, intensity, rep);
        ++cell_index;
      }
  };

  for (PipelineVariant variant : config.variants) {
    if (variant == PipelineVariant::cluster_extent) {
      for (double h_thr : config.cluster_thresholds)
        run_block(variant, TfceParams{}, h_thr);
    } else if (variant == PipelineVariant::tfce) {
      for (const TfceParams& params : config.tfce_grid)
        run_block(variant, params, 0.0);
    } else {
      run_block(variant, TfceParams{}, 0.0);
    }
  }
  return rows;
}

}  // namespace meshspm
