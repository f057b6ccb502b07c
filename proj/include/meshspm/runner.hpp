#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meshspm/correction.hpp"
#include "meshspm/csv.hpp"
#include "meshspm/design.hpp"
#include "meshspm/diagnostics.hpp"
#include "meshspm/glm.hpp"
#include "meshspm/inference.hpp"
#include "meshspm/manifest.hpp"
#include "meshspm/mesh.hpp"
#include "meshspm/mesh_io.hpp"
#include "meshspm/special.hpp"
#include "meshspm/synth.hpp"
#include "meshspm/tfce.hpp"
#include "meshspm/version.hpp"

namespace meshspm {

/// Resolved run configuration shared by all commands; the CLI fills it from
/// flags, a key-value config file (flags win) and environment overrides.
struct RunConfig {
  // Inputs.
  std::string mesh_path;       // .ply, or vertices.txt with faces_path
  std::string faces_path;
  std::string design_path;
  std::string phenotype_path;
  std::string out_dir;

  // Model.
  std::vector<std::string> interest;
  std::vector<std::string> nuisance;
  bool standardize = true;
  bool add_intercept = true;
  std::string estimator = "ols";

  // TFCE.
  double tfce_e = 0.5;
  double tfce_h = 2.0;
  int tfce_steps = 100;
  int min_cluster = 3;
  bool use_tfce = true;                    // false: plain mass univariate
  std::vector<double> cluster_extent_thr;  // non-empty: cluster-extent mode

  // Permutation and correction.
  int permutations = 1000;
  std::uint64_t seed = 0;
  std::string correction = "bh";
  double q = 0.05;
  int workers = 0;  // 0: all available cores

  // Synthetic sweep harness.
  int synth_rows = 15;
  int synth_cols = 20;
  int cohort = 200;
  double coverage = 0.5;
  double signal_sign = 1.0;
  int smoothing = 0;
  std::vector<int> sweep_subjects{50, 100};
  std::vector<double> sweep_intensities{0.1, 0.2};
  std::vector<std::string> sweep_variants{"mur", "tfce"};
  std::vector<double> sweep_e;  // optional E grid for the tfce variant
  std::vector<double> sweep_h;  // optional H grid
  int replicates = 1;

  // Global-phenotype regression.
  std::string phenotype_column;  // empty: the single data column

  int effective_workers() const {
    return workers > 0 ? workers : default_worker_count();
  }

  TfceParams tfce_params() const {
    TfceParams p;
    p.extent_exponent = tfce_e;
    p.height_exponent = tfce_h;
    p.num_steps = tfce_steps;
    p.min_cluster_vertices = min_cluster;
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mesh"] = mesh_path;
    j["faces"] = faces_path;
    j["design"] = design_path;
    j["phenotype"] = phenotype_path;
    j["out"] = out_dir;
    j["interest"] = interest;
    j["nuisance"] = nuisance;
    j["standardize"] = standardize;
    j["add_intercept"] = add_intercept;
    j["estimator"] = estimator;
    j["tfce"] = use_tfce;
    j["tfce_e"] = tfce_e;
    j["tfce_h"] = tfce_h;
    j["tfce_steps"] = tfce_steps;
    j["min_cluster"] = min_cluster;
    j["cluster_extent_thr"] = cluster_extent_thr;
    j["permutations"] = permutations;
    j["seed"] = seed;
    j["correction"] = correction;
    j["q"] = q;
    j["workers"] = workers;
    j["synth_rows"] = synth_rows;
    j["synth_cols"] = synth_cols;
    j["cohort"] = cohort;
    j["coverage"] = coverage;
    j["signal_sign"] = signal_sign;
    j["smoothing"] = smoothing;
    j["sweep_subjects"] = sweep_subjects;
    j["sweep_intensities"] = sweep_intensities;
    j["sweep_variants"] = sweep_variants;
    j["sweep_e"] = sweep_e;
    j["sweep_h"] = sweep_h;
    j["replicates"] = replicates;
    j["phenotype_column"] = phenotype_column;
    return j;
  }
};

namespace detail {

inline std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out.empty() ? std::string("column") : out;
}

inline std::string thr_suffix(double h) {
  std::ostringstream os;
  os << h;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace detail

inline TriangleMesh load_mesh(const RunConfig& config) {
  if (config.mesh_path.empty()) throw ValidationError("no mesh given");
  if (!config.faces_path.empty())
    return read_vertex_face_files(config.mesh_path, config.faces_path);
  return read_ply(config.mesh_path);
}

// Design CSV plus role assignment. Every data column must be claimed as
// interest or nuisance; an intercept column of ones is appended unless the
// file already provides one or add_intercept is off.
inline DesignMatrix load_design(const RunConfig& config) {
  if (config.design_path.empty()) throw ValidationError("no design given");
  DesignMatrix design = load_design_csv(config.design_path);
  if (config.interest.empty())
    throw ValidationError("at least one interest column is required");

  if (config.add_intercept && design.column_index("intercept") < 0) {
    const Index n = design.values.rows();
    Matrix with(n, design.values.cols() + 1);
    with << design.values, Vector::Ones(n);
    design.values = std::move(with);
    design.column_names.push_back("intercept");
  }
  const int icol = design.column_index("intercept");
  design.intercept_column = icol;

  design.interest_columns.clear();
  design.nuisance_columns.clear();
  std::vector<char> claimed(static_cast<size_t>(design.predictors()), 0);
  for (const auto& name : config.interest) {
    const int j = design.column_index(name);
    if (j < 0)
      throw ValidationError("interest column '" + name + "' not in design");
    design.interest_columns.push_back(j);
    claimed[static_cast<size_t>(j)] = 1;
  }
  for (const auto& name : config.nuisance) {
    const int j = design.column_index(name);
    if (j < 0)
      throw ValidationError("nuisance column '" + name + "' not in design");
    design.nuisance_columns.push_back(j);
    claimed[static_cast<size_t>(j)] = 1;
  }
  if (icol >= 0 && !claimed[static_cast<size_t>(icol)]) {
    design.nuisance_columns.push_back(icol);
    claimed[static_cast<size_t>(icol)] = 1;
  }
  for (int j = 0; j < design.predictors(); ++j)
    if (!claimed[static_cast<size_t>(j)])
      throw ValidationError("column '" +
                            design.column_names[static_cast<size_t>(j)] +
                            "' has no declared role");
  design.validate();
  return design;
}

// The per-model design for one tested predictor: nuisance columns plus that
// predictor alone, mirroring one-variant-at-a-time association models.
inline DesignMatrix single_interest_design(const DesignMatrix& full,
                                           int interest_column) {
  DesignMatrix d;
  const Index n = full.values.rows();
  const int nz = static_cast<int>(full.nuisance_columns.size());
  d.values.resize(n, nz + 1);
  for (int j = 0; j < nz; ++j) {
    d.values.col(j) = full.values.col(full.nuisance_columns[static_cast<size_t>(j)]);
    d.column_names.push_back(
        full.column_names[static_cast<size_t>(full.nuisance_columns[static_cast<size_t>(j)])]);
    if (full.nuisance_columns[static_cast<size_t>(j)] == full.intercept_column)
      d.intercept_column = j;
    d.nuisance_columns.push_back(j);
  }
  d.values.col(nz) = full.values.col(interest_column);
  d.column_names.push_back(full.column_names[static_cast<size_t>(interest_column)]);
  d.interest_columns.push_back(nz);
  d.validate();
  return d;
}

/// Tracks written files so a failing run can remove partial outputs and
/// record a failed manifest instead of leaving a half-written tree.
class OutputTree {
 public:
  explicit OutputTree(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

  void record(const std::string& name) { files_.push_back(name); }

  const std::vector<std::string>& files() const { return files_; }

  void fill_digests(RunManifest& manifest) const {
    for (const auto& f : files_)
      manifest.output_digests[f] = digest_file(path(f));
  }

  void remove_all() const {
    std::error_code ec;
    for (const auto& f : files_) std::filesystem::remove(path(f), ec);
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

namespace detail {

struct LoadedInputs {
  std::optional<TriangleMesh> mesh;
  DesignMatrix design;
  PhenotypeMatrix phenotype;
};

inline LoadedInputs load_and_validate(const RunConfig& config,
                                      bool mesh_required,
                                      RunManifest& manifest) {
  LoadedInputs in;
  if (!config.mesh_path.empty() || mesh_required) {
    in.mesh = load_mesh(config);
    manifest.input_digests[config.mesh_path] = digest_file(config.mesh_path);
    if (!config.faces_path.empty())
      manifest.input_digests[config.faces_path] = digest_file(config.faces_path);
  }
  in.design = load_design(config);
  manifest.input_digests[config.design_path] = digest_file(config.design_path);
  if (config.phenotype_path.empty()) throw ValidationError("no phenotype given");
  in.phenotype = load_phenotype_csv(config.phenotype_path);
  manifest.input_digests[config.phenotype_path] =
      digest_file(config.phenotype_path);

  if (in.phenotype.subjects() != in.design.subjects())
    throw ValidationError("design and phenotype disagree on subject count");
  if (in.mesh && in.mesh->vertex_count() != in.phenotype.vertex_count())
    throw ValidationError("mesh and phenotype disagree on vertex count");
  if (!(config.q > 0.0 && config.q < 1.0))
    throw ValidationError("q must lie in (0, 1)");
  if (config.permutations < 1)
    throw ValidationError("permutations must be >= 1");

  if (config.standardize) {
    standardize_design(in.design);
    standardize_phenotype(in.phenotype);
  }
  return in;
}

inline void write_fit_csv(OutputTree& tree, const std::string& name,
                          const MassUnivariateResult& fit) {
  CsvWriter csv(tree.path(name));
  csv.row({"vertex_id", "beta", "se", "t", "flags"});
  for (Index v = 0; v < fit.beta.size(); ++v)
    csv.row({std::to_string(v), format_double(fit.beta[v]),
             format_double(fit.se[v]), format_double(fit.tstat[v]),
             std::to_string(static_cast<int>(fit.flags[static_cast<size_t>(v)]))});
  tree.record(name);
}

}  // namespace detail

// --- fit: mass univariate maps plus design diagnostics -------------------

inline RunManifest cmd_fit(const RunConfig& config,
                           std::ostream& out = std::cout) {
  RunManifest manifest;
  manifest.command = "fit";
  manifest.config = config.to_json();
  manifest.seed = config.seed;

  detail::LoadedInputs in = detail::load_and_validate(config, false, manifest);
  const Estimator estimator = parse_estimator(config.estimator);

  OutputTree tree(config.out_dir);
  try {
    GlmSolver solver(in.design.values);
    DiagnosticsReport diag;
    {
      StageTimer timer(manifest, "diagnostics");
      diag = diagnostics(in.design, &in.phenotype, config.effective_workers());
    }
    std::vector<std::pair<std::string, MassUnivariateResult>> fits;
    {
      StageTimer timer(manifest, "fit");
      for (int c : in.design.interest_columns)
        fits.emplace_back(
            in.design.column_names[static_cast<size_t>(c)],
            mass_univariate(solver, in.phenotype.values, c, estimator));
    }

    StageTimer timer(manifest, "write");
    for (auto& [name, fit] : fits)
      detail::write_fit_csv(tree, "fit_" + detail::sanitize_name(name) + ".csv",
                            fit);
    {
      CsvWriter csv(tree.path("diagnostics.csv"));
      csv.row({"vertex_id", "breusch_pagan_p", "white_p"});
      for (size_t v = 0; v < diag.breusch_pagan_p.size(); ++v)
        csv.row({std::to_string(v), format_double(diag.breusch_pagan_p[v]),
                 format_double(diag.white_p[v])});
      tree.record("diagnostics.csv");
    }
    {
      nlohmann::json j;
      for (size_t i = 0; i < diag.vif.size(); ++i)
        j["vif"][diag.vif_names[i]] = diag.vif[i];
      j["condition_number"] = diag.condition_number;
      j["white_terms_truncated"] = diag.white_terms_truncated;
      size_t bp_sig = 0, white_sig = 0;
      for (double p : diag.breusch_pagan_p) bp_sig += p < 0.05;
      for (double p : diag.white_p) white_sig += p < 0.05;
      const double nv = static_cast<double>(
          std::max<size_t>(1, diag.breusch_pagan_p.size()));
      j["breusch_pagan_frac_p05"] = static_cast<double>(bp_sig) / nv;
      j["white_frac_p05"] = static_cast<double>(white_sig) / nv;
      std::ofstream jo(tree.path("diagnostics.json"));
      jo << j.dump(2) << "\n";
      if (!jo) throw IoError("write failure: diagnostics.json");
      tree.record("diagnostics.json");
    }
    tree.fill_digests(manifest);
    manifest.write(tree.path("manifest.json"));
    for (const auto& [name, fit] : fits) {
      size_t flagged = 0;
      for (auto f : fit.flags) flagged += f != 0;
      out << "model=" << name << " vertices=" << fit.beta.size()
          << " flagged=" << flagged << "\n";
    }
    out << "condition_number=" << format_double(diag.condition_number) << "\n";
  } catch (...) {
    tree.remove_all();
    manifest.status = "failed";
    try {
      throw;
    } catch (const std::exception& e) {
      manifest.error = e.what();
      manifest.write(tree.path("manifest.json"));
      throw;
    }
  }
  return manifest;
}

// --- infer: fit + TFCE + Freedman-Lane + correction ----------------------

struct ModelInference {
  std::string name;
  InferenceResult result;
};

inline void write_inference_outputs(OutputTree& tree, const TriangleMesh& mesh,
                                    std::vector<ModelInference>& models,
                                    std::ostream& out) {
  for (auto& model : models) {
    const std::string base = "result_" + detail::sanitize_name(model.name);
    const InferenceResult& r = model.result;
    {
      CsvWriter csv(tree.path(base + ".csv"));
      csv.row({"vertex_id", "beta", "t", "tfce", "p_raw", "p_adjusted",
               "significant"});
      for (size_t v = 0; v < r.p_raw.size(); ++v)
        csv.row({std::to_string(v), format_double(r.beta[static_cast<Index>(v)]),
                 format_double(r.tstat[static_cast<Index>(v)]),
                 format_double(r.score[v]), format_double(r.p_raw[v]),
                 format_double(r.p_adjusted[v]),
                 std::to_string(static_cast<int>(r.significant[v]))});
      tree.record(base + ".csv");
    }
    {
      std::vector<double> sig(r.significant.size());
      for (size_t v = 0; v < sig.size(); ++v) sig[v] = r.significant[v];
      write_ply(tree.path(base + ".ply"), mesh,
                {{"tfce", &r.score}, {"p_adjusted", &r.p_adjusted},
                 {"significant", &sig}});
      tree.record(base + ".ply");
    }
    out << "model=" << model.name << " S="
        << format_double(r.significant_area_fraction)
        << " significant_vertices="
        << std::count_if(r.significant.begin(), r.significant.end(),
                         [](std::uint8_t m) { return m != 0; })
        << " min_p_raw="
        << format_double(*std::min_element(r.p_raw.begin(), r.p_raw.end()))
        << "\n";
  }
}

inline RunManifest cmd_infer(const RunConfig& config,
                             std::ostream& out = std::cout) {
  RunManifest manifest;
  manifest.command = "infer";
  manifest.config = config.to_json();
  manifest.seed = config.seed;

  detail::LoadedInputs in = detail::load_and_validate(config, true, manifest);
  const Estimator estimator = parse_estimator(config.estimator);
  const CorrectionMethod correction = parse_correction(config.correction);
  const TriangleMesh& mesh = *in.mesh;

  OutputTree tree(config.out_dir);
  try {
    PermutationPlan plan;
    plan.num_permutations = config.permutations;
    plan.seed = config.seed;
    plan.estimator = estimator;
    plan.workers = config.effective_workers();
    if (config.use_tfce)
      plan.tfce = config.tfce_params();
    else
      plan.tfce.reset();

    if (!config.cluster_extent_thr.empty()) {
      // Cluster-extent mode: one pass per requested forming threshold.
      StageTimer timer(manifest, "cluster_extent");
      plan.tfce.reset();
      for (int c : in.design.interest_columns) {
        const DesignMatrix model_design = single_interest_design(in.design, c);
        const std::string name =
            in.design.column_names[static_cast<size_t>(c)];
        for (double h_thr : config.cluster_extent_thr) {
          ClusterInferenceResult r = cluster_extent_inference(
              model_design, in.phenotype, mesh,
              model_design.interest_columns[0], h_thr, plan, config.q);
          const std::string base = "clusters_" + detail::sanitize_name(name) +
                                   "_h" + detail::thr_suffix(h_thr);
          {
            CsvWriter csv(tree.path(base + ".csv"));
            csv.row({"cluster_id", "n_vertices", "extent", "significant"});
            for (size_t i = 0; i < r.observed_clusters.size(); ++i)
              csv.row({std::to_string(i),
                       std::to_string(r.observed_clusters[i].vertex_ids.size()),
                       format_double(r.observed_clusters[i].extent),
                       std::to_string(static_cast<int>(r.cluster_significant[i]))});
            tree.record(base + ".csv");
          }
          {
            CsvWriter csv(tree.path(base + "_mask.csv"));
            csv.row({"vertex_id", "t", "significant"});
            for (size_t v = 0; v < r.significant.size(); ++v)
              csv.row({std::to_string(v),
                       format_double(r.tstat[static_cast<Index>(v)]),
                       std::to_string(static_cast<int>(r.significant[v]))});
            tree.record(base + "_mask.csv");
          }
          double area = 0.0;
          for (size_t v = 0; v < r.significant.size(); ++v)
            if (r.significant[v]) area += mesh.vertex_area[v];
          out << "model=" << name << " h_thr=" << format_double(h_thr)
              << " extent_threshold=" << format_double(r.extent_threshold)
              << " S=" << format_double(mesh.total_area > 0.0
                                            ? area / mesh.total_area
                                            : 0.0)
              << "\n";
        }
      }
    } else {
      std::vector<ModelInference> models;
      {
        StageTimer timer(manifest, "inference");
        for (int c : in.design.interest_columns) {
          ModelInference m;
          m.name = in.design.column_names[static_cast<size_t>(c)];
          const DesignMatrix model_design = single_interest_design(in.design, c);
          m.result = freedman_lane(model_design, in.phenotype, &mesh,
                                   model_design.interest_columns[0], plan);
          models.push_back(std::move(m));
        }
      }
      {
        StageTimer timer(manifest, "correction");
        if (models.size() > 1 && correction != CorrectionMethod::max_stat) {
          // One pooled pass across all models, as when several variants are
          // tested against the same phenotype.
          std::vector<std::vector<double>> pooled;
          for (const auto& m : models) pooled.push_back(m.result.p_raw);
          std::vector<double> flat;
          for (const auto& p : pooled) flat.insert(flat.end(), p.begin(), p.end());
          CorrectionResult joint = correction == CorrectionMethod::bh
                                       ? bh_fdr(flat, config.q)
                                       : two_stage_bh(flat, config.q);
          size_t offset = 0;
          for (auto& m : models) {
            const size_t nv = m.result.p_raw.size();
            m.result.correction = correction;
            m.result.q = config.q;
            m.result.p_adjusted.assign(joint.p_adjusted.begin() + offset,
                                       joint.p_adjusted.begin() + offset + nv);
            m.result.significant.assign(joint.mask.begin() + offset,
                                        joint.mask.begin() + offset + nv);
            offset += nv;
            double area = 0.0;
            for (size_t v = 0; v < nv; ++v)
              if (m.result.significant[v]) area += mesh.vertex_area[v];
            m.result.significant_area_fraction =
                mesh.total_area > 0.0 ? area / mesh.total_area : 0.0;
          }
        } else {
          for (auto& m : models)
            apply_correction(m.result, correction, config.q, &mesh);
        }
      }
      StageTimer timer(manifest, "write");
      write_inference_outputs(tree, mesh, models, out);
    }
    tree.fill_digests(manifest);
    manifest.write(tree.path("manifest.json"));
  } catch (...) {
    tree.remove_all();
    manifest.status = "failed";
    try {
      throw;
    } catch (const std::exception& e) {
      manifest.error = e.what();
      manifest.write(tree.path("manifest.json"));
      throw;
    }
  }
  return manifest;
}

// --- sweep: synthetic power/FDR harness -----------------------------------

inline RunManifest cmd_sweep(const RunConfig& config,
                             std::ostream& out = std::cout) {
  RunManifest manifest;
  manifest.command = "sweep";
  manifest.config = config.to_json();
  manifest.seed = config.seed;

  TriangleMesh mesh;
  if (!config.mesh_path.empty()) {
    mesh = load_mesh(config);
    manifest.input_digests[config.mesh_path] = digest_file(config.mesh_path);
  } else {
    mesh = make_grid_mesh(config.synth_rows, config.synth_cols, 1.0, 0.2,
                          config.seed);
  }

  SweepConfig sweep_config;
  sweep_config.subsample_sizes = config.sweep_subjects;
  sweep_config.intensities = config.sweep_intensities;
  sweep_config.variants.clear();
  for (const auto& v : config.sweep_variants) {
    if (v == "mur")
      sweep_config.variants.push_back(PipelineVariant::mur);
    else if (v == "tfce")
      sweep_config.variants.push_back(PipelineVariant::tfce);
    else if (v == "cluster-extent")
      sweep_config.variants.push_back(PipelineVariant::cluster_extent);
    else
      throw ValidationError("unknown sweep variant '" + v + "'");
  }
  if (config.sweep_e.empty() && config.sweep_h.empty()) {
    sweep_config.tfce_grid = {config.tfce_params()};
  } else {
    sweep_config.tfce_grid.clear();
    const std::vector<double> es =
        config.sweep_e.empty() ? std::vector<double>{config.tfce_e} : config.sweep_e;
    const std::vector<double> hs =
        config.sweep_h.empty() ? std::vector<double>{config.tfce_h} : config.sweep_h;
    for (double e : es)
      for (double h : hs) {
        TfceParams p = config.tfce_params();
        p.extent_exponent = e;
        p.height_exponent = h;
        sweep_config.tfce_grid.push_back(p);
      }
  }
  sweep_config.cluster_thresholds = config.cluster_extent_thr.empty()
                                        ? std::vector<double>{2.0}
                                        : config.cluster_extent_thr;
  sweep_config.replicates = config.replicates;
  sweep_config.num_permutations = config.permutations;
  sweep_config.seed = config.seed;
  sweep_config.estimator = parse_estimator(config.estimator);
  sweep_config.q = config.q;
  sweep_config.workers = config.effective_workers();

  for (int n : sweep_config.subsample_sizes)
    if (n > config.cohort)
      throw ValidationError("subsample larger than cohort");

  OutputTree tree(config.out_dir);
  try {
    Matrix noise;
    SyntheticSignalSpec spec;
    {
      StageTimer timer(manifest, "generate");
      noise = make_null_phenotype(config.cohort, mesh.vertex_count(), config.seed);
      if (config.smoothing > 0) smooth_phenotype(mesh, noise, config.smoothing);
      spec.beta_map = make_patch_beta_map(mesh, config.coverage, config.seed,
                                          config.signal_sign);
      spec.predictor = make_dosage_predictor(config.cohort, config.seed);
    }
    std::vector<SweepRow> rows;
    {
      StageTimer timer(manifest, "sweep");
      rows = sweep(mesh, noise, spec, sweep_config);
    }
    StageTimer timer(manifest, "write");
    {
      CsvWriter csv(tree.path("sweep.csv"));
      csv.row({"cell_index", "replicate", "cell_seed", "variant", "subsample",
               "intensity", "tfce_e", "tfce_h", "tfce_steps", "min_cluster",
               "h_thr", "permutations", "q", "sensitivity", "specificity",
               "fdr", "tp", "fp", "tn", "fn", "significant_area_fraction"});
      for (const auto& r : rows)
        csv.row({std::to_string(r.cell_index), std::to_string(r.replicate),
                 std::to_string(r.cell_seed), variant_name(r.variant),
                 std::to_string(r.subsample), format_double(r.intensity),
                 format_double(r.tfce.extent_exponent),
                 format_double(r.tfce.height_exponent),
                 std::to_string(r.tfce.num_steps),
                 std::to_string(r.tfce.min_cluster_vertices),
                 format_double(r.h_thr), std::to_string(r.num_permutations),
                 format_double(r.q), format_double(r.metrics.sensitivity),
                 format_double(r.metrics.specificity),
                 format_double(r.metrics.fdr),
                 std::to_string(r.metrics.true_positives),
                 std::to_string(r.metrics.false_positives),
                 std::to_string(r.metrics.true_negatives),
                 std::to_string(r.metrics.false_negatives),
                 format_double(r.significant_area_fraction)});
      tree.record("sweep.csv");
    }
    tree.fill_digests(manifest);
    manifest.write(tree.path("manifest.json"));
    out << "rows=" << rows.size() << "\n";
  } catch (...) {
    tree.remove_all();
    manifest.status = "failed";
    try {
      throw;
    } catch (const std::exception& e) {
      manifest.error = e.what();
      manifest.write(tree.path("manifest.json"));
      throw;
    }
  }
  return manifest;
}

// --- global: conventional scalar-phenotype regression ---------------------

inline RunManifest cmd_global(const RunConfig& config,
                              std::ostream& out = std::cout) {
  RunManifest manifest;
  manifest.command = "global";
  manifest.config = config.to_json();
  manifest.seed = config.seed;

  DesignMatrix design = load_design(config);
  manifest.input_digests[config.design_path] = digest_file(config.design_path);
  if (config.phenotype_path.empty()) throw ValidationError("no phenotype given");
  PhenotypeMatrix pheno = load_phenotype_csv(config.phenotype_path);
  manifest.input_digests[config.phenotype_path] =
      digest_file(config.phenotype_path);
  if (pheno.subjects() != design.subjects())
    throw ValidationError("design and phenotype disagree on subject count");

  CsvTable table = read_csv(config.phenotype_path);
  int ycol = 0;
  if (!config.phenotype_column.empty()) {
    // Column indices in the loaded matrix skip the id column, so resolve the
    // name against the loaded header order.
    const int raw = table.column(config.phenotype_column);
    if (raw < 0)
      throw ValidationError("phenotype column '" + config.phenotype_column +
                            "' not found");
    int j = 0;
    for (size_t c = 0; c < table.header.size(); ++c) {
      if (table.header[c] == "subject") continue;
      if (static_cast<int>(c) == raw) break;
      ++j;
    }
    ycol = j;
  } else if (pheno.vertex_count() != 1) {
    throw ValidationError(
        "global mode needs a single phenotype column or --phenotype-col");
  }
  Vector y = pheno.values.col(ycol);

  if (config.standardize) {
    standardize_design(design);
    const double sd = sample_sd(y);
    if (sd == 0.0) throw ValidationError("constant global phenotype");
    y = (y.array() - y.mean()) / sd;
  }
  const Estimator estimator = parse_estimator(config.estimator);

  OutputTree tree(config.out_dir);
  try {
    struct Row {
      std::string name;
      double beta, se, t, p;
      int n;
    };
    std::vector<Row> rows;
    {
      StageTimer timer(manifest, "fit");
      for (int c : design.interest_columns) {
        const DesignMatrix model = single_interest_design(design, c);
        GlmSolver solver(model.values);
        FitSummary fit = solver.fit(y);
        const int contrast = model.interest_columns[0];
        double se = fit.se[contrast];
        if (estimator == Estimator::hc4m)
          se = hc4m_se(solver.pseudo_inverse(), fit.residuals,
                       solver.leverages())[contrast];
        const double beta = fit.coefficients[contrast];
        const double dof =
            static_cast<double>(model.subjects() - model.predictors());
        const double t = se > 0.0 ? beta / se
                                  : std::numeric_limits<double>::quiet_NaN();
        const double p = std::isfinite(t) ? student_t_two_sided_p(t, dof) : 1.0;
        rows.push_back({model.column_names.back(), beta, se, t, p,
                        model.subjects()});
      }
    }
    StageTimer timer(manifest, "write");
    {
      CsvWriter csv(tree.path("global.csv"));
      csv.row({"name", "beta", "se", "t", "p", "n"});
      for (const auto& r : rows)
        csv.row({r.name, format_double(r.beta), format_double(r.se),
                 format_double(r.t), format_double(r.p), std::to_string(r.n)});
      tree.record("global.csv");
    }
    tree.fill_digests(manifest);
    manifest.write(tree.path("manifest.json"));
    for (const auto& r : rows)
      out << "name=" << r.name << " beta=" << format_double(r.beta)
          << " p=" << format_double(r.p) << "\n";
  } catch (...) {
    tree.remove_all();
    manifest.status = "failed";
    try {
      throw;
    } catch (const std::exception& e) {
      manifest.error = e.what();
      manifest.write(tree.path("manifest.json"));
      throw;
    }
  }
  return manifest;
}

// --- diagnose: diagnostics without fitting maps ---------------------------

inline RunManifest cmd_diagnose(const RunConfig& config,
                                std::ostream& out = std::cout) {
  RunManifest manifest;
  manifest.command = "diagnose";
  manifest.config = config.to_json();
  manifest.seed = config.seed;

  DesignMatrix design = load_design(config);
  manifest.input_digests[config.design_path] = digest_file(config.design_path);
  std::optional<PhenotypeMatrix> pheno;
  if (!config.phenotype_path.empty()) {
    pheno = load_phenotype_csv(config.phenotype_path);
    manifest.input_digests[config.phenotype_path] =
        digest_file(config.phenotype_path);
    if (pheno->subjects() != design.subjects())
      throw ValidationError("design and phenotype disagree on subject count");
  }
  if (config.standardize) {
    standardize_design(design);
    if (pheno) standardize_phenotype(*pheno);
  }

  OutputTree tree(config.out_dir);
  try {
    DiagnosticsReport diag;
    {
      StageTimer timer(manifest, "diagnostics");
      diag = diagnostics(design, pheno ? &*pheno : nullptr,
                         config.effective_workers());
    }
    StageTimer timer(manifest, "write");
    {
      nlohmann::json j;
      for (size_t i = 0; i < diag.vif.size(); ++i)
        j["vif"][diag.vif_names[i]] = diag.vif[i];
      j["condition_number"] = diag.condition_number;
      j["white_terms_truncated"] = diag.white_terms_truncated;
      std::ofstream jo(tree.path("diagnostics.json"));
      jo << j.dump(2) << "\n";
      if (!jo) throw IoError("write failure: diagnostics.json");
      tree.record("diagnostics.json");
    }
    if (pheno) {
      CsvWriter csv(tree.path("diagnostics.csv"));
      csv.row({"vertex_id", "breusch_pagan_p", "white_p"});
      for (size_t v = 0; v < diag.breusch_pagan_p.size(); ++v)
        csv.row({std::to_string(v), format_double(diag.breusch_pagan_p[v]),
                 format_double(diag.white_p[v])});
      tree.record("diagnostics.csv");
    }
    tree.fill_digests(manifest);
    manifest.write(tree.path("manifest.json"));
    out << "condition_number=" << format_double(diag.condition_number) << "\n";
    for (size_t i = 0; i < diag.vif.size(); ++i)
      out << "vif_" << diag.vif_names[i] << "=" << format_double(diag.vif[i])
          << "\n";
  } catch (...) {
    tree.remove_all();
    manifest.status = "failed";
    try {
      throw;
    } catch (const std::exception& e) {
      manifest.error = e.what();
      manifest.write(tree.path("manifest.json"));
      throw;
    }
  }
  return manifest;
}

}  // namespace meshspm
