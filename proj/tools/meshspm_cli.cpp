// meshspm command line: vertex-wise GLM fitting, TFCE + permutation
// inference, synthetic power sweeps, conventional global regression and
// design diagnostics. Machine-readable results go to stdout; progress and
// errors go to stderr. Exit codes: 0 ok, 2 validation, 3 numerical, 4 I/O.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "meshspm/runner.hpp"
#include "meshspm/version.hpp"

namespace {

void add_common_options(CLI::App* cmd, meshspm::RunConfig& config) {
  cmd->set_config("--config", "", "key-value config file; flags win");
  cmd->add_option("--design", config.design_path, "design CSV (header row)")
      ->envname("MESHSPM_DESIGN");
  cmd->add_option("--phenotype", config.phenotype_path,
                  "phenotype CSV (header row)")
      ->envname("MESHSPM_PHENOTYPE");
  cmd->add_option("--interest", config.interest,
                  "design columns tested for association")
      ->delimiter(',')
      ->envname("MESHSPM_INTEREST");
  cmd->add_option("--nuisance", config.nuisance,
                  "nuisance design columns (intercept is implied)")
      ->delimiter(',')
      ->envname("MESHSPM_NUISANCE");
  cmd->add_option("--estimator", config.estimator, "ols or hc4m")
      ->check(CLI::IsMember({"ols", "hc4m"}))
      ->envname("MESHSPM_ESTIMATOR");
  cmd->add_flag("!--no-standardize", config.standardize,
                "skip mean-0 / sd-1 standardization of X and Y");
  cmd->add_flag("!--no-intercept", config.add_intercept,
                "do not append an intercept column");
  cmd->add_option("--seed", config.seed, "master seed")
      ->envname("MESHSPM_SEED");
  cmd->add_option("--workers", config.workers,
                  "worker threads (0 = all cores)")
      ->envname("MESHSPM_WORKERS");
  cmd->add_option("--out", config.out_dir, "output directory")
      ->envname("MESHSPM_OUT")
      ->required();
}

void add_mesh_options(CLI::App* cmd, meshspm::RunConfig& config) {
  cmd->add_option("--mesh", config.mesh_path,
                  "mesh file: .ply, or a vertices text file with --faces")
      ->envname("MESHSPM_MESH");
  cmd->add_option("--faces", config.faces_path,
                  "faces text file for the two-file mesh format");
}

void add_inference_options(CLI::App* cmd, meshspm::RunConfig& config) {
  cmd->add_option("--permutations", config.permutations,
                  "number of permutations N")
      ->envname("MESHSPM_PERMUTATIONS");
  cmd->add_option("--correction", config.correction, "bh, tsbh or maxstat")
      ->check(CLI::IsMember({"bh", "tsbh", "maxstat"}))
      ->envname("MESHSPM_CORRECTION");
  cmd->add_option("--q", config.q, "FDR level (or alpha for maxstat)")
      ->envname("MESHSPM_Q");
  cmd->add_flag("!--no-tfce", config.use_tfce,
                "score permutations on |t| instead of TFCE");
  cmd->add_option("--tfce-e", config.tfce_e, "TFCE extent exponent")
      ->envname("MESHSPM_TFCE_E");
  cmd->add_option("--tfce-h", config.tfce_h, "TFCE height exponent")
      ->envname("MESHSPM_TFCE_H");
  cmd->add_option("--tfce-steps", config.tfce_steps,
                  "threshold samples per sign")
      ->envname("MESHSPM_TFCE_STEPS");
  cmd->add_option("--min-cluster", config.min_cluster,
                  "smallest cluster (vertices) that can score")
      ->envname("MESHSPM_MIN_CLUSTER");
  cmd->add_option("--cluster-extent-thr", config.cluster_extent_thr,
                  "cluster-forming t threshold(s); enables cluster-extent "
                  "mode (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statistical parametric mapping on triangle meshes"};
  app.set_version_flag("--version", meshspm::kVersion);
  app.require_subcommand(1);

  meshspm::RunConfig config;

  CLI::App* fit = app.add_subcommand(
      "fit", "mass univariate GLM maps and design diagnostics");
  add_common_options(fit, config);
  add_mesh_options(fit, config);

  CLI::App* infer = app.add_subcommand(
      "infer", "fit + TFCE + Freedman-Lane permutations + correction");
  add_common_options(infer, config);
  add_mesh_options(infer, config);
  add_inference_options(infer, config);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "synthetic signal power / FDR sweep");
  add_common_options(sweep, config);
  add_mesh_options(sweep, config);
  add_inference_options(sweep, config);
  sweep->add_option("--synth-rows", config.synth_rows,
                    "generated grid mesh rows (when no --mesh)");
  sweep->add_option("--synth-cols", config.synth_cols,
                    "generated grid mesh cols");
  sweep->add_option("--cohort", config.cohort, "synthetic cohort size");
  sweep->add_option("--coverage", config.coverage,
                    "fraction of vertices carrying signal");
  sweep->add_option("--signal-sign", config.signal_sign,
                    "sign of the injected coefficients (+1 or -1)");
  sweep->add_option("--smoothing", config.smoothing,
                    "neighbour-averaging passes on the noise");
  sweep->add_option("--sweep-subjects", config.sweep_subjects,
                    "subsample sizes")
      ->delimiter(',');
  sweep->add_option("--sweep-intensities", config.sweep_intensities,
                    "signal intensities I")
      ->delimiter(',');
  sweep->add_option("--sweep-variants", config.sweep_variants,
                    "pipeline variants: mur, tfce, cluster-extent")
      ->delimiter(',');
  sweep->add_option("--sweep-e", config.sweep_e, "TFCE E grid")->delimiter(',');
  sweep->add_option("--sweep-h", config.sweep_h, "TFCE H grid")->delimiter(',');
  sweep->add_option("--replicates", config.replicates,
                    "replicates per grid cell");
  // The sweep generates its own cohort; design/phenotype inputs are not used.
  fit->get_option("--design")->required();
  fit->get_option("--phenotype")->required();
  infer->get_option("--design")->required();
  infer->get_option("--phenotype")->required();
  infer->get_option("--interest")->required();
  fit->get_option("--interest")->required();

  CLI::App* global = app.add_subcommand(
      "global", "conventional regression on a scalar phenotype");
  add_common_options(global, config);
  global->add_option("--phenotype-col", config.phenotype_column,
                     "phenotype CSV column to regress");
  global->get_option("--design")->required();
  global->get_option("--phenotype")->required();
  global->get_option("--interest")->required();

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "multicollinearity and heteroscedasticity diagnostics");
  add_common_options(diagnose, config);
  diagnose->get_option("--design")->required();
  diagnose->get_option("--interest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed()) meshspm::cmd_fit(config);
    if (infer->parsed()) meshspm::cmd_infer(config);
    if (sweep->parsed()) meshspm::cmd_sweep(config);
    if (global->parsed()) meshspm::cmd_global(config);
    if (diagnose->parsed()) meshspm::cmd_diagnose(config);
  } catch (const meshspm::ValidationError& e) {
    std::cerr << "error (validation): " << e.what() << "\n";
    return 2;
  } catch (const meshspm::NumericalError& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 3;
  } catch (const meshspm::IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
