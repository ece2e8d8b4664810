#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stagdid/runner.hpp"

namespace {

using stagdid::RunConfig;

// Data and estimation failures exit 1, configuration mistakes exit 2; both
// print a single machine-readable JSON line on stderr.
int exit_code_for(stagdid::ErrorCode code) {
  switch (code) {
    case stagdid::ErrorCode::ConfigUnknownColumn:
    case stagdid::ErrorCode::ConfigMissingSeed:
    case stagdid::ErrorCode::ConfigInvalid:
    case stagdid::ErrorCode::BadScenario:
      return 2;
    default:
      return 1;
  }
}

void print_error(const std::string& code, const std::string& message) {
  const nlohmann::json j = {{"error", code}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

void add_column_options(CLI::App* cmd, stagdid::PanelColumns& columns, std::string& covariate_list) {
  cmd->add_option("--unit-col", columns.unit, "Unit id column name")->capture_default_str();
  cmd->add_option("--period-col", columns.period, "Period column name")->capture_default_str();
  cmd->add_option("--outcome-col", columns.outcome, "Outcome column name")->capture_default_str();
  cmd->add_option("--cohort-col", columns.cohort, "Cohort column name (first treated period or 'never')")
      ->capture_default_str();
  cmd->add_option("--covariates", covariate_list, "Comma-separated covariate column names");
}

std::vector<std::string> split_csv_list(const std::string& list) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : list) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string default_outdir() {
  const char* env = std::getenv("STAGDID_OUTPUT_DIR");
  return env != nullptr ? env : ".";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staggered difference-in-differences estimation toolkit"};
  app.require_subcommand(1);

  // validate ----------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Check a panel CSV and print the cohort design");
  std::string validate_input;
  stagdid::PanelColumns validate_columns;
  std::string validate_covs;
  validate->add_option("--input", validate_input, "Panel CSV path")->required();
  add_column_options(validate, validate_columns, validate_covs);

  // run ---------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Estimate group-time effects, aggregates, and sensitivity");
  RunConfig run_config;
  std::string run_input, run_outdir = default_outdir(), run_covs, run_flavor = "dr";
  std::uint64_t run_seed = 0;
  bool run_seed_given = false;
  run->add_option("--input", run_input, "Panel CSV path")->required();
  run->add_option("--outdir", run_outdir, "Output directory (default: STAGDID_OUTPUT_DIR or .)")
      ->capture_default_str();
  add_column_options(run, run_config.columns, run_covs);
  run->add_option("--flavor", run_flavor, "Estimator: or, ipw, dr")->capture_default_str();
  run->add_option("--b", run_config.bootstrap_b, "Bootstrap replicates (0 disables)")->capture_default_str();
  run->add_option("--seed", run_seed, "RNG seed (required for the bootstrap)")
      ->each([&](const std::string&) { run_seed_given = true; });
  run->add_option("--threads", run_config.threads, "Worker threads")->capture_default_str();
  run->add_option("--mbar-max", run_config.mbar_grid.max, "Relative-magnitude budget grid maximum")
      ->capture_default_str();
  run->add_option("--mbar-points", run_config.mbar_grid.points, "Relative-magnitude grid points")
      ->capture_default_str();
  run->add_option("--m-max", run_config.m_grid.max, "Smoothness budget grid maximum")->capture_default_str();
  run->add_option("--m-points", run_config.m_grid.points, "Smoothness grid points")->capture_default_str();
  run->add_option("--bh-b", run_config.bh_bootstrap, "Model-comparison bootstrap replicates")
      ->capture_default_str();

  // sensitivity ---------------------------------------------------------------
  auto* sens = app.add_subcommand("sensitivity", "Sensitivity analyses only (no estimate files)");
  RunConfig sens_config;
  std::string sens_input, sens_outdir = default_outdir(), sens_covs, sens_flavor = "dr";
  std::uint64_t sens_seed = 0;
  bool sens_seed_given = false;
  sens->add_option("--input", sens_input, "Panel CSV path")->required();
  sens->add_option("--outdir", sens_outdir, "Output directory")->capture_default_str();
  add_column_options(sens, sens_config.columns, sens_covs);
  sens->add_option("--flavor", sens_flavor, "Estimator: or, ipw, dr")->capture_default_str();
  sens->add_option("--b", sens_config.bootstrap_b, "Bootstrap replicates (0 disables)")->capture_default_str();
  sens->add_option("--seed", sens_seed, "RNG seed")->each([&](const std::string&) { sens_seed_given = true; });
  sens->add_option("--threads", sens_config.threads, "Worker threads")->capture_default_str();
  sens->add_option("--mbar-max", sens_config.mbar_grid.max, "Relative-magnitude budget grid maximum")
      ->capture_default_str();
  sens->add_option("--mbar-points", sens_config.mbar_grid.points, "Relative-magnitude grid points")
      ->capture_default_str();
  sens->add_option("--m-max", sens_config.m_grid.max, "Smoothness budget grid maximum")->capture_default_str();
  sens->add_option("--m-points", sens_config.m_grid.points, "Smoothness grid points")->capture_default_str();
  sens->add_option("--bh-b", sens_config.bh_bootstrap, "Model-comparison bootstrap replicates")
      ->capture_default_str();

  // simulate ------------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel from a scenario JSON");
  std::string sim_scenario, sim_outdir = default_outdir();
  simulate->add_option("--scenario", sim_scenario, "Scenario JSON path")->required();
  simulate->add_option("--outdir", sim_outdir, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      validate_columns.covariates = split_csv_list(validate_covs);
      std::fputs(stagdid::validate_summary(validate_input, validate_columns).c_str(), stdout);
      return 0;
    }
    if (run->parsed() || sens->parsed()) {
      const bool is_run = run->parsed();
      RunConfig& config = is_run ? run_config : sens_config;
      config.input = is_run ? run_input : sens_input;
      config.outdir = is_run ? run_outdir : sens_outdir;
      config.columns.covariates = split_csv_list(is_run ? run_covs : sens_covs);
      config.flavor = stagdid::flavor_from_string(is_run ? run_flavor : sens_flavor);
      if (is_run ? run_seed_given : sens_seed_given) config.seed = is_run ? run_seed : sens_seed;
      config.with_estimates = is_run;
      config.with_sensitivity = true;
      const stagdid::RunArtifacts artifacts = stagdid::run_pipeline(config);
      nlohmann::json files = nlohmann::json::array();
      for (const auto& p : artifacts.written) files.push_back(p.string());
      const nlohmann::json summary = {{"ok", true}, {"written", files}};
      std::fprintf(stdout, "%s\n", summary.dump().c_str());
      return 0;
    }
    if (simulate->parsed()) {
      const stagdid::SimulateArtifacts artifacts = stagdid::run_simulate(sim_scenario, sim_outdir);
      nlohmann::json files = nlohmann::json::array();
      for (const auto& p : artifacts.written) files.push_back(p.string());
      const nlohmann::json summary = {{"ok", true}, {"written", files}};
      std::fprintf(stdout, "%s\n", summary.dump().c_str());
      return 0;
    }
  } catch (const stagdid::Error& err) {
    print_error(stagdid::to_string(err.code()), err.what());
    return exit_code_for(err.code());
  } catch (const std::exception& err) {
    print_error("INTERNAL", err.what());
    return 1;
  }
  return 0;
}
