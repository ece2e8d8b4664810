#include "stagdid/runner.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

#include "json.hpp"
#include "stagdid/twfe.hpp"

namespace stagdid {

namespace {

using nlohmann::json;

// NaN and infinities have no JSON literal; they serialize as null and the
// README documents the convention (an unbounded breakdown budget is null).
json num_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json ci_or_null(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return nullptr;
  return json::array({lo, hi});
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ",";
    out += f;
    first = false;
  }
  out += "\n";
  return out;
}

std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (i > 0) out += ";";
    out += flags[i];
  }
  return out;
}

json agg_to_json(const AggregationResult& agg, const PanelDataset& panel) {
  json weights = json::array();
  for (const auto& w : agg.weights)
    weights.push_back({{"g", panel.period_label(w.g)}, {"t", panel.period_label(w.t)}, {"w", w.w}});
  json out = {
      {"estimate", num_or_null(agg.estimate)},
      {"se", num_or_null(agg.se)},
      {"ci", ci_or_null(agg.ci_lo, agg.ci_hi)},
      {"ci_percentile", ci_or_null(agg.ci_pct_lo, agg.ci_pct_hi)},
      {"p", num_or_null(agg.p_value)},
      {"weights", weights},
  };
  if (agg.kind == AggKind::Group) out["g"] = panel.period_label(agg.key);
  if (agg.kind == AggKind::Event) {
    out["e"] = agg.key;
    out["n_cohorts"] = agg.weights.size();
  }
  return out;
}

struct PipelineState {
  PanelDataset panel;
  CohortDesign design;
  GtattTable table;
  std::vector<AggregationResult> groups;
  std::vector<AggregationResult> events;
  AggregationResult overall;
  AggregationResult simple;
  std::optional<BootstrapInference> boot;
};

// Cell rows for gtatt.csv; bootstrap SEs replace the analytic ones when the
// bootstrap ran. Failed cells keep empty numeric fields and carry their error
// code in the flags column.
std::string render_gtatt_csv(const PipelineState& st) {
  std::string out = "g,t,e,estimate,se,ci_lo,ci_hi,p,flavor,flags\n";
  for (const auto& cell : st.table.cells) {
    double se = cell.se, lo = cell.ci_lo, hi = cell.ci_hi, p = cell.p_value;
    if (st.boot) {
      const auto it = st.boot->cell_boot.find({cell.g, cell.t});
      if (it != st.boot->cell_boot.end() && !std::isnan(it->second.se)) {
        se = it->second.se;
        lo = it->second.ci_lo;
        hi = it->second.ci_hi;
        p = it->second.p_value;
      }
    }
    out += csv_line({std::to_string(st.panel.period_label(cell.g)), std::to_string(st.panel.period_label(cell.t)),
                     std::to_string(cell.e), format_double(cell.estimate), format_double(se), format_double(lo),
                     format_double(hi), format_double(p), to_string(cell.flavor), join_flags(cell.flags)});
  }
  return out;
}

std::string render_eventstudy_csv(const PipelineState& st) {
  std::string out = "e,estimate,se,ci_lo,ci_hi,n_cohorts\n";
  for (const auto& ev : st.events)
    out += csv_line({std::to_string(ev.key), format_double(ev.estimate), format_double(ev.se),
                     format_double(ev.ci_lo), format_double(ev.ci_hi), std::to_string(ev.weights.size())});
  return out;
}

json render_aggregates(const PipelineState& st, const RunConfig& config) {
  json out;
  out["flavor"] = to_string(st.table.flavor);
  out["n_units"] = st.panel.n_units();
  out["n_periods"] = st.panel.n_periods();
  out["n_never"] = st.design.n_never;
  json cohorts = json::array();
  for (std::size_t j = 0; j < st.design.cohorts.size(); ++j)
    cohorts.push_back({{"g", st.panel.period_label(st.design.cohorts[j])}, {"n", st.design.cohort_n[j]}});
  out["cohorts"] = cohorts;

  out["overall"] = agg_to_json(st.overall, st.panel);
  out["simple"] = agg_to_json(st.simple, st.panel);
  json groups = json::array();
  for (const auto& g : st.groups) groups.push_back(agg_to_json(g, st.panel));
  out["groups"] = groups;
  json events = json::array();
  for (const auto& e : st.events) events.push_back(agg_to_json(e, st.panel));
  out["events"] = events;

  // Percent change relative to the implied counterfactual mean, reported for
  // the overall aggregate; fails soft when the counterfactual is not positive.
  try {
    const double m = observed_treated_mean(st.panel);
    const double pct = percent_increase(st.overall.estimate, m);
    out["percent_increase"] = {{"att", num_or_null(st.overall.estimate)},
                               {"observed_treated_mean", m},
                               {"counterfactual_mean", m - st.overall.estimate},
                               {"percent", pct}};
  } catch (const Error& err) {
    out["percent_increase"] = {{"error", to_string(err.code())}};
  }

  if (st.boot) {
    out["bootstrap"] = {{"b", st.boot->b},
                        {"n_failed_replicates", st.boot->n_failed_replicates},
                        {"ci_default", "normal"}};
  } else {
    out["bootstrap"] = nullptr;
  }
  (void)config;
  return out;
}

json render_sensitivity(const PipelineState& st, const RunConfig& config) {
  json out;
  out["variant"] = "conservative";
  out["z"] = kZ95;

  // Placebo evidence: every non-failed pre cell, bootstrap SEs when present.
  std::vector<GtattCell> pre_cells;
  json placebo_cells = json::array();
  for (const auto& cell : st.table.cells) {
    if (!cell.is_pre() || cell.failed()) continue;
    GtattCell c = cell;
    if (st.boot) {
      const auto it = st.boot->cell_boot.find({cell.g, cell.t});
      if (it != st.boot->cell_boot.end() && !std::isnan(it->second.se)) c.se = it->second.se;
    }
    pre_cells.push_back(c);
    placebo_cells.push_back({{"g", st.panel.period_label(c.g)},
                             {"t", st.panel.period_label(c.t)},
                             {"e", c.e},
                             {"estimate", num_or_null(c.estimate)},
                             {"se", num_or_null(c.se)}});
  }

  if (pre_cells.empty()) {
    out["placebos"] = nullptr;
    out["relative_magnitudes"] = nullptr;
    out["smoothness"] = nullptr;
    out["note"] = "no pre-period placebo cells; trend budgets have no anchor";
  } else {
    const PlaceboSummary placebos = summarize_placebos(pre_cells);
    out["placebos"] = {{"cells", placebo_cells},
                       {"delta_max", placebos.delta_max},
                       {"slope", placebos.slope},
                       {"slope_se", placebos.slope_se},
                       {"n", placebos.n_placebo}};

    const std::vector<double> mbar = budget_grid(config.mbar_grid.max, config.mbar_grid.points);
    const std::vector<double> mm = budget_grid(config.m_grid.max, config.m_grid.points);
    json rm = json::array(), sm = json::array();
    for (const auto& ev : st.events) {
      if (ev.key < 0 || std::isnan(ev.se)) continue;
      const EventEstimate event{ev.key, ev.estimate, ev.se};
      auto grid_json = [](const RobustGrid& grid) {
        json rows = json::array();
        for (std::size_t i = 0; i < grid.budget.size(); ++i)
          rows.push_back({{"budget", grid.budget[i]}, {"lo", grid.lo[i]}, {"hi", grid.hi[i]}});
        return json{{"e", grid.e},
                    {"breakdown", num_or_null(grid.breakdown)},
                    {"base_ci", ci_or_null(grid.base_lo, grid.base_hi)},
                    {"grid", rows}};
      };
      rm.push_back(grid_json(rr_relative_magnitudes(event, placebos, mbar)));
      sm.push_back(grid_json(rr_smoothness(event, placebos, mm)));
    }
    out["relative_magnitudes"] = rm;
    out["smoothness"] = sm;
  }

  // Per-cohort model comparison on the cohort-plus-never subpanel; cohorts
  // without two pre-periods are reported as skipped, not as failures.
  json mc = json::array();
  for (int g : st.design.cohorts) {
    json entry;
    entry["g"] = st.panel.period_label(g);
    if (g < 3) {
      entry["skipped"] = to_string(ErrorCode::TooFewPrePeriods);
      mc.push_back(entry);
      continue;
    }
    std::vector<int> units;
    for (int i = 0; i < st.panel.n_units(); ++i)
      if (st.panel.cohort(i) == g || st.panel.cohort(i) == kNever) units.push_back(i);
    try {
      BhOptions opts;
      opts.bootstrap_reps = config.bh_bootstrap;
      opts.seed = derive_stream(config.seed.value_or(0), 0x6268ull + static_cast<std::uint64_t>(g));
      opts.threads = config.threads;
      const TrendComparison tc =
          bh_compare(resample_units(st.panel, units), st.table.covariates, g, opts);
      entry["t0"] = st.panel.period_label(tc.t0);
      entry["n_pre"] = tc.n_pre;
      entry["theta"] = num_or_null(tc.theta);
      entry["theta_se"] = num_or_null(tc.theta_se);
      entry["theta_ci"] = ci_or_null(tc.theta_lo, tc.theta_hi);
      entry["beta"] = num_or_null(tc.beta);
      entry["beta_se"] = num_or_null(tc.beta_se);
      entry["beta_ci"] = ci_or_null(tc.beta_lo, tc.beta_hi);
      entry["beta_prime"] = num_or_null(tc.beta_prime);
      entry["beta_prime_se"] = num_or_null(tc.beta_prime_se);
      entry["beta_prime_ci"] = ci_or_null(tc.beta_prime_lo, tc.beta_prime_hi);
      entry["diff"] = num_or_null(tc.diff);
      entry["diff_se"] = num_or_null(tc.diff_se);
      entry["diff_ci"] = ci_or_null(tc.diff_lo, tc.diff_hi);
      entry["diff_p"] = num_or_null(tc.diff_p);
      entry["beta_k"] = tc.beta_k;
      entry["beta_prime_k"] = tc.beta_prime_k;
      entry["post_periods"] = tc.post_periods;
      entry["bootstrap_reps"] = tc.n_boot;
      entry["bootstrap_failed"] = tc.n_boot_failed;
    } catch (const Error& err) {
      entry["error"] = to_string(err.code());
    }
    mc.push_back(entry);
  }
  out["model_comparison"] = mc;
  return out;
}

json render_manifest(const PipelineState& st, const RunConfig& config, const std::string& command,
                     const std::vector<std::filesystem::path>& written) {
  json cfg = {
      {"flavor", to_string(config.flavor)},
      {"covariates", config.columns.covariates},
      {"bootstrap_b", config.bootstrap_b},
      {"threads", config.threads},
      {"mbar_grid", {{"max", config.mbar_grid.max}, {"points", config.mbar_grid.points}}},
      {"m_grid", {{"max", config.m_grid.max}, {"points", config.m_grid.points}}},
      {"bh_bootstrap", config.bh_bootstrap},
      {"columns",
       {{"unit", config.columns.unit},
        {"period", config.columns.period},
        {"outcome", config.columns.outcome},
        {"cohort", config.columns.cohort}}},
  };
  if (config.seed)
    cfg["seed"] = *config.seed;
  else
    cfg["seed"] = nullptr;

  json outputs = json::array();
  for (const auto& p : written) outputs.push_back(p.filename().string());

  return json{
      {"tool", kToolName},
      {"version", kToolVersion},
      {"created_utc", utc_now()},
      {"command", command},
      {"input",
       {{"path", config.input.string()},
        {"fnv1a64", fnv1a64_hex(config.input)},
        {"n_rows", st.panel.n_rows()},
        {"n_units", st.panel.n_units()},
        {"n_periods", st.panel.n_periods()}}},
      {"config", cfg},
      {"outputs", outputs},
  };
}

PipelineState build_state(const RunConfig& config) {
  PipelineState st;
  const CsvTable csv = read_csv(config.input);
  st.panel = validate_panel(rows_from_csv(csv, config.columns), config.columns.covariates);
  st.design = build_cohort_design(st.panel);

  EstimatorSpec spec;
  spec.flavor = config.flavor;
  spec.covariates = config.columns.covariates;

  if (config.bootstrap_b > 0) {
    if (!config.seed)
      fail(ErrorCode::ConfigMissingSeed, "the bootstrap is stochastic; pass a seed or disable it with --b 0");
    st.boot = bootstrap_inference(st.panel, spec, config.bootstrap_b,
                                  derive_stream(*config.seed, 0x626F6F74ull), config.threads);
    st.table = st.boot->table;
    st.groups = st.boot->groups;
    st.events = st.boot->events;
    st.overall = st.boot->overall;
    st.simple = st.boot->simple;
  } else {
    st.table = gtatt_table(st.panel, st.design, spec.covariates, spec.flavor);
    for (int g : st.design.cohorts) st.groups.push_back(agg_group(st.table, st.design, g));
    st.overall = agg_overall(st.table, st.design);
    st.simple = agg_simple(st.table, st.design);
    for (int e : event_times(st.table)) st.events.push_back(agg_event(st.table, st.design, e));
  }
  return st;
}

}  // namespace

RunArtifacts run_pipeline(const RunConfig& config) {
  if (config.with_sensitivity && config.bh_bootstrap > 0 && !config.seed)
    fail(ErrorCode::ConfigMissingSeed, "the model-comparison bootstrap is stochastic; pass a seed");
  PipelineState st = build_state(config);
  std::filesystem::create_directories(config.outdir);

  RunArtifacts artifacts;
  auto emit = [&](const std::string& name, const std::string& content) {
    const std::filesystem::path p = config.outdir / name;
    write_file(p, content);
    artifacts.written.push_back(p);
  };

  if (config.with_estimates) {
    emit("gtatt.csv", render_gtatt_csv(st));
    emit("aggregates.json", render_aggregates(st, config).dump(2) + "\n");
    emit("eventstudy.csv", render_eventstudy_csv(st));
  }
  if (config.with_sensitivity) {
    emit("sensitivity.json", render_sensitivity(st, config).dump(2) + "\n");
  }
  const std::string command = config.with_estimates ? "run" : "sensitivity";
  emit("run_manifest.json", render_manifest(st, config, command, artifacts.written).dump(2) + "\n");

  artifacts.table = std::move(st.table);
  artifacts.design = std::move(st.design);
  return artifacts;
}

std::string validate_summary(const std::filesystem::path& input, const PanelColumns& columns) {
  const CsvTable csv = read_csv(input);
  const PanelDataset panel = validate_panel(rows_from_csv(csv, columns), columns.covariates);
  const CohortDesign design = build_cohort_design(panel);

  json cohorts = json::array();
  for (std::size_t j = 0; j < design.cohorts.size(); ++j)
    cohorts.push_back({{"g", panel.period_label(design.cohorts[j])}, {"n", design.cohort_n[j]}});
  const json out = {
      {"ok", true},
      {"n_units", panel.n_units()},
      {"n_periods", panel.n_periods()},
      {"periods", panel.period_labels()},
      {"cohorts", cohorts},
      {"n_never", design.n_never},
      {"covariates", panel.covariate_names()},
  };
  return out.dump(2) + "\n";
}

ScenarioSpec scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    fail(ErrorCode::ConfigInvalid, std::string("scenario JSON: ") + err.what());
  }
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "scenario JSON must be an object");

  static const std::set<std::string> known = {
      "seed",       "n_periods",      "n_never",    "cohorts",        "tau",
      "covariates", "period_effects", "unit_effect_sd", "noise_sd",   "violation_slope"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail(ErrorCode::ConfigInvalid, "unknown scenario key '" + key + "'");

  ScenarioSpec spec;
  try {
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.n_periods = j.at("n_periods").get<int>();
    spec.n_never = j.at("n_never").get<int>();
    for (const auto& c : j.at("cohorts")) spec.cohorts.push_back({c.at("g").get<int>(), c.at("n").get<int>()});

    const json& tau = j.at("tau");
    const std::string kind = tau.at("kind").get<std::string>();
    if (kind == "constant") {
      spec.set_constant_tau(tau.at("value").get<double>());
    } else if (kind == "event_linear") {
      spec.set_event_linear_tau(tau.at("base").get<double>(), tau.at("slope").get<double>());
    } else if (kind == "cells") {
      for (const auto& c : tau.at("cells"))
        spec.tau[{c.at("g").get<int>(), c.at("t").get<int>()}] = c.at("value").get<double>();
    } else {
      fail(ErrorCode::ConfigInvalid, "tau.kind must be constant, event_linear, or cells");
    }

    if (j.contains("covariates")) {
      const json& cov = j.at("covariates");
      spec.n_covariates = cov.at("count").get<int>();
      auto vec = [&](const char* key) {
        return cov.contains(key) ? cov.at(key).get<std::vector<double>>() : std::vector<double>{};
      };
      spec.cov_mean = vec("mean");
      spec.cov_sd = vec("sd");
      spec.gamma_level = vec("gamma_level");
      spec.gamma_trend = vec("gamma_trend");
      spec.gamma_trend_sq = vec("gamma_trend_sq");
      spec.select_coef = vec("select");
      spec.select_coef_sq = vec("select_sq");
    }
    if (j.contains("period_effects")) spec.period_effects = j.at("period_effects").get<std::vector<double>>();
    if (j.contains("unit_effect_sd")) spec.unit_effect_sd = j.at("unit_effect_sd").get<double>();
    if (j.contains("noise_sd")) spec.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("violation_slope")) spec.violation_slope = j.at("violation_slope").get<double>();
  } catch (const json::exception& err) {
    fail(ErrorCode::ConfigInvalid, std::string("scenario JSON: ") + err.what());
  }
  return spec;
}

SimulateArtifacts run_simulate(const std::filesystem::path& scenario_path, const std::filesystem::path& outdir) {
  const ScenarioSpec spec = scenario_from_json(read_file(scenario_path));
  const GeneratedPanel gen = gen_panel(spec);
  const CohortDesign design = build_cohort_design(gen.panel);

  std::filesystem::create_directories(outdir);
  SimulateArtifacts artifacts;

  const std::filesystem::path panel_path = outdir / "panel.csv";
  write_panel_csv(panel_path, gen.panel);
  artifacts.written.push_back(panel_path);

  json cells = json::array();
  for (const auto& [key, value] : gen.truth.tau)
    cells.push_back({{"g", key.first}, {"t", key.second}, {"value", value}});
  json realized = json::array();
  for (std::size_t jx = 0; jx < design.cohorts.size(); ++jx)
    realized.push_back({{"g", design.cohorts[jx]}, {"n", design.cohort_n[jx]}});
  const json truth = {
      {"tau", cells},
      {"realized_cohorts", realized},
      {"n_never", design.n_never},
      {"n_units", gen.panel.n_units()},
      {"overall", gen.truth.overall(design, gen.panel.n_periods())},
      {"cell_weighted", gen.truth.cell_weighted(design, gen.panel.n_periods())},
      {"attempts", gen.attempts},
      {"seed", *spec.seed},
  };
  const std::filesystem::path truth_path = outdir / "truth.json";
  write_file(truth_path, truth.dump(2) + "\n");
  artifacts.written.push_back(truth_path);
  return artifacts;
}

}  // namespace stagdid
