#include "stagdid/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stagdid/aggregate.hpp"
#include "stagdid/csdid.hpp"
#include "stagdid/rng.hpp"
#include "stagdid/twfe.hpp"

namespace stagdid {

namespace {

void check_spec(const ScenarioSpec& spec) {
  auto bad = [](const std::string& msg) { fail(ErrorCode::BadScenario, msg); };
  if (spec.n_periods < 2) bad("scenario needs at least two periods");
  if (spec.n_never < 1) bad("scenario needs never-treated units");
  if (spec.cohorts.empty()) bad("scenario needs at least one treated cohort");
  std::vector<int> seen;
  for (const auto& c : spec.cohorts) {
    if (c.g < 2 || c.g > spec.n_periods) bad("cohort period " + std::to_string(c.g) + " outside 2..T");
    if (c.n < 1) bad("cohort " + std::to_string(c.g) + " has non-positive size");
    if (std::find(seen.begin(), seen.end(), c.g) != seen.end())
      bad("cohort " + std::to_string(c.g) + " listed twice");
    seen.push_back(c.g);
    for (int t = c.g; t <= spec.n_periods; ++t)
      if (!spec.tau.count({c.g, t}))
        bad("tau missing for post cell (" + std::to_string(c.g) + "," + std::to_string(t) + ")");
  }
  const std::size_t k = static_cast<std::size_t>(spec.n_covariates);
  auto check_len = [&](const std::vector<double>& v, const char* name) {
    if (!v.empty() && v.size() != k) bad(std::string(name) + " must have one entry per covariate");
    for (double x : v)
      if (!std::isfinite(x)) bad(std::string(name) + " contains a non-finite value");
  };
  check_len(spec.cov_mean, "cov_mean");
  check_len(spec.cov_sd, "cov_sd");
  check_len(spec.gamma_level, "gamma_level");
  check_len(spec.gamma_trend, "gamma_trend");
  check_len(spec.gamma_trend_sq, "gamma_trend_sq");
  check_len(spec.select_coef, "select_coef");
  check_len(spec.select_coef_sq, "select_coef_sq");
  for (double s : spec.cov_sd)
    if (s < 0.0) bad("cov_sd must be non-negative");
  if (!spec.period_effects.empty() && spec.period_effects.size() != static_cast<std::size_t>(spec.n_periods))
    bad("period_effects must have one entry per period");
  if (!(spec.unit_effect_sd >= 0.0) || !(spec.noise_sd >= 0.0)) bad("effect SDs must be non-negative");
  if (!std::isfinite(spec.violation_slope)) bad("violation_slope must be finite");
  if (!spec.seed) fail(ErrorCode::ConfigMissingSeed, "scenario has no seed");
}

double dot_or_zero(const std::vector<double>& coef, const std::vector<double>& x, bool squared) {
  if (coef.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < coef.size(); ++k) s += coef[k] * (squared ? x[k] * x[k] : x[k]);
  return s;
}

}  // namespace

void ScenarioSpec::set_constant_tau(double value) {
  for (const auto& c : cohorts)
    for (int t = c.g; t <= n_periods; ++t) tau[{c.g, t}] = value;
}

void ScenarioSpec::set_event_linear_tau(double base, double slope) {
  for (const auto& c : cohorts)
    for (int t = c.g; t <= n_periods; ++t) tau[{c.g, t}] = base + slope * static_cast<double>(t - c.g);
}

double TruthTable::at(int g, int t) const {
  const auto it = tau.find({g, t});
  if (it == tau.end())
    fail(ErrorCode::MissingCell, "truth has no cell (" + std::to_string(g) + "," + std::to_string(t) + ")");
  return it->second;
}

double TruthTable::group_mean(int g, int n_periods) const {
  double s = 0.0;
  for (int t = g; t <= n_periods; ++t) s += at(g, t);
  return s / static_cast<double>(n_periods - g + 1);
}

double TruthTable::overall(const CohortDesign& realized, int n_periods) const {
  double s = 0.0;
  for (int g : realized.cohorts) s += realized.ever_share(g) * group_mean(g, n_periods);
  return s;
}

double TruthTable::cell_weighted(const CohortDesign& realized, int n_periods) const {
  double s = 0.0, w = 0.0;
  for (int g : realized.cohorts)
    for (int t = g; t <= n_periods; ++t) {
      s += static_cast<double>(realized.size_of(g)) * at(g, t);
      w += static_cast<double>(realized.size_of(g));
    }
  return s / w;
}

double TruthTable::event_mean(int e, const CohortDesign& realized, int n_periods) const {
  double s = 0.0, w = 0.0;
  for (int g : realized.cohorts) {
    if (g + e < g || g + e > n_periods) continue;
    s += static_cast<double>(realized.size_of(g)) * at(g, g + e);
    w += static_cast<double>(realized.size_of(g));
  }
  if (w == 0.0) fail(ErrorCode::NoEligibleCohort, "no cohort observes event time " + std::to_string(e));
  return s / w;
}

GeneratedPanel gen_panel(const ScenarioSpec& spec) {
  check_spec(spec);
  const int t_len = spec.n_periods;
  const std::size_t n_cov = static_cast<std::size_t>(spec.n_covariates);

  int n_total = spec.n_never;
  for (const auto& c : spec.cohorts) n_total += c.n;

  // Selection intercepts calibrated at X = 0: log of planned size over the
  // never-treated size makes the expected shares match the plan there.
  std::vector<double> intercept;
  for (const auto& c : spec.cohorts)
    intercept.push_back(std::log(static_cast<double>(c.n) / static_cast<double>(spec.n_never)));

  int width = 1;
  for (int v = n_total; v >= 10; v /= 10) ++width;

  constexpr int kMaxAttempts = 10;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_stream(*spec.seed, static_cast<std::uint64_t>(attempt)));

    std::vector<int> cohorts(static_cast<std::size_t>(n_total), kNever);
    std::vector<double> xs(static_cast<std::size_t>(n_total) * n_cov, 0.0);
    std::vector<double> outcomes(static_cast<std::size_t>(n_total) * static_cast<std::size_t>(t_len), 0.0);

    // Fixed per-unit draw order: covariates, assignment, unit effect, noise.
    for (int i = 0; i < n_total; ++i) {
      std::vector<double> x(n_cov);
      for (std::size_t k = 0; k < n_cov; ++k) {
        const double m = spec.cov_mean.empty() ? 0.0 : spec.cov_mean[k];
        const double s = spec.cov_sd.empty() ? 1.0 : spec.cov_sd[k];
        x[k] = rng.normal(m, s);
        xs[static_cast<std::size_t>(i) * n_cov + k] = x[k];
      }

      double denom = 1.0;
      std::vector<double> expeta(spec.cohorts.size());
      for (std::size_t j = 0; j < spec.cohorts.size(); ++j) {
        const double eta = intercept[j] + dot_or_zero(spec.select_coef, x, false) +
                           dot_or_zero(spec.select_coef_sq, x, true);
        expeta[j] = std::exp(eta);
        denom += expeta[j];
      }
      const double u = rng.uniform();
      double cum = 0.0;
      int g = kNever;
      for (std::size_t j = 0; j < spec.cohorts.size(); ++j) {
        cum += expeta[j] / denom;
        if (u < cum) {
          g = spec.cohorts[j].g;
          break;
        }
      }
      cohorts[static_cast<std::size_t>(i)] = g;

      const double alpha = rng.normal(0.0, spec.unit_effect_sd);
      const double level = dot_or_zero(spec.gamma_level, x, false);
      const double trend = dot_or_zero(spec.gamma_trend, x, false) + dot_or_zero(spec.gamma_trend_sq, x, true);

      for (int t = 1; t <= t_len; ++t) {
        const double phi =
            spec.period_effects.empty() ? 0.0 : spec.period_effects[static_cast<std::size_t>(t - 1)];
        double y = alpha + phi + level + static_cast<double>(t - 1) * trend + rng.normal(0.0, spec.noise_sd);
        if (g != kNever) {
          y += spec.violation_slope * static_cast<double>(t - 1);
          if (t >= g) y += spec.tau.at({g, t});
        }
        outcomes[static_cast<std::size_t>(i) * static_cast<std::size_t>(t_len) + static_cast<std::size_t>(t - 1)] = y;
      }
    }

    // Every planned cohort and the never group must be represented.
    bool ok = std::count(cohorts.begin(), cohorts.end(), kNever) > 0;
    for (const auto& c : spec.cohorts)
      ok = ok && std::count(cohorts.begin(), cohorts.end(), c.g) > 0;
    if (!ok) continue;

    std::vector<std::string> ids(static_cast<std::size_t>(n_total));
    for (int i = 0; i < n_total; ++i) {
      std::string num = std::to_string(i + 1);
      ids[static_cast<std::size_t>(i)] = "u" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    }
    std::vector<long long> labels(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) labels[static_cast<std::size_t>(t)] = t + 1;
    std::vector<std::string> cov_names;
    for (std::size_t k = 0; k < n_cov; ++k) cov_names.push_back("x" + std::to_string(k + 1));

    // Covariates are unit-constant: replicate each unit's draw across periods.
    std::vector<double> cov_cells(static_cast<std::size_t>(n_total) * static_cast<std::size_t>(t_len) * n_cov);
    for (int i = 0; i < n_total; ++i)
      for (int t = 0; t < t_len; ++t)
        for (std::size_t k = 0; k < n_cov; ++k)
          cov_cells[(static_cast<std::size_t>(i) * static_cast<std::size_t>(t_len) + static_cast<std::size_t>(t)) * n_cov + k] =
              xs[static_cast<std::size_t>(i) * n_cov + k];

    GeneratedPanel out;
    out.panel = PanelDataset::make(std::move(ids), std::move(cohorts), t_len, std::move(labels),
                                   std::move(outcomes), std::move(cov_cells), std::move(cov_names));
    out.truth.tau = spec.tau;
    out.attempts = attempt + 1;
    return out;
  }
  fail(ErrorCode::EmptyCohort,
       "cohort assignment left a planned cohort empty in " + std::to_string(kMaxAttempts) + " attempts");
}

double oracle_gtatt(const PanelDataset& panel, int g, int t) {
  if (t < 1 || t > panel.n_periods()) fail(ErrorCode::EmptyCell, "period out of range");
  const int b = t >= g ? g - 1 : t - 1;
  if (b < 1) fail(ErrorCode::NoPrePeriods, "no base period for this cell");

  double treated_sum = 0.0, control_sum = 0.0;
  int n_treated = 0, n_control = 0;
  for (int i = 0; i < panel.n_units(); ++i) {
    if (panel.cohort(i) == g) {
      treated_sum += panel.outcome(i, t) - panel.outcome(i, b);
      ++n_treated;
    } else if (panel.cohort(i) == kNever) {
      control_sum += panel.outcome(i, t) - panel.outcome(i, b);
      ++n_control;
    }
  }
  if (n_treated == 0) fail(ErrorCode::EmptyCell, "no treated units in cohort " + std::to_string(g));
  if (n_control == 0) fail(ErrorCode::InsufficientControls, "no never-treated units");
  return treated_sum / n_treated - control_sum / n_control;
}

BiasDemoReport twfe_bias_demo(const ScenarioSpec& spec, int replications) {
  check_spec(spec);
  if (replications < 1) fail(ErrorCode::ConfigInvalid, "replications must be positive");

  BiasDemoReport report;
  report.replications = replications;
  for (int r = 0; r < replications; ++r) {
    ScenarioSpec rep = spec;
    if (r > 0) rep.seed = derive_stream(*spec.seed, 0x6269617364656D6Full + static_cast<std::uint64_t>(r));
    const GeneratedPanel gen = gen_panel(rep);
    const CohortDesign design = build_cohort_design(gen.panel);

    const TwfeEstimate twfe = staggered_twfe(gen.panel, gen.panel.covariate_names());
    const GtattTable table = gtatt_table(gen.panel, design, gen.panel.covariate_names(), Flavor::DR);
    const AggregationResult simple = agg_simple(table, design);

    report.truth_cell_weighted += gen.truth.cell_weighted(design, spec.n_periods);
    report.twfe_mean += twfe.estimate;
    report.cs_simple_mean += simple.estimate;
  }
  report.truth_cell_weighted /= replications;
  report.twfe_mean /= replications;
  report.cs_simple_mean /= replications;
  report.twfe_gap = report.twfe_mean - report.truth_cell_weighted;
  report.cs_gap = report.cs_simple_mean - report.truth_cell_weighted;
  return report;
}

}  // namespace stagdid
