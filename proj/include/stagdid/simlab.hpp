#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "stagdid/panel.hpp"

namespace stagdid {

struct CohortPlan {
  int g = 0;
  int n = 0;
};

// Data-generating process for synthetic staggered-adoption panels.
//
// Untreated outcome:
//   Y_it(0) = alpha_i + phi_t + gamma_level'X_i
//             + (t-1) * (gamma_trend'X_i + gamma_trend_sq'X_i^2) + eps_it
// with unit-constant covariates X_i. The trend terms are what make covariate
// adjustment matter: a purely level effect of X cancels out of every long
// difference, so confounding (and hence estimator bias) requires X to shift
// the outcome's slope. Setting both trend vectors to zero recovers the plain
// additive model.
//
// Cohort membership is multinomial logit on X (and optionally X^2) with the
// never-treated group as baseline; intercepts are calibrated so that expected
// cohort sizes match the plan at X = 0. Treated units add tau(g, t) from t = g
// onward, plus violation_slope * (t-1) when a parallel-trends violation is
// injected.
struct ScenarioSpec {
  int n_periods = 0;
  int n_never = 0;
  std::vector<CohortPlan> cohorts;
  std::map<std::pair<int, int>, double> tau;  // every post cell (g, t >= g) must be present

  int n_covariates = 0;
  std::vector<double> cov_mean;  // defaults to 0
  std::vector<double> cov_sd;    // defaults to 1
  std::vector<double> gamma_level;
  std::vector<double> gamma_trend;
  std::vector<double> gamma_trend_sq;
  std::vector<double> select_coef;
  std::vector<double> select_coef_sq;

  std::vector<double> period_effects;  // phi_t, size n_periods; empty means zero
  double unit_effect_sd = 1.0;
  double noise_sd = 1.0;
  double violation_slope = 0.0;

  std::optional<std::uint64_t> seed;  // required; everything stochastic flows from it

  void set_constant_tau(double value);
  void set_event_linear_tau(double base, double slope);  // tau(g,t) = base + slope*(t-g)
};

struct TruthTable {
  std::map<std::pair<int, int>, double> tau;

  double at(int g, int t) const;  // post cells only
  double group_mean(int g, int n_periods) const;
  // Cohort-share weighted mean of group means (the overall aggregation's target).
  double overall(const CohortDesign& realized, int n_periods) const;
  // Post-cell weighted mean with weight n_g per cell (the simple aggregation's target).
  double cell_weighted(const CohortDesign& realized, int n_periods) const;
  double event_mean(int e, const CohortDesign& realized, int n_periods) const;
};

struct GeneratedPanel {
  PanelDataset panel;
  TruthTable truth;
  int attempts = 1;  // resampling rounds needed to land a non-empty assignment
};

// Deterministic in the seed: one seed, one panel, byte for byte. Cohort
// assignment is stochastic, so a draw can leave a planned cohort empty; the
// generator retries with derived seeds a few times before giving up.
GeneratedPanel gen_panel(const ScenarioSpec& spec);

// Brute-force group-time effect: difference of mean outcome changes between
// cohort g and the never treated, written against the panel accessors alone
// so it shares no code with the estimation path.
double oracle_gtatt(const PanelDataset& panel, int g, int t);

struct BiasDemoReport {
  double truth_cell_weighted = 0.0;  // averaged over replications
  double twfe_mean = 0.0;
  double cs_simple_mean = 0.0;
  double twfe_gap = 0.0;
  double cs_gap = 0.0;
  int replications = 0;
};

// Generates `replications` panels from the spec and contrasts the staggered
// indicator regression with the group-time pipeline on each.
BiasDemoReport twfe_bias_demo(const ScenarioSpec& spec, int replications = 1);

}  // namespace stagdid
