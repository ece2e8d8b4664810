#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagdid/panel.hpp"

namespace stagdid {

enum class Flavor { OR, IPW, DR };

const char* to_string(Flavor flavor) noexcept;
Flavor flavor_from_string(std::string_view s);

// Linear model for the control-group outcome change, fitted on never-treated
// rows of a slice. `kept` indexes into [intercept, slice covariates...].
struct OutcomeChangeModel {
  std::vector<std::string> names;
  std::vector<int> kept;
  Eigen::VectorXd coef;

  Eigen::VectorXd predict(const Eigen::MatrixXd& slice_covariates) const;
};

// Logistic model for cohort membership within a slice; `fitted` is aligned
// with the slice rows.
struct PscoreModel {
  std::vector<std::string> names;
  std::vector<int> kept;
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;
  bool converged = true;
};

struct NuisanceFit {
  int g = 0;
  int t = 0;
  std::optional<OutcomeChangeModel> outcome;
  std::optional<PscoreModel> pscore;
  std::vector<std::uint8_t> treated;  // slice treated flags, kept for overlap reporting
};

NuisanceFit fit_outcome_change(const DeltaSlice& slice);
NuisanceFit fit_pscore(const DeltaSlice& slice);
// Fits whatever the flavor needs and merges the pieces.
NuisanceFit fit_nuisances(const DeltaSlice& slice, Flavor flavor);

// One group-time average treatment effect. `influence` holds per-slice-unit
// contributions under the convention mean(influence) == estimate, with the
// nuisance fits treated as fixed; the bootstrap, not this linearization, is
// the primary inference path.
struct GtattCell {
  int g = 0;
  int t = 0;
  int e = 0;  // t - g
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  Flavor flavor = Flavor::DR;
  int n_treated = 0;
  int n_control = 0;
  std::vector<int> unit_index;    // panel indices of the slice rows
  std::vector<double> influence;  // aligned with unit_index
  std::vector<std::string> flags;

  bool is_pre() const { return t < g; }
  bool failed() const;
  bool has_flag(std::string_view flag) const;
};

GtattCell att_or(const DeltaSlice& slice, const NuisanceFit& nuisance);
GtattCell att_ipw(const DeltaSlice& slice, const NuisanceFit& nuisance);
GtattCell att_dr(const DeltaSlice& slice, const NuisanceFit& nuisance);
GtattCell att_cell(const DeltaSlice& slice, const NuisanceFit& nuisance, Flavor flavor);

// Full (g, t) table: every cohort crossed with every period from 2 to T,
// post cells differenced against g-1 and pre cells against t-1. A cell whose
// propensity fit separates or stalls is refitted as OR and flagged; other
// cell-level failures yield a NaN cell tagged "error:<CODE>" instead of
// aborting the table.
struct GtattTable {
  std::vector<GtattCell> cells;
  std::vector<NuisanceFit> nuisances;  // aligned with cells
  int n_periods = 0;
  Flavor flavor = Flavor::DR;
  std::vector<std::string> covariates;

  const GtattCell* find(int g, int t) const;
  const GtattCell& at(int g, int t) const;  // throws MISSING_CELL
};

GtattTable gtatt_table(const PanelDataset& panel, const CohortDesign& design,
                       std::span<const std::string> covariates, Flavor flavor);

struct OverlapRow {
  int g = 0;
  int t = 0;
  double max_control_pscore = 0.0;
  double share_near_one = 0.0;  // controls with pscore above 1 - epsilon
  int n_control = 0;
  bool flagged = false;
};

// Propensity overlap diagnostics for every cell that carries a pscore fit.
std::vector<OverlapRow> overlap_report(const GtattTable& table, double epsilon = 0.01);

}  // namespace stagdid
