#include "stagdid/twfe.hpp"

#include <cmath>

#include "stagdid/numkit.hpp"
#include "stagdid/stats.hpp"

namespace stagdid {

namespace {

constexpr const char* kTreatName = "treat_post";

// Shared core: regress within-transformed outcomes on the treatment indicator
// plus within-transformed covariates, then wrap the clustered inference.
TwfeEstimate fit_indicator_model(const PanelDataset& panel, std::span<const std::string> covariates,
                                 TwfeFlavor flavor) {
  const Eigen::Index rows = static_cast<Eigen::Index>(panel.n_rows());

  Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(1 + covariates.size()));
  std::vector<std::string> names;
  names.emplace_back(kTreatName);
  for (int i = 0; i < panel.n_units(); ++i)
    for (int t = 1; t <= panel.n_periods(); ++t)
      values(static_cast<Eigen::Index>(panel.row(i, t)), 0) = panel.treated_at(i, t) ? 1.0 : 0.0;
  for (std::size_t k = 0; k < covariates.size(); ++k) {
    const int c = panel.require_covariate(covariates[k]);
    names.push_back(covariates[k]);
    for (int i = 0; i < panel.n_units(); ++i)
      for (int t = 1; t <= panel.n_periods(); ++t)
        values(static_cast<Eigen::Index>(panel.row(i, t)), static_cast<Eigen::Index>(1 + k)) =
            panel.covariate(i, t, c);
  }

  DesignMatrix design = within_transform(panel, make_design(std::move(values), std::move(names)));
  const Eigen::VectorXd y = within_transform_vector(panel, stacked_outcomes(panel));

  const FitResult fit = ols_fit(design, y);
  if (fit.column(kTreatName) < 0)
    fail(ErrorCode::NoVariation, "treatment indicator has no variation after the within transform");
  const Eigen::MatrixXd vcov = cluster_robust_vcov(fit, design);

  TwfeEstimate est;
  est.flavor = flavor;
  est.n_units = panel.n_units();
  est.n_clusters = panel.n_units();
  const int j = fit.column(kTreatName);
  est.estimate = fit.coef(j);
  est.se = std::sqrt(vcov(j, j));
  est.ci_lo = est.estimate - kZ95 * est.se;
  est.ci_hi = est.estimate + kZ95 * est.se;
  est.p_value = two_sided_p(est.estimate, est.se);
  for (std::size_t k = 0; k < fit.names.size(); ++k)
    if (fit.names[k] != kTreatName)
      est.covariate_coef.emplace_back(fit.names[k], fit.coef(static_cast<Eigen::Index>(k)));
  return est;
}

}  // namespace

const char* to_string(TwfeFlavor flavor) noexcept {
  return flavor == TwfeFlavor::TwoByTwo ? "TWO_BY_TWO" : "STAGGERED_INDICATOR";
}

TwfeEstimate two_by_two_did(const PanelDataset& panel, std::span<const std::string> covariates) {
  if (panel.n_periods() != 2)
    fail(ErrorCode::MoreThanTwoPeriods,
         "two-by-two design needs exactly two periods, got " + std::to_string(panel.n_periods()));
  // validate_panel already rules out treatment at the first period, so any
  // treated unit here starts at period 2 and the indicator is a clean 2x2.
  return fit_indicator_model(panel, covariates, TwfeFlavor::TwoByTwo);
}

TwfeEstimate staggered_twfe(const PanelDataset& panel, std::span<const std::string> covariates) {
  TwfeEstimate est = fit_indicator_model(panel, covariates, TwfeFlavor::StaggeredIndicator);
  est.note =
      "staggered two-way fixed effects indicator; contaminated by already-treated comparisons "
      "when effects vary over time, reported as a baseline only";
  return est;
}

double percent_increase(double att, double observed_treated_mean) {
  const double counterfactual = observed_treated_mean - att;
  if (!(counterfactual > 0.0))
    fail(ErrorCode::NonpositiveCounterfactual,
         "implied counterfactual mean " + std::to_string(counterfactual) + " is not positive");
  return 100.0 * att / counterfactual;
}

double observed_treated_mean(const PanelDataset& panel) {
  double sum = 0.0;
  long long count = 0;
  for (int i = 0; i < panel.n_units(); ++i) {
    if (!panel.ever_treated(i)) continue;
    for (int t = panel.cohort(i); t <= panel.n_periods(); ++t) {
      sum += panel.outcome(i, t);
      ++count;
    }
  }
  if (count == 0) fail(ErrorCode::NoTreated, "panel has no treated unit-periods");
  return sum / static_cast<double>(count);
}

}  // namespace stagdid
