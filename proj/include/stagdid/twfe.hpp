#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stagdid/panel.hpp"

namespace stagdid {

enum class TwfeFlavor { TwoByTwo, StaggeredIndicator };

const char* to_string(TwfeFlavor flavor) noexcept;

struct TwfeEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  std::vector<std::pair<std::string, double>> covariate_coef;
  TwfeFlavor flavor = TwfeFlavor::TwoByTwo;
  int n_units = 0;
  int n_clusters = 0;
  std::string note;
};

// Canonical two-period, two-group regression with unit and period effects,
// estimated on the within-transformed panel with CR1 unit-clustered errors.
// The panel must have exactly two periods, treated units starting at the
// second.
TwfeEstimate two_by_two_did(const PanelDataset& panel, std::span<const std::string> covariates);

// Single-coefficient treatment indicator regression on a staggered panel.
// This is the specification whose estimate mixes already-treated comparisons;
// it is reported as a baseline, with a note to that effect, never as the
// causal summary.
TwfeEstimate staggered_twfe(const PanelDataset& panel, std::span<const std::string> covariates);

// Converts an additive effect on a positive outcome into the percent change
// relative to the implied counterfactual mean: 100 * att / (mean - att).
double percent_increase(double att, double observed_treated_mean);

// Mean outcome over treated unit-periods (t >= cohort), the input the
// percent-increase transformation expects.
double observed_treated_mean(const PanelDataset& panel);

}  // namespace stagdid
