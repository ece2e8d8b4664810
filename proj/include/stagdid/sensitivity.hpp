#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stagdid/csdid.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

// Model-comparison sensitivity check for one cohort against the never-treated
// group. The base event-study regression saturates treated x post-period
// dummies (beta_k); the augmented one adds a treated-specific linear trend
// G_i * t identified off the pre-periods, under which the dummies become the
// deviations from that trend (beta_prime_k).
struct TrendComparison {
  double beta = 0.0;  // mean of beta_k over post periods
  double beta_se = 0.0;
  double beta_lo = 0.0, beta_hi = 0.0;
  double beta_prime = 0.0;
  double beta_prime_se = 0.0;
  double beta_prime_lo = 0.0, beta_prime_hi = 0.0;
  double theta = 0.0;  // treated trend slope per period
  double theta_se = 0.0;
  double theta_lo = 0.0, theta_hi = 0.0;
  double diff = 0.0;  // beta - beta_prime, bootstrap inference
  double diff_se = 0.0;
  double diff_lo = 0.0, diff_hi = 0.0;
  double diff_p = 1.0;
  std::vector<int> post_periods;  // k = T0..T
  std::vector<double> beta_k;
  std::vector<double> beta_prime_k;
  int t0 = 0;
  int n_pre = 0;
  int n_boot = 0;
  int n_boot_failed = 0;
};

struct BhOptions {
  int bootstrap_reps = 199;
  std::uint64_t seed = 1;
  int threads = 1;
};

// Panel must contain exactly one treated cohort (starting at t0, with
// t0 >= 3 so the trend is identified off at least two pre-periods) plus
// never-treated units. Both models are fit by within-transformed OLS with
// unit-clustered errors; the beta - beta_prime difference is bootstrapped
// jointly so its SE accounts for the shared sample.
TrendComparison bh_compare(const PanelDataset& panel, std::span<const std::string> covariates, int t0,
                           const BhOptions& options = {});

// Inputs for the robust-interval construction: one post event-time estimate
// and the pre-period placebo evidence backing the trend budget.
struct EventEstimate {
  int e = 0;
  double estimate = 0.0;
  double se = 0.0;
};

struct PlaceboSummary {
  double delta_max = 0.0;  // max |placebo estimate|
  double slope = 0.0;      // mean placebo estimate, per-period drift
  double slope_se = 0.0;   // sqrt(sum of placebo se^2) / J
  int n_placebo = 0;
};

PlaceboSummary summarize_placebos(std::span<const GtattCell> pre_cells);

enum class BudgetKind { RelativeMagnitude, Smoothness };

// Worst-case widened intervals on a budget grid. These are conservative
// closed forms: the trend-violation bound is added to the sampling interval
// outright, so every interval contains the exact partial-identification
// interval and breakdown budgets err small. Reports carry the variant label.
struct RobustGrid {
  int e = 0;
  BudgetKind kind = BudgetKind::RelativeMagnitude;
  std::vector<double> budget;
  std::vector<double> lo;
  std::vector<double> hi;
  double base_lo = 0.0;  // interval at budget zero
  double base_hi = 0.0;
  double breakdown = 0.0;  // +inf when no finite budget overturns the sign
  PlaceboSummary placebos;
  std::string variant = "conservative";
};

// Violations bounded by Mbar times the largest placebo magnitude per period:
// the interval widens by Mbar * delta_max * (e+1) on each side.
RobustGrid rr_relative_magnitudes(const EventEstimate& event, const PlaceboSummary& placebos,
                                  std::span<const double> grid);

// Violations allowed to drift from the estimated pre-trend by at most M per
// period of horizon: the interval recenters by slope * (e+1), its SE absorbs
// the slope uncertainty, and the width grows by M * (e+1)(e+2)/2.
RobustGrid rr_smoothness(const EventEstimate& event, const PlaceboSummary& placebos,
                         std::span<const double> grid);

double breakdown_mbar(const EventEstimate& event, const PlaceboSummary& placebos);
double breakdown_m(const EventEstimate& event, const PlaceboSummary& placebos);

// Evenly spaced grid from 0 to max inclusive.
std::vector<double> budget_grid(double max, int points);

}  // namespace stagdid
