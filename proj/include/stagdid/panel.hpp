#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stagdid/error.hpp"

namespace stagdid {

// Cohort sentinel for units that are never treated.
inline constexpr int kNever = 0;

// One input observation, as parsed from a CSV row or assembled by a caller.
// `cohort` holds the original period label of first treatment; nullopt means
// never treated.
struct RawRow {
  std::string unit;
  long long period = 0;
  double outcome = 0.0;
  std::optional<long long> cohort;
  std::vector<double> covariates;
};

// Balanced panel in canonical form: units sorted by id, periods relabeled
// 1..T, treatment absorbing. Instances are immutable after construction and
// safe to share across threads.
class PanelDataset {
 public:
  PanelDataset() = default;

  int n_units() const { return static_cast<int>(unit_ids_.size()); }
  int n_periods() const { return n_periods_; }
  int n_rows() const { return n_units() * n_periods_; }
  int n_covariates() const { return static_cast<int>(covariate_names_.size()); }

  const std::string& unit_id(int i) const { return unit_ids_[static_cast<std::size_t>(i)]; }
  int cohort(int i) const { return cohorts_[static_cast<std::size_t>(i)]; }
  bool ever_treated(int i) const { return cohort(i) != kNever; }
  bool treated_at(int i, int t) const { return ever_treated(i) && t >= cohort(i); }

  double outcome(int i, int t) const { return outcomes_[row(i, t)]; }
  double covariate(int i, int t, int k) const {
    return covariates_[row(i, t) * static_cast<std::size_t>(n_covariates()) + static_cast<std::size_t>(k)];
  }

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  int covariate_index(std::string_view name) const;
  int require_covariate(std::string_view name) const;

  // Original labels of the internal periods 1..T.
  const std::vector<long long>& period_labels() const { return period_labels_; }
  long long period_label(int t) const { return period_labels_[static_cast<std::size_t>(t - 1)]; }

  // Row index in unit-major storage; t is the internal 1-based period.
  std::size_t row(int i, int t) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_periods_) + static_cast<std::size_t>(t - 1);
  }

  // Trusted constructor for internal factories (validate_panel, subsetting,
  // bootstrap resampling, the generator). Performs size checks only.
  static PanelDataset make(std::vector<std::string> unit_ids, std::vector<int> cohorts, int n_periods,
                           std::vector<long long> period_labels, std::vector<double> outcomes,
                           std::vector<double> covariates, std::vector<std::string> covariate_names);

 private:
  std::vector<std::string> unit_ids_;
  std::vector<int> cohorts_;
  int n_periods_ = 0;
  std::vector<long long> period_labels_;
  std::vector<double> outcomes_;    // n_units * n_periods, unit-major
  std::vector<double> covariates_;  // n_units * n_periods * n_covariates
  std::vector<std::string> covariate_names_;
};

// Checks balance, absorbing treatment, missing values and cohort labels, then
// returns the canonical dataset. Cohort labels must be period labels present
// in the data (or absent for never treated).
PanelDataset validate_panel(const std::vector<RawRow>& rows, const std::vector<std::string>& covariate_names);

struct CohortDesign {
  std::vector<int> cohorts;   // ascending, internal period indices
  std::vector<int> cohort_n;  // aligned with `cohorts`
  int n_never = 0;
  int n_periods = 0;

  int n_ever() const {
    int s = 0;
    for (int n : cohort_n) s += n;
    return s;
  }
  int n_total() const { return n_ever() + n_never; }
  int size_of(int g) const;
  // P(G = g | ever treated), the weight used by the overall aggregation.
  double ever_share(int g) const { return static_cast<double>(size_of(g)) / static_cast<double>(n_ever()); }
};

CohortDesign build_cohort_design(const PanelDataset& panel);

// Base period convention: post cells (t >= g) difference against g-1, pre
// placebo cells (t < g) against the immediately preceding period t-1.
inline int base_period(int g, int t) { return t >= g ? g - 1 : t - 1; }

// Long difference for one (g, t) cell: treated units of cohort g plus all
// never-treated controls, outcome change from the base period, covariates
// measured at the base period.
struct DeltaSlice {
  int g = 0;
  int t = 0;
  int base = 0;
  std::vector<int> unit_index;       // panel indices, treated block first
  std::vector<std::uint8_t> treated;
  Eigen::VectorXd delta_y;
  Eigen::MatrixXd covariates;        // one row per slice unit, values at `base`
  std::vector<std::string> covariate_names;
  int n_treated = 0;
  int n_control = 0;

  int size() const { return static_cast<int>(unit_index.size()); }
  bool is_pre() const { return t < g; }
};

DeltaSlice delta_slice(const PanelDataset& panel, int g, int t);
DeltaSlice delta_slice(const PanelDataset& panel, int g, int t, std::span<const std::string> covariates);

// Subpanel with the given units (indices may repeat, e.g. bootstrap draws)
// and kept periods (strictly increasing internal indices). Cohorts are
// recomputed relative to the kept periods: the new cohort is the first kept
// period at or after the original treatment start, or never if none is.
PanelDataset subset_panel(const PanelDataset& panel, std::span<const int> units, std::span<const int> periods);

// All periods kept, units as given (repeats allowed).
PanelDataset resample_units(const PanelDataset& panel, std::span<const int> units);

}  // namespace stagdid
