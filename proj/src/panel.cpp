#include "stagdid/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace stagdid {

int PanelDataset::covariate_index(std::string_view name) const {
  for (std::size_t k = 0; k < covariate_names_.size(); ++k)
    if (covariate_names_[k] == name) return static_cast<int>(k);
  return -1;
}

int PanelDataset::require_covariate(std::string_view name) const {
  const int k = covariate_index(name);
  if (k < 0) fail(ErrorCode::UnknownColumn, "covariate '" + std::string(name) + "' not present in the panel");
  return k;
}

PanelDataset PanelDataset::make(std::vector<std::string> unit_ids, std::vector<int> cohorts, int n_periods,
                                std::vector<long long> period_labels, std::vector<double> outcomes,
                                std::vector<double> covariates, std::vector<std::string> covariate_names) {
  const std::size_t n = unit_ids.size();
  const std::size_t t = static_cast<std::size_t>(n_periods);
  if (cohorts.size() != n || period_labels.size() != t || outcomes.size() != n * t ||
      covariates.size() != n * t * covariate_names.size()) {
    fail(ErrorCode::ConfigInvalid, "inconsistent panel component sizes");
  }
  PanelDataset p;
  p.unit_ids_ = std::move(unit_ids);
  p.cohorts_ = std::move(cohorts);
  p.n_periods_ = n_periods;
  p.period_labels_ = std::move(period_labels);
  p.outcomes_ = std::move(outcomes);
  p.covariates_ = std::move(covariates);
  p.covariate_names_ = std::move(covariate_names);
  return p;
}

PanelDataset validate_panel(const std::vector<RawRow>& rows, const std::vector<std::string>& covariate_names) {
  if (rows.empty()) fail(ErrorCode::Unbalanced, "panel has no rows");
  const std::size_t n_cov = covariate_names.size();

  // Pass 1: collect period labels and unit ids.
  std::vector<long long> labels;
  std::map<std::string, std::size_t> unit_of;  // ordered map gives the canonical sort for free
  for (const RawRow& r : rows) {
    labels.push_back(r.period);
    unit_of.emplace(r.unit, 0);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const int T = static_cast<int>(labels.size());
  if (T < 2) fail(ErrorCode::Unbalanced, "panel needs at least two distinct periods");

  std::size_t next = 0;
  for (auto& [id, idx] : unit_of) idx = next++;
  const std::size_t N = unit_of.size();
  if (rows.size() != N * static_cast<std::size_t>(T)) {
    fail(ErrorCode::Unbalanced, "expected " + std::to_string(N * static_cast<std::size_t>(T)) + " rows for " +
                                    std::to_string(N) + " units x " + std::to_string(T) + " periods, got " +
                                    std::to_string(rows.size()));
  }

  std::unordered_map<long long, int> period_of;
  period_of.reserve(labels.size());
  for (int t = 0; t < T; ++t) period_of.emplace(labels[static_cast<std::size_t>(t)], t + 1);

  // Pass 2: fill the grid, checking each cell exactly once and the cohort
  // label once per unit.
  std::vector<double> outcomes(N * static_cast<std::size_t>(T), 0.0);
  std::vector<double> covariates(N * static_cast<std::size_t>(T) * n_cov, 0.0);
  std::vector<char> seen(N * static_cast<std::size_t>(T), 0);
  std::vector<std::optional<long long>> cohort_label(N);
  std::vector<char> cohort_set(N, 0);

  for (const RawRow& r : rows) {
    const std::size_t i = unit_of.at(r.unit);
    const int t = period_of.at(r.period);
    const std::size_t cell = i * static_cast<std::size_t>(T) + static_cast<std::size_t>(t - 1);
    if (seen[cell])
      fail(ErrorCode::Unbalanced, "duplicate row for unit '" + r.unit + "' period " + std::to_string(r.period));
    seen[cell] = 1;

    if (!std::isfinite(r.outcome))
      fail(ErrorCode::MissingValue, "non-finite outcome for unit '" + r.unit + "' period " + std::to_string(r.period));
    if (r.covariates.size() != n_cov)
      fail(ErrorCode::MissingValue, "unit '" + r.unit + "' period " + std::to_string(r.period) + " has " +
                                        std::to_string(r.covariates.size()) + " covariates, expected " +
                                        std::to_string(n_cov));
    for (std::size_t k = 0; k < n_cov; ++k) {
      if (!std::isfinite(r.covariates[k]))
        fail(ErrorCode::MissingValue,
             "non-finite covariate '" + covariate_names[k] + "' for unit '" + r.unit + "'");
      covariates[cell * n_cov + k] = r.covariates[k];
    }
    outcomes[cell] = r.outcome;

    if (!cohort_set[i]) {
      cohort_set[i] = 1;
      cohort_label[i] = r.cohort;
    } else if (cohort_label[i] != r.cohort) {
      fail(ErrorCode::Nonabsorbing, "cohort label varies across rows of unit '" + r.unit + "'");
    }
  }
  // Balance: row count matched and no duplicates, so every cell is filled.

  std::vector<std::string> unit_ids(N);
  std::vector<int> cohorts(N, kNever);
  bool any_never = false;
  for (const auto& [id, i] : unit_of) {
    unit_ids[i] = id;
    if (!cohort_label[i].has_value()) {
      any_never = true;
      continue;
    }
    const auto it = period_of.find(*cohort_label[i]);
    if (it == period_of.end())
      fail(ErrorCode::CohortUnknownPeriod,
           "unit '" + id + "' has cohort " + std::to_string(*cohort_label[i]) + " which is not a period in the data");
    if (it->second == 1)
      fail(ErrorCode::CohortAtFirstPeriod,
           "unit '" + id + "' is treated from the first period and has no pre-treatment base");
    cohorts[i] = it->second;
  }
  if (!any_never) fail(ErrorCode::NoNeverTreated, "panel has no never-treated units to serve as controls");

  return PanelDataset::make(std::move(unit_ids), std::move(cohorts), T, std::move(labels), std::move(outcomes),
                            std::move(covariates), std::vector<std::string>(covariate_names));
}

int CohortDesign::size_of(int g) const {
  for (std::size_t j = 0; j < cohorts.size(); ++j)
    if (cohorts[j] == g) return cohort_n[j];
  fail(ErrorCode::NoTreated, "cohort " + std::to_string(g) + " not present in the design");
}

CohortDesign build_cohort_design(const PanelDataset& panel) {
  CohortDesign d;
  d.n_periods = panel.n_periods();
  std::map<int, int> counts;
  for (int i = 0; i < panel.n_units(); ++i) {
    const int g = panel.cohort(i);
    if (g == kNever)
      ++d.n_never;
    else
      ++counts[g];
  }
  if (counts.empty()) fail(ErrorCode::NoTreated, "panel has no treated units");
  for (const auto& [g, n] : counts) {
    d.cohorts.push_back(g);
    d.cohort_n.push_back(n);
  }
  return d;
}

DeltaSlice delta_slice(const PanelDataset& panel, int g, int t) {
  return delta_slice(panel, g, t, panel.covariate_names());
}

DeltaSlice delta_slice(const PanelDataset& panel, int g, int t, std::span<const std::string> covariates) {
  const int T = panel.n_periods();
  if (g <= 1 || g > T) fail(ErrorCode::EmptyCell, "cohort " + std::to_string(g) + " outside 2.." + std::to_string(T));
  if (t < 1 || t > T) fail(ErrorCode::EmptyCell, "period " + std::to_string(t) + " outside 1.." + std::to_string(T));
  const int b = base_period(g, t);
  if (b < 1) fail(ErrorCode::NoPrePeriods, "cell (" + std::to_string(g) + "," + std::to_string(t) + ") has no base period");
  if (b == t) fail(ErrorCode::BaseEqualsTarget, "base period equals target period");

  std::vector<int> treated_idx, control_idx;
  for (int i = 0; i < panel.n_units(); ++i) {
    if (panel.cohort(i) == g)
      treated_idx.push_back(i);
    else if (panel.cohort(i) == kNever)
      control_idx.push_back(i);
  }
  if (treated_idx.empty())
    fail(ErrorCode::EmptyCell, "no units in cohort " + std::to_string(g));
  if (control_idx.empty())
    fail(ErrorCode::InsufficientControls, "no never-treated controls available");

  DeltaSlice s;
  s.g = g;
  s.t = t;
  s.base = b;
  s.n_treated = static_cast<int>(treated_idx.size());
  s.n_control = static_cast<int>(control_idx.size());
  const int n = s.n_treated + s.n_control;

  std::vector<int> cov_idx;
  cov_idx.reserve(covariates.size());
  for (const std::string& name : covariates) {
    cov_idx.push_back(panel.require_covariate(name));
    s.covariate_names.push_back(name);
  }

  s.unit_index.reserve(static_cast<std::size_t>(n));
  s.treated.reserve(static_cast<std::size_t>(n));
  s.delta_y.resize(n);
  s.covariates.resize(n, static_cast<Eigen::Index>(cov_idx.size()));

  int r = 0;
  auto push_unit = [&](int i, std::uint8_t is_treated) {
    s.unit_index.push_back(i);
    s.treated.push_back(is_treated);
    s.delta_y(r) = panel.outcome(i, t) - panel.outcome(i, b);
    for (std::size_t k = 0; k < cov_idx.size(); ++k)
      s.covariates(r, static_cast<Eigen::Index>(k)) = panel.covariate(i, b, cov_idx[k]);
    ++r;
  };
  for (int i : treated_idx) push_unit(i, 1);
  for (int i : control_idx) push_unit(i, 0);
  return s;
}

PanelDataset subset_panel(const PanelDataset& panel, std::span<const int> units, std::span<const int> periods) {
  const int T = panel.n_periods();
  if (periods.empty()) fail(ErrorCode::ConfigInvalid, "subset needs at least one period");
  for (std::size_t j = 0; j < periods.size(); ++j) {
    if (periods[j] < 1 || periods[j] > T) fail(ErrorCode::ConfigInvalid, "period index out of range");
    if (j > 0 && periods[j] <= periods[j - 1]) fail(ErrorCode::ConfigInvalid, "period indices must be increasing");
  }
  const int newT = static_cast<int>(periods.size());
  const std::size_t n_cov = static_cast<std::size_t>(panel.n_covariates());

  std::vector<std::string> ids;
  std::vector<int> cohorts;
  std::vector<long long> labels(static_cast<std::size_t>(newT));
  for (int t = 0; t < newT; ++t) labels[static_cast<std::size_t>(t)] = panel.period_label(periods[static_cast<std::size_t>(t)]);

  std::vector<double> outcomes;
  std::vector<double> covs;
  outcomes.reserve(units.size() * static_cast<std::size_t>(newT));
  covs.reserve(units.size() * static_cast<std::size_t>(newT) * n_cov);

  for (int i : units) {
    if (i < 0 || i >= panel.n_units()) fail(ErrorCode::ConfigInvalid, "unit index out of range");
    const int g = panel.cohort(i);
    int new_g = kNever;
    if (g != kNever) {
      for (int t = 0; t < newT; ++t) {
        if (periods[static_cast<std::size_t>(t)] >= g) {
          new_g = t + 1;
          break;
        }
      }
      if (new_g == 1)
        fail(ErrorCode::CohortAtFirstPeriod,
             "unit '" + panel.unit_id(i) + "' is treated at the first kept period");
    }
    ids.push_back(panel.unit_id(i));
    cohorts.push_back(new_g);
    for (int t = 0; t < newT; ++t) {
      const int tp = periods[static_cast<std::size_t>(t)];
      outcomes.push_back(panel.outcome(i, tp));
      for (std::size_t k = 0; k < n_cov; ++k) covs.push_back(panel.covariate(i, tp, static_cast<int>(k)));
    }
  }

  return PanelDataset::make(std::move(ids), std::move(cohorts), newT, std::move(labels), std::move(outcomes),
                            std::move(covs), panel.covariate_names());
}

PanelDataset resample_units(const PanelDataset& panel, std::span<const int> units) {
  std::vector<int> all_periods(static_cast<std::size_t>(panel.n_periods()));
  for (int t = 0; t < panel.n_periods(); ++t) all_periods[static_cast<std::size_t>(t)] = t + 1;
  return subset_panel(panel, units, all_periods);
}

}  // namespace stagdid
