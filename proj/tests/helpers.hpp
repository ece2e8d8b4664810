#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stagdid/panel.hpp"

namespace testutil {

// True when fn throws a stagdid::Error carrying exactly the expected code.
inline bool throws_code(stagdid::ErrorCode expected, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const stagdid::Error& e) {
    return e.code() == expected;
  }
  return false;
}

// Hand-built balanced panel: cohorts[i] is the first treated period label or
// 0 for never treated; y and (optionally) x give cell values by unit index
// and period label.
inline std::vector<stagdid::RawRow> grid_rows(const std::vector<int>& cohorts, int n_periods,
                                              const std::function<double(int, int)>& y, int n_cov = 0,
                                              const std::function<double(int, int, int)>& x = {}) {
  std::vector<stagdid::RawRow> rows;
  const int n = static_cast<int>(cohorts.size());
  int width = 1;
  for (int v = n; v >= 10; v /= 10) ++width;
  for (int i = 0; i < n; ++i) {
    std::string num = std::to_string(i + 1);
    const std::string id = "u" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    for (int t = 1; t <= n_periods; ++t) {
      stagdid::RawRow r;
      r.unit = id;
      r.period = t;
      r.outcome = y(i, t);
      if (cohorts[static_cast<std::size_t>(i)] != 0) r.cohort = cohorts[static_cast<std::size_t>(i)];
      for (int k = 0; k < n_cov; ++k) r.covariates.push_back(x(i, t, k));
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

inline stagdid::PanelDataset build_panel(const std::vector<int>& cohorts, int n_periods,
                                         const std::function<double(int, int)>& y, int n_cov = 0,
                                         const std::function<double(int, int, int)>& x = {},
                                         const std::vector<std::string>& cov_names = {}) {
  std::vector<std::string> names = cov_names;
  for (int k = static_cast<int>(names.size()); k < n_cov; ++k) names.push_back("x" + std::to_string(k + 1));
  return stagdid::validate_panel(grid_rows(cohorts, n_periods, y, n_cov, x), names);
}

}  // namespace testutil
