#include "stagdid/csdid.hpp"

#include <algorithm>
#include <cmath>

#include "stagdid/numkit.hpp"
#include "stagdid/stats.hpp"

namespace stagdid {

namespace {

constexpr double kOverlapCeiling = 1.0 - 1e-6;

// Intercept plus the slice covariates, the design both nuisance models share.
DesignMatrix slice_design(const DeltaSlice& slice) {
  const Eigen::Index n = slice.delta_y.size();
  Eigen::MatrixXd values(n, slice.covariates.cols() + 1);
  values.col(0).setOnes();
  values.rightCols(slice.covariates.cols()) = slice.covariates;
  std::vector<std::string> names;
  names.emplace_back("(intercept)");
  for (const auto& name : slice.covariate_names) names.push_back(name);
  return make_design(std::move(values), std::move(names));
}

void finalize(GtattCell& cell, const DeltaSlice& slice) {
  cell.g = slice.g;
  cell.t = slice.t;
  cell.e = slice.t - slice.g;
  cell.n_treated = slice.n_treated;
  cell.n_control = slice.n_control;
  cell.unit_index = slice.unit_index;

  const double n = static_cast<double>(cell.influence.size());
  cell.estimate = mean(cell.influence);
  cell.se = sample_sd(cell.influence) / std::sqrt(n);
  cell.ci_lo = cell.estimate - kZ95 * cell.se;
  cell.ci_hi = cell.estimate + kZ95 * cell.se;
  cell.p_value = two_sided_p(cell.estimate, cell.se);
}

// Hajek weights over control rows: odds normalized to sum to one. Controls
// with fitted propensity at or above the ceiling make the odds explode and
// are reported as an overlap violation.
Eigen::VectorXd hajek_control_weights(const DeltaSlice& slice, const PscoreModel& pscore) {
  const Eigen::Index n = slice.delta_y.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (slice.treated[static_cast<std::size_t>(i)]) continue;
    const double p = pscore.fitted(i);
    if (p >= kOverlapCeiling)
      fail(ErrorCode::OverlapViolation,
           "control unit with fitted propensity " + std::to_string(p) + " in cell (" + std::to_string(slice.g) +
               "," + std::to_string(slice.t) + ")");
    w(i) = p / (1.0 - p);
    total += w(i);
  }
  if (!(total > 0.0)) fail(ErrorCode::OverlapViolation, "control odds sum to zero");
  return w / total;
}

void require_counts(const DeltaSlice& slice) {
  if (slice.n_treated < 1) fail(ErrorCode::EmptyCell, "cell has no treated units");
  if (slice.n_control < 1) fail(ErrorCode::InsufficientControls, "cell has no control units");
}

}  // namespace

const char* to_string(Flavor flavor) noexcept {
  switch (flavor) {
    case Flavor::OR: return "OR";
    case Flavor::IPW: return "IPW";
    case Flavor::DR: return "DR";
  }
  return "DR";
}

Flavor flavor_from_string(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "OR") return Flavor::OR;
  if (up == "IPW") return Flavor::IPW;
  if (up == "DR") return Flavor::DR;
  fail(ErrorCode::ConfigInvalid, "unknown estimator flavor '" + std::string(s) + "'");
}

Eigen::VectorXd OutcomeChangeModel::predict(const Eigen::MatrixXd& slice_covariates) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(slice_covariates.rows());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const int col = kept[j];
    if (col == 0)
      out.array() += coef(static_cast<Eigen::Index>(j));
    else
      out += coef(static_cast<Eigen::Index>(j)) * slice_covariates.col(col - 1);
  }
  return out;
}

NuisanceFit fit_outcome_change(const DeltaSlice& slice) {
  require_counts(slice);
  DesignMatrix full = slice_design(slice);

  Eigen::MatrixXd control_values(slice.n_control, full.values.cols());
  Eigen::VectorXd control_y(slice.n_control);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < slice.delta_y.size(); ++i) {
    if (slice.treated[static_cast<std::size_t>(i)]) continue;
    control_values.row(r) = full.values.row(i);
    control_y(r) = slice.delta_y(i);
    ++r;
  }
  if (slice.n_control < static_cast<int>(full.values.cols()))
    fail(ErrorCode::InsufficientControls, "cell (" + std::to_string(slice.g) + "," + std::to_string(slice.t) +
                                              ") has fewer controls than outcome-model parameters");

  const FitResult fit = ols_fit(make_design(std::move(control_values), full.names), control_y);

  NuisanceFit nf;
  nf.g = slice.g;
  nf.t = slice.t;
  nf.treated = slice.treated;
  OutcomeChangeModel m;
  m.names = fit.names;
  m.kept = fit.kept;
  m.coef = fit.coef;
  nf.outcome = std::move(m);
  return nf;
}

NuisanceFit fit_pscore(const DeltaSlice& slice) {
  require_counts(slice);
  DesignMatrix design = slice_design(slice);
  Eigen::VectorXd y(slice.delta_y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = slice.treated[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

  const FitResult fit = logit_fit(design, y);

  NuisanceFit nf;
  nf.g = slice.g;
  nf.t = slice.t;
  nf.treated = slice.treated;
  PscoreModel m;
  m.names = fit.names;
  m.kept = fit.kept;
  m.coef = fit.coef;
  m.fitted = fit.fitted;
  m.converged = fit.converged;
  nf.pscore = std::move(m);
  return nf;
}

NuisanceFit fit_nuisances(const DeltaSlice& slice, Flavor flavor) {
  if (flavor == Flavor::OR) return fit_outcome_change(slice);
  if (flavor == Flavor::IPW) return fit_pscore(slice);
  NuisanceFit nf = fit_outcome_change(slice);
  NuisanceFit ps = fit_pscore(slice);
  nf.pscore = std::move(ps.pscore);
  return nf;
}

bool GtattCell::failed() const { return std::isnan(estimate); }

bool GtattCell::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

GtattCell att_or(const DeltaSlice& slice, const NuisanceFit& nuisance) {
  require_counts(slice);
  if (!nuisance.outcome) fail(ErrorCode::ConfigInvalid, "OR estimator needs an outcome-change model");
  const Eigen::VectorXd mhat = nuisance.outcome->predict(slice.covariates);

  const Eigen::Index n = slice.delta_y.size();
  const double ng = slice.n_treated;
  const double nc = slice.n_control;

  GtattCell cell;
  cell.flavor = Flavor::OR;
  cell.influence.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double resid = slice.delta_y(i) - mhat(i);
    cell.influence[static_cast<std::size_t>(i)] = slice.treated[static_cast<std::size_t>(i)]
                                                      ? static_cast<double>(n) / ng * resid
                                                      : -static_cast<double>(n) / nc * resid;
  }
  finalize(cell, slice);
  return cell;
}

GtattCell att_ipw(const DeltaSlice& slice, const NuisanceFit& nuisance) {
  require_counts(slice);
  if (!nuisance.pscore) fail(ErrorCode::ConfigInvalid, "IPW estimator needs a propensity model");
  const Eigen::VectorXd w = hajek_control_weights(slice, *nuisance.pscore);

  const Eigen::Index n = slice.delta_y.size();
  const double ng = slice.n_treated;

  GtattCell cell;
  cell.flavor = Flavor::IPW;
  cell.influence.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dy = slice.delta_y(i);
    cell.influence[static_cast<std::size_t>(i)] = slice.treated[static_cast<std::size_t>(i)]
                                                      ? static_cast<double>(n) / ng * dy
                                                      : -static_cast<double>(n) * w(i) * dy;
  }
  finalize(cell, slice);
  return cell;
}

GtattCell att_dr(const DeltaSlice& slice, const NuisanceFit& nuisance) {
  require_counts(slice);
  if (!nuisance.outcome || !nuisance.pscore)
    fail(ErrorCode::ConfigInvalid, "DR estimator needs both nuisance models");
  const Eigen::VectorXd mhat = nuisance.outcome->predict(slice.covariates);
  const Eigen::VectorXd w = hajek_control_weights(slice, *nuisance.pscore);

  const Eigen::Index n = slice.delta_y.size();
  const double ng = slice.n_treated;

  GtattCell cell;
  cell.flavor = Flavor::DR;
  cell.influence.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double resid = slice.delta_y(i) - mhat(i);
    cell.influence[static_cast<std::size_t>(i)] = slice.treated[static_cast<std::size_t>(i)]
                                                      ? static_cast<double>(n) / ng * resid
                                                      : -static_cast<double>(n) * w(i) * resid;
  }
  finalize(cell, slice);
  return cell;
}

GtattCell att_cell(const DeltaSlice& slice, const NuisanceFit& nuisance, Flavor flavor) {
  switch (flavor) {
    case Flavor::OR: return att_or(slice, nuisance);
    case Flavor::IPW: return att_ipw(slice, nuisance);
    case Flavor::DR: return att_dr(slice, nuisance);
  }
  fail(ErrorCode::ConfigInvalid, "unknown flavor");
}

const GtattCell* GtattTable::find(int g, int t) const {
  for (const auto& c : cells)
    if (c.g == g && c.t == t) return &c;
  return nullptr;
}

const GtattCell& GtattTable::at(int g, int t) const {
  const GtattCell* c = find(g, t);
  if (c == nullptr)
    fail(ErrorCode::MissingCell, "cell (" + std::to_string(g) + "," + std::to_string(t) + ") is not in the table");
  return *c;
}

GtattTable gtatt_table(const PanelDataset& panel, const CohortDesign& design,
                       std::span<const std::string> covariates, Flavor flavor) {
  GtattTable table;
  table.n_periods = panel.n_periods();
  table.flavor = flavor;
  table.covariates.assign(covariates.begin(), covariates.end());

  for (int g : design.cohorts) {
    for (int t = 2; t <= panel.n_periods(); ++t) {
      const DeltaSlice slice = delta_slice(panel, g, t, covariates);
      GtattCell cell;
      NuisanceFit nuisance;
      try {
        nuisance = fit_nuisances(slice, flavor);
        cell = att_cell(slice, nuisance, flavor);
        // A propensity fit that stalled short of convergence is not trusted;
        // downgrade the cell to OR just as if it had separated.
        if (nuisance.pscore && !nuisance.pscore->converged) fail(ErrorCode::SeparationDetected, "IRLS stalled");
      } catch (const Error& err) {
        const bool pscore_trouble =
            err.code() == ErrorCode::SeparationDetected && flavor != Flavor::OR;
        if (pscore_trouble) {
          try {
            nuisance = fit_outcome_change(slice);
            cell = att_or(slice, nuisance);
            cell.flags.push_back("fallback_or");
            cell.flags.push_back(std::string("pscore:") + to_string(err.code()));
          } catch (const Error& inner) {
            cell = GtattCell{};
            cell.estimate = cell.se = cell.ci_lo = cell.ci_hi = cell.p_value = kNaN;
            cell.flavor = flavor;
            cell.flags.push_back(std::string("error:") + to_string(inner.code()));
          }
        } else {
          cell = GtattCell{};
          cell.estimate = cell.se = cell.ci_lo = cell.ci_hi = cell.p_value = kNaN;
          cell.flavor = flavor;
          cell.flags.push_back(std::string("error:") + to_string(err.code()));
        }
        cell.g = slice.g;
        cell.t = slice.t;
        cell.e = slice.t - slice.g;
        cell.n_treated = slice.n_treated;
        cell.n_control = slice.n_control;
      }
      table.cells.push_back(std::move(cell));
      table.nuisances.push_back(std::move(nuisance));
    }
  }
  return table;
}

std::vector<OverlapRow> overlap_report(const GtattTable& table, double epsilon) {
  std::vector<OverlapRow> rows;
  for (std::size_t c = 0; c < table.cells.size(); ++c) {
    const NuisanceFit& nf = table.nuisances[c];
    if (!nf.pscore) continue;
    OverlapRow row;
    row.g = table.cells[c].g;
    row.t = table.cells[c].t;
    int n_near = 0;
    for (Eigen::Index i = 0; i < nf.pscore->fitted.size(); ++i) {
      if (nf.treated[static_cast<std::size_t>(i)]) continue;
      ++row.n_control;
      const double p = nf.pscore->fitted(i);
      row.max_control_pscore = std::max(row.max_control_pscore, p);
      if (p > 1.0 - epsilon) ++n_near;
    }
    if (row.n_control > 0) row.share_near_one = static_cast<double>(n_near) / row.n_control;
    row.flagged = n_near > 0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stagdid
