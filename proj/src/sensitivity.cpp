#include "stagdid/sensitivity.hpp"

#include <cmath>
#include <limits>

#include "stagdid/aggregate.hpp"
#include "stagdid/numkit.hpp"
#include "stagdid/parallel.hpp"
#include "stagdid/rng.hpp"
#include "stagdid/stats.hpp"

namespace stagdid {

namespace {

struct TrendFits {
  std::vector<double> beta_k;
  std::vector<double> beta_prime_k;
  double beta = 0.0;
  double beta_prime = 0.0;
  double theta = 0.0;
  // Filled only when `with_vcov` is requested.
  double beta_var = 0.0;
  double beta_prime_var = 0.0;
  double theta_var = 0.0;
};

std::string post_name(int k) { return "post_" + std::to_string(k); }

// Fits the saturated model and the trend-augmented model on one panel.
// Shared design construction keeps the two fits aligned column for column.
TrendFits fit_both_models(const PanelDataset& panel, std::span<const std::string> covariates, int t0,
                          bool with_vcov) {
  const int t_len = panel.n_periods();
  const int n_post = t_len - t0 + 1;
  const Eigen::Index rows = static_cast<Eigen::Index>(panel.n_rows());

  // Columns: post-period dummies, treated trend, covariates. The base model
  // is the same design with the trend column zeroed, which lets both models
  // share one within transform of the panel outcomes.
  const Eigen::Index p = static_cast<Eigen::Index>(n_post) + 1 + static_cast<Eigen::Index>(covariates.size());
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(rows, p);
  std::vector<std::string> names;
  for (int k = t0; k <= t_len; ++k) names.push_back(post_name(k));
  names.emplace_back("gtrend");
  for (const auto& c : covariates) names.push_back(c);

  for (int i = 0; i < panel.n_units(); ++i) {
    const bool treated = panel.ever_treated(i);
    for (int t = 1; t <= t_len; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(panel.row(i, t));
      if (treated && t >= t0) values(r, t - t0) = 1.0;
      if (treated) values(r, n_post) = static_cast<double>(t);
    }
  }
  for (std::size_t k = 0; k < covariates.size(); ++k) {
    const int c = panel.require_covariate(covariates[k]);
    for (int i = 0; i < panel.n_units(); ++i)
      for (int t = 1; t <= t_len; ++t)
        values(static_cast<Eigen::Index>(panel.row(i, t)), static_cast<Eigen::Index>(n_post) + 1 + static_cast<Eigen::Index>(k)) =
            panel.covariate(i, t, c);
  }

  const Eigen::VectorXd y = within_transform_vector(panel, stacked_outcomes(panel));

  Eigen::MatrixXd base_values = values;
  base_values.col(n_post).setZero();
  DesignMatrix base = within_transform(panel, make_design(std::move(base_values), names));
  DesignMatrix augmented = within_transform(panel, make_design(std::move(values), names));

  const FitResult base_fit = ols_fit(base, y);
  const FitResult aug_fit = ols_fit(augmented, y);
  if (aug_fit.column("gtrend") < 0)
    fail(ErrorCode::TooFewPrePeriods, "treated trend column is collinear; more pre-periods are needed");

  TrendFits out;
  out.beta_k.resize(static_cast<std::size_t>(n_post));
  out.beta_prime_k.resize(static_cast<std::size_t>(n_post));
  for (int k = t0; k <= t_len; ++k) {
    out.beta_k[static_cast<std::size_t>(k - t0)] = base_fit.coef_of(post_name(k));
    out.beta_prime_k[static_cast<std::size_t>(k - t0)] = aug_fit.coef_of(post_name(k));
  }
  out.beta = mean(out.beta_k);
  out.beta_prime = mean(out.beta_prime_k);
  out.theta = aug_fit.coef_of("gtrend");

  if (with_vcov) {
    const Eigen::MatrixXd base_v = cluster_robust_vcov(base_fit, base);
    const Eigen::MatrixXd aug_v = cluster_robust_vcov(aug_fit, augmented);
    auto mean_var = [n_post](const FitResult& fit, const Eigen::MatrixXd& v, int t0_, int t_len_) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(v.rows());
      for (int k = t0_; k <= t_len_; ++k) a(fit.column(post_name(k))) = 1.0 / static_cast<double>(n_post);
      return static_cast<double>(a.transpose() * v * a);
    };
    out.beta_var = mean_var(base_fit, base_v, t0, t_len);
    out.beta_prime_var = mean_var(aug_fit, aug_v, t0, t_len);
    out.theta_var = aug_v(aug_fit.column("gtrend"), aug_fit.column("gtrend"));
  }
  return out;
}

}  // namespace

TrendComparison bh_compare(const PanelDataset& panel, std::span<const std::string> covariates, int t0,
                           const BhOptions& options) {
  const CohortDesign design = build_cohort_design(panel);
  if (design.cohorts.size() != 1)
    fail(ErrorCode::ConfigInvalid, "model comparison expects exactly one treated cohort, got " +
                                       std::to_string(design.cohorts.size()));
  if (design.cohorts[0] != t0)
    fail(ErrorCode::ConfigInvalid, "cohort starts at period " + std::to_string(design.cohorts[0]) +
                                       " but t0 = " + std::to_string(t0) + " was requested");
  const int n_pre = t0 - 1;
  if (n_pre < 2)
    fail(ErrorCode::TooFewPrePeriods,
         "trend identification needs at least two pre-periods, got " + std::to_string(n_pre));

  const TrendFits fits = fit_both_models(panel, covariates, t0, true);

  TrendComparison out;
  out.t0 = t0;
  out.n_pre = n_pre;
  for (int k = t0; k <= panel.n_periods(); ++k) out.post_periods.push_back(k);
  out.beta_k = fits.beta_k;
  out.beta_prime_k = fits.beta_prime_k;
  out.beta = fits.beta;
  out.beta_prime = fits.beta_prime;
  out.theta = fits.theta;
  out.beta_se = std::sqrt(fits.beta_var);
  out.beta_prime_se = std::sqrt(fits.beta_prime_var);
  out.theta_se = std::sqrt(fits.theta_var);
  out.beta_lo = out.beta - kZ95 * out.beta_se;
  out.beta_hi = out.beta + kZ95 * out.beta_se;
  out.beta_prime_lo = out.beta_prime - kZ95 * out.beta_prime_se;
  out.beta_prime_hi = out.beta_prime + kZ95 * out.beta_prime_se;
  out.theta_lo = out.theta - kZ95 * out.theta_se;
  out.theta_hi = out.theta + kZ95 * out.theta_se;
  out.diff = out.beta - out.beta_prime;

  // The two estimates share every observation, so their difference needs the
  // joint distribution; a stratified unit bootstrap refitting both models per
  // replicate supplies it.
  const int b = options.bootstrap_reps;
  if (b < 2) fail(ErrorCode::ConfigInvalid, "model comparison bootstrap needs at least 2 replicates");
  std::vector<double> draws(static_cast<std::size_t>(b), kNaN);
  parallel_for(static_cast<std::size_t>(b), options.threads, [&](std::size_t r) {
    Rng rng(derive_stream(options.seed, static_cast<std::uint64_t>(r) + 1));
    const std::vector<int> idx = stratified_resample(panel, rng);
    const PanelDataset rep = resample_units(panel, idx);
    try {
      const TrendFits rep_fits = fit_both_models(rep, covariates, t0, false);
      draws[r] = rep_fits.beta - rep_fits.beta_prime;
    } catch (const Error&) {
      // leave NaN
    }
  });

  const std::vector<double> valid = drop_nan(draws);
  out.n_boot = b;
  out.n_boot_failed = b - static_cast<int>(valid.size());
  if (valid.size() < 2)
    fail(ErrorCode::ReplicateDegenerate, "model comparison bootstrap produced fewer than two usable replicates");
  out.diff_se = sample_sd(valid);
  out.diff_lo = out.diff - kZ95 * out.diff_se;
  out.diff_hi = out.diff + kZ95 * out.diff_se;
  out.diff_p = two_sided_p(out.diff, out.diff_se);
  return out;
}

PlaceboSummary summarize_placebos(std::span<const GtattCell> pre_cells) {
  PlaceboSummary s;
  double se2 = 0.0;
  for (const GtattCell& c : pre_cells) {
    if (!c.is_pre())
      fail(ErrorCode::ConfigInvalid, "cell (" + std::to_string(c.g) + "," + std::to_string(c.t) + ") is not a pre cell");
    if (c.failed()) continue;
    ++s.n_placebo;
    s.delta_max = std::max(s.delta_max, std::abs(c.estimate));
    s.slope += c.estimate;
    se2 += c.se * c.se;
  }
  if (s.n_placebo == 0)
    fail(ErrorCode::NoPrePeriods, "no usable pre-period placebo cells; the trend budget has no anchor");
  s.slope /= static_cast<double>(s.n_placebo);
  s.slope_se = std::sqrt(se2) / static_cast<double>(s.n_placebo);
  return s;
}

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.empty()) fail(ErrorCode::ConfigInvalid, "budget grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) fail(ErrorCode::ConfigInvalid, "budget values must be non-negative");
    if (i > 0 && grid[i] < grid[i - 1]) fail(ErrorCode::ConfigInvalid, "budget grid must be ascending");
  }
}

void check_event(const EventEstimate& event) {
  if (event.e < 0) fail(ErrorCode::ConfigInvalid, "robust intervals apply to post event times only");
  if (!(event.se >= 0.0) || !std::isfinite(event.estimate))
    fail(ErrorCode::NonfiniteInput, "event estimate or SE is not usable");
}

}  // namespace

RobustGrid rr_relative_magnitudes(const EventEstimate& event, const PlaceboSummary& placebos,
                                  std::span<const double> grid) {
  check_event(event);
  check_grid(grid);
  RobustGrid out;
  out.e = event.e;
  out.kind = BudgetKind::RelativeMagnitude;
  out.placebos = placebos;
  const double horizon = static_cast<double>(event.e + 1);
  out.base_lo = event.estimate - kZ95 * event.se;
  out.base_hi = event.estimate + kZ95 * event.se;
  for (double m : grid) {
    const double bound = m * placebos.delta_max * horizon;
    out.budget.push_back(m);
    out.lo.push_back(out.base_lo - bound);
    out.hi.push_back(out.base_hi + bound);
  }
  out.breakdown = breakdown_mbar(event, placebos);
  return out;
}

RobustGrid rr_smoothness(const EventEstimate& event, const PlaceboSummary& placebos,
                         std::span<const double> grid) {
  check_event(event);
  check_grid(grid);
  RobustGrid out;
  out.e = event.e;
  out.kind = BudgetKind::Smoothness;
  out.placebos = placebos;
  const double horizon = static_cast<double>(event.e + 1);
  const double center = event.estimate - placebos.slope * horizon;
  const double se_total = std::sqrt(event.se * event.se + horizon * horizon * placebos.slope_se * placebos.slope_se);
  const double curvature = horizon * (horizon + 1.0) / 2.0;  // (e+1)(e+2)/2
  out.base_lo = center - kZ95 * se_total;
  out.base_hi = center + kZ95 * se_total;
  for (double m : grid) {
    out.budget.push_back(m);
    out.lo.push_back(out.base_lo - m * curvature);
    out.hi.push_back(out.base_hi + m * curvature);
  }
  out.breakdown = breakdown_m(event, placebos);
  return out;
}

double breakdown_mbar(const EventEstimate& event, const PlaceboSummary& placebos) {
  check_event(event);
  const double slack = std::abs(event.estimate) - kZ95 * event.se;
  if (slack <= 0.0) return 0.0;
  const double denom = placebos.delta_max * static_cast<double>(event.e + 1);
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return slack / denom;
}

double breakdown_m(const EventEstimate& event, const PlaceboSummary& placebos) {
  check_event(event);
  const double horizon = static_cast<double>(event.e + 1);
  const double center = event.estimate - placebos.slope * horizon;
  const double se_total = std::sqrt(event.se * event.se + horizon * horizon * placebos.slope_se * placebos.slope_se);
  const double slack = std::abs(center) - kZ95 * se_total;
  if (slack <= 0.0) return 0.0;
  return slack / (horizon * (horizon + 1.0) / 2.0);
}

std::vector<double> budget_grid(double max, int points) {
  if (!(max >= 0.0) || points < 1) fail(ErrorCode::ConfigInvalid, "grid needs max >= 0 and at least one point");
  std::vector<double> g;
  if (points == 1) {
    g.push_back(0.0);
    return g;
  }
  for (int i = 0; i < points; ++i) g.push_back(max * static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

}  // namespace stagdid
