#include "stagdid/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace stagdid {

namespace {

constexpr double kCollinearTol = 1e-10;
constexpr double kScoreTol = 1e-8;
constexpr double kStepTol = 1e-10;
constexpr double kRidge = 1e-8;
constexpr int kMaxIrls = 100;
constexpr double kCoefBlowup = 1e3;
// Pinning within 1e-6 means |eta| > 13.8 for every member of a class, which
// only happens when that class is (quasi-)separated. A tighter tolerance
// would miss fits that stop on the score criterion before probabilities
// reach the last few digits.
constexpr double kPinnedTol = 1e-6;

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) fail(ErrorCode::NonfiniteInput, std::string(what) + " contains non-finite values");
}

// Weighted copy of the design: rows scaled by sqrt(w). The QR factor of this
// matrix is the one every covariance formula below is built from.
Eigen::MatrixXd weighted_values(const DesignMatrix& design) {
  if (design.weights.size() == 0) return design.values;
  return design.weights.array().sqrt().matrix().asDiagonal() * design.values;
}

Eigen::VectorXd weighted_vector(const DesignMatrix& design, const Eigen::VectorXd& v) {
  if (design.weights.size() == 0) return v;
  return design.weights.array().sqrt() * v.array();
}

// Modified Gram-Schmidt sweep marking which columns survive. A column is kept
// when its residual against the previously kept columns exceeds 1e-10 of its
// own norm; the two-pass projection keeps the basis orthonormal enough for
// that test to be reliable.
std::vector<int> surviving_columns(const Eigen::MatrixXd& a, const std::vector<std::string>& names,
                                   std::vector<DroppedColumn>& dropped) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = a.cols();
  Eigen::MatrixXd basis(n, p);
  std::vector<int> kept;
  Eigen::Index q = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = a.col(j);
    const double own = v.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < q; ++k) v -= basis.col(k).dot(v) * basis.col(k);
    const double left = v.norm();
    if (left <= kCollinearTol * own || own == 0.0) {
      dropped.push_back({names[static_cast<std::size_t>(j)], static_cast<int>(j)});
      continue;
    }
    basis.col(q) = v / left;
    kept.push_back(static_cast<int>(j));
    ++q;
  }
  return kept;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

double stable_expit(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int DesignMatrix::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  return -1;
}

DesignMatrix make_design(Eigen::MatrixXd values, std::vector<std::string> names) {
  if (static_cast<std::size_t>(values.cols()) != names.size())
    fail(ErrorCode::ConfigInvalid, "design has " + std::to_string(values.cols()) + " columns but " +
                                       std::to_string(names.size()) + " names");
  DesignMatrix d;
  d.values = std::move(values);
  d.names = std::move(names);
  return d;
}

int FitResult::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  return -1;
}

double FitResult::coef_of(std::string_view name) const {
  const int j = column(name);
  if (j < 0) fail(ErrorCode::UnknownColumn, "coefficient '" + std::string(name) + "' not in the fit");
  return coef(j);
}

double FitResult::se_of(std::string_view name) const {
  const int j = column(name);
  if (j < 0) fail(ErrorCode::UnknownColumn, "coefficient '" + std::string(name) + "' not in the fit");
  return std::sqrt(vcov(j, j));
}

FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.values.rows();
  if (n == 0) fail(ErrorCode::ConfigInvalid, "empty design");
  if (y.size() != n) fail(ErrorCode::ConfigInvalid, "response length does not match the design");
  if (design.weights.size() != 0) {
    if (design.weights.size() != n) fail(ErrorCode::ConfigInvalid, "weight length does not match the design");
    if (!design.weights.allFinite() || (design.weights.array() < 0.0).any())
      fail(ErrorCode::NonfiniteInput, "weights must be finite and non-negative");
  }
  check_finite(design.values, "design");
  check_finite(y, "response");

  const Eigen::MatrixXd a = weighted_values(design);
  const Eigen::VectorXd b = weighted_vector(design, y);

  FitResult fit;
  fit.absorbed_df = design.absorbed_df;
  fit.kept = surviving_columns(a, design.names, fit.dropped);
  if (fit.kept.empty()) fail(ErrorCode::AllColumnsDropped, "every design column is collinear or zero");
  for (int j : fit.kept) fit.names.push_back(design.names[static_cast<std::size_t>(j)]);

  const Eigen::MatrixXd ak = take_columns(a, fit.kept);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(ak);
  fit.coef = qr.solve(b);

  const Eigen::MatrixXd xk = take_columns(design.values, fit.kept);
  fit.fitted = xk * fit.coef;
  fit.residuals = y - fit.fitted;

  // Classical covariance from the R factor: (A'A)^{-1} = R^{-1} R^{-T}.
  const Eigen::Index p = static_cast<Eigen::Index>(fit.kept.size());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv = rinv * rinv.transpose();

  const Eigen::VectorXd wr = weighted_vector(design, fit.residuals);
  const double dof = std::max<double>(1.0, static_cast<double>(n) - static_cast<double>(fit.df_used()));
  const double sigma2 = wr.squaredNorm() / dof;
  fit.vcov = sigma2 * xtx_inv;
  return fit;
}

Eigen::MatrixXd cluster_robust_vcov(const FitResult& fit, const DesignMatrix& design) {
  const Eigen::Index n = design.values.rows();
  if (design.cluster.size() != static_cast<std::size_t>(n))
    fail(ErrorCode::ConfigInvalid, "design has no cluster ids");
  if (fit.residuals.size() != n) fail(ErrorCode::ConfigInvalid, "fit does not match the design");

  std::unordered_map<int, int> cluster_slot;
  cluster_slot.reserve(design.cluster.size());
  for (int c : design.cluster) cluster_slot.emplace(c, static_cast<int>(cluster_slot.size()));
  const int n_clusters = static_cast<int>(cluster_slot.size());
  if (n_clusters < 2) fail(ErrorCode::SingleCluster, "cluster-robust covariance needs at least two clusters");

  const Eigen::MatrixXd ak = take_columns(weighted_values(design), fit.kept);
  const Eigen::Index p = ak.cols();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(ak);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd bread = rinv * rinv.transpose();

  // Cluster score sums s_c = sum_i w_i x_i u_i over the unweighted design.
  const Eigen::MatrixXd xk = take_columns(design.values, fit.kept);
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_clusters, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = design.weights.size() == 0 ? 1.0 : design.weights(i);
    scores.row(cluster_slot.at(design.cluster[static_cast<std::size_t>(i)])) +=
        (w * fit.residuals(i)) * xk.row(i);
  }
  const Eigen::MatrixXd meat = scores.transpose() * scores;

  const double c = static_cast<double>(n_clusters);
  const double nn = static_cast<double>(n);
  const double dof = std::max<double>(1.0, nn - static_cast<double>(fit.df_used()));
  const double factor = (c / (c - 1.0)) * ((nn - 1.0) / dof);

  Eigen::MatrixXd v = factor * bread * meat * bread;
  return 0.5 * (v + v.transpose());
}

FitResult logit_fit(const DesignMatrix& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.values.rows();
  if (n == 0) fail(ErrorCode::ConfigInvalid, "empty design");
  if (y.size() != n) fail(ErrorCode::ConfigInvalid, "response length does not match the design");
  check_finite(design.values, "design");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) fail(ErrorCode::NonfiniteInput, "logit response must be exactly 0 or 1");
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(n))
    fail(ErrorCode::NoVariation, "logit response is constant");
  if (n < design.values.cols()) fail(ErrorCode::ConfigInvalid, "more columns than observations");

  Eigen::VectorXd w_prior = design.weights.size() == 0 ? Eigen::VectorXd::Ones(n) : design.weights;

  FitResult fit;
  fit.absorbed_df = design.absorbed_df;
  fit.kept = surviving_columns(weighted_values(design), design.names, fit.dropped);
  if (fit.kept.empty()) fail(ErrorCode::AllColumnsDropped, "every design column is collinear or zero");
  for (int j : fit.kept) fit.names.push_back(design.names[static_cast<std::size_t>(j)]);

  const Eigen::MatrixXd x = take_columns(design.values, fit.kept);
  const Eigen::Index p = x.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd prob(n);
  Eigen::MatrixXd hessian(p, p);
  fit.converged = false;

  for (int iter = 1; iter <= kMaxIrls; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = stable_expit(eta(i));

    const Eigen::VectorXd score = x.transpose() * (w_prior.array() * (y - prob).array()).matrix();
    const double score_max = score.cwiseAbs().maxCoeff();
    if (score_max < kScoreTol) {
      fit.converged = true;
      break;
    }

    const Eigen::VectorXd irls_w = w_prior.array() * prob.array() * (1.0 - prob.array());
    hessian = x.transpose() * irls_w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      step = ldlt.solve(score);
      ok = step.allFinite();
    }
    if (!ok) {
      // Weights collapsed somewhere; a tiny ridge keeps the step defined.
      fit.ridged = true;
      hessian += kRidge * Eigen::MatrixXd::Identity(p, p);
      step = hessian.ldlt().solve(score);
      if (!step.allFinite()) fail(ErrorCode::SeparationDetected, "IRLS step is not finite");
    }
    beta += step;

    if (beta.cwiseAbs().maxCoeff() > kCoefBlowup)
      fail(ErrorCode::SeparationDetected, "coefficients diverged during IRLS");
    if (step.norm() <= kStepTol * std::max(1.0, beta.norm())) {
      const Eigen::VectorXd eta2 = x * beta;
      for (Eigen::Index i = 0; i < n; ++i) prob(i) = stable_expit(eta2(i));
      fit.converged = true;
      break;
    }
  }

  // Quasi-separation: a whole class pinned to its boundary.
  bool ones_pinned = true, zeros_pinned = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) == 1.0 && prob(i) < 1.0 - kPinnedTol) ones_pinned = false;
    if (y(i) == 0.0 && prob(i) > kPinnedTol) zeros_pinned = false;
  }
  if (ones_pinned || zeros_pinned)
    fail(ErrorCode::SeparationDetected, "fitted probabilities are pinned to the boundary for one class");

  fit.coef = beta;
  fit.fitted = prob;
  fit.residuals = y - prob;

  const Eigen::VectorXd irls_w = w_prior.array() * prob.array() * (1.0 - prob.array());
  hessian = x.transpose() * irls_w.asDiagonal() * x;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
  if (ldlt.info() != Eigen::Success) {
    fit.ridged = true;
    ldlt.compute(hessian + kRidge * Eigen::MatrixXd::Identity(p, p));
  }
  fit.vcov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  return fit;
}

DesignMatrix within_transform(const PanelDataset& panel, DesignMatrix stacked) {
  const int n_units = panel.n_units();
  const int t_len = panel.n_periods();
  const Eigen::Index rows = static_cast<Eigen::Index>(n_units) * t_len;
  if (stacked.values.rows() != rows)
    fail(ErrorCode::ConfigInvalid, "stacked design must have n_units * n_periods rows");

  for (Eigen::Index c = 0; c < stacked.values.cols(); ++c) {
    auto col = stacked.values.col(c);
    const double input_scale = col.cwiseAbs().maxCoeff();
    Eigen::VectorXd unit_mean = Eigen::VectorXd::Zero(n_units);
    Eigen::VectorXd period_mean = Eigen::VectorXd::Zero(t_len);
    double grand = 0.0;
    for (int i = 0; i < n_units; ++i)
      for (int t = 0; t < t_len; ++t) {
        const double v = col(static_cast<Eigen::Index>(i) * t_len + t);
        unit_mean(i) += v;
        period_mean(t) += v;
        grand += v;
      }
    unit_mean /= static_cast<double>(t_len);
    period_mean /= static_cast<double>(n_units);
    grand /= static_cast<double>(rows);
    for (int i = 0; i < n_units; ++i)
      for (int t = 0; t < t_len; ++t)
        col(static_cast<Eigen::Index>(i) * t_len + t) += grand - unit_mean(i) - period_mean(t);
    // Columns the fixed effects absorb exactly (constant, unit-only, or
    // period-only variation) leave rounding residue of order eps * scale.
    // Snap those to zero so they are dropped instead of fit to noise.
    if (col.cwiseAbs().maxCoeff() <= 1e-12 * input_scale) col.setZero();
  }

  stacked.cluster.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < n_units; ++i)
    for (int t = 0; t < t_len; ++t) stacked.cluster[static_cast<std::size_t>(i) * t_len + static_cast<std::size_t>(t)] = i;
  stacked.absorbed_df += n_units + t_len - 1;
  return stacked;
}

DesignMatrix within_transform(const PanelDataset& panel, std::span<const std::string> columns) {
  const Eigen::Index rows = static_cast<Eigen::Index>(panel.n_rows());
  Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(columns.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const int c = panel.require_covariate(columns[k]);
    names.push_back(columns[k]);
    for (int i = 0; i < panel.n_units(); ++i)
      for (int t = 1; t <= panel.n_periods(); ++t)
        values(static_cast<Eigen::Index>(panel.row(i, t)), static_cast<Eigen::Index>(k)) = panel.covariate(i, t, c);
  }
  return within_transform(panel, make_design(std::move(values), std::move(names)));
}

Eigen::VectorXd within_transform_vector(const PanelDataset& panel, const Eigen::VectorXd& values) {
  DesignMatrix d = make_design(values, {"v"});
  return within_transform(panel, std::move(d)).values.col(0);
}

Eigen::VectorXd stacked_outcomes(const PanelDataset& panel) {
  Eigen::VectorXd y(panel.n_rows());
  for (int i = 0; i < panel.n_units(); ++i)
    for (int t = 1; t <= panel.n_periods(); ++t) y(static_cast<Eigen::Index>(panel.row(i, t))) = panel.outcome(i, t);
  return y;
}

}  // namespace stagdid
