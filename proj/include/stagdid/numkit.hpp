#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

// Named design matrix with optional row weights and cluster ids. `absorbed_df`
// counts parameters removed upstream (e.g. by the within transform) so that
// degrees-of-freedom corrections see the full model size.
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
  std::vector<int> cluster;  // size n, or empty when no clustering applies
  Eigen::VectorXd weights;   // size n, or 0 for unweighted
  int absorbed_df = 0;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }
  int column(std::string_view name) const;
};

DesignMatrix make_design(Eigen::MatrixXd values, std::vector<std::string> names);

struct DroppedColumn {
  std::string name;
  int index = 0;
};

struct FitResult {
  std::vector<std::string> names;  // surviving columns, original order
  std::vector<int> kept;           // their indices in the input design
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;      // classical for OLS, inverse observed information for logit
  Eigen::VectorXd fitted;    // X beta, or probabilities for logit
  Eigen::VectorXd residuals; // y - fitted
  std::vector<DroppedColumn> dropped;
  int absorbed_df = 0;

  // IRLS diagnostics; OLS leaves them at their defaults.
  int iterations = 0;
  bool converged = true;
  bool ridged = false;

  int df_used() const { return static_cast<int>(kept.size()) + absorbed_df; }
  int column(std::string_view name) const;      // index into coef, -1 if dropped/absent
  double coef_of(std::string_view name) const;  // throws when the column did not survive
  double se_of(std::string_view name) const;
};

// Least squares via Householder QR on the (optionally weighted) design.
// Collinear columns are detected by modified Gram-Schmidt against the kept
// columns: a column whose residual norm falls at or below 1e-10 times its own
// norm is dropped, earliest columns win. Never forms X'X for the solve.
FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& y);

// CR1 cluster-robust covariance for an existing OLS fit on the same design.
Eigen::MatrixXd cluster_robust_vcov(const FitResult& fit, const DesignMatrix& design);

// Logistic regression by iteratively reweighted least squares. y must be 0/1.
// Stops when max |score| < 1e-8 or the relative step falls below 1e-10;
// a near-singular weighted Hessian gets a 1e-8 ridge. Perfect separation is
// reported as an error rather than returned as a degenerate fit.
FitResult logit_fit(const DesignMatrix& design, const Eigen::VectorXd& y);

// Two-way within transform: x_it - mean_i - mean_t + grand mean, applied
// columnwise to a stacked n_units x n_periods design in panel row order.
// Absorbs n_units + n_periods - 1 parameters and clusters rows by unit.
DesignMatrix within_transform(const PanelDataset& panel, DesignMatrix stacked);
DesignMatrix within_transform(const PanelDataset& panel, std::span<const std::string> columns);
Eigen::VectorXd within_transform_vector(const PanelDataset& panel, const Eigen::VectorXd& values);

// Stacks panel outcomes in the same row order the within transform expects.
Eigen::VectorXd stacked_outcomes(const PanelDataset& panel);

}  // namespace stagdid
