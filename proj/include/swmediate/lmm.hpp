#pragma once

#include "swmediate/model.hpp"

namespace swmediate {

// Per-cluster sufficient statistics for the random-intercept Gaussian model.
// Built once; the profiled criterion at any variance ratio is then O(I p^2),
// and leave-one-out refits just skip one cluster's blocks.
struct LmmWorkspace {
  struct ClusterStats {
    Eigen::MatrixXd xtx;   // X_i' X_i
    Eigen::VectorXd xs;    // X_i' 1
    Eigen::VectorXd xty;   // X_i' y_i
    double sy = 0.0;       // 1' y_i
    double yy = 0.0;       // y_i' y_i
    long n = 0;
  };
  std::vector<ClusterStats> clusters;
  ColumnRoles roles;
  Eigen::Index p = 0;

  static LmmWorkspace build(const ModelData& data);
};

// Random-intercept linear mixed model, REML by default (ML via options).
// The criterion is profiled over lambda = var_intercept / var_residual; fixed
// effects and the residual variance are recovered in closed form at each
// lambda, each cluster's covariance inverted by a rank-one update.
FittedModel fit_lmm(const ModelData& data, const FitOptions& options = {});

// exclude_cluster = -1 fits everything; otherwise that cluster's blocks are
// skipped (delete-one-cluster refits)
FittedModel fit_lmm_workspace(const LmmWorkspace& ws, int exclude_cluster,
                              const FitOptions& options);

// Gaussian log-likelihood (restricted when use_reml) and its analytic
// gradient at an arbitrary parameter point, packed as
// [beta; var_intercept; var_residual]. Used by the gradient check.
double lmm_loglik(const LmmWorkspace& ws, int exclude_cluster, bool use_reml,
                  const Eigen::VectorXd& params, Eigen::VectorXd* grad);

}  // namespace swmediate
