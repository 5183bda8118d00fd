#pragma once

#include "swmediate/model.hpp"

namespace swmediate {

// Per-cluster data blocks for the random-intercept logistic model; built
// once so leave-one-out refits skip a block instead of re-slicing rows.
struct GlmmBlocks {
  struct Block {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
  };
  std::vector<Block> clusters;
  ColumnRoles roles;
  Eigen::Index p = 0;

  static GlmmBlocks build(const ModelData& data);
};

// Random-intercept logistic model by maximized adaptive Gauss-Hermite
// marginal likelihood. The quadrature is recentered at each cluster's
// conditional mode with the mode's curvature as scale; the gradient is the
// exact derivative of that adapted objective (mode and scale shifts
// included), so quasi-Newton steps and finite differences see the same
// surface.
FittedModel fit_logistic_glmm(const ModelData& data,
                              const FitOptions& options = {});

FittedModel fit_glmm_blocks(const GlmmBlocks& blocks, int exclude_cluster,
                            const FitOptions& options);

// Marginal log-likelihood (and optionally its analytic gradient) at packed
// parameters [beta; log sigma]. sigma = 0 is not representable here; the
// boundary is handled by the fitter via a plain logistic refit.
double glmm_loglik(const GlmmBlocks& blocks, int exclude_cluster,
                   const Eigen::VectorXd& params, int quad_nodes,
                   Eigen::VectorXd* grad);

// Bernoulli log-likelihood with no random effect, used when sigma is pinned
// at zero; params holds beta only.
double logistic_loglik(const GlmmBlocks& blocks, int exclude_cluster,
                       const Eigen::VectorXd& beta, Eigen::VectorXd* grad);

}  // namespace swmediate
