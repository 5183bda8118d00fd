#pragma once

#include "swmediate/model.hpp"

namespace swmediate {

struct GradientCheck {
  double max_abs_diff = 0.0;   // worst |analytic - central difference|
  double grad_inf_norm = 0.0;  // size of the analytic gradient
  double relative = 0.0;       // max_abs_diff / max(1, grad_inf_norm)
};

// Compares the analytic log-likelihood gradient against central finite
// differences (step 1e-6) at the given parameter point. Continuous models
// use [beta; var_intercept; var_residual] against the (restricted when the
// fit used REML) Gaussian likelihood; binary models use [beta; log sigma]
// against the adaptive-quadrature marginal likelihood. Pass an empty vector
// to check at the fitted parameters.
GradientCheck loglik_gradient_check(const FittedModel& fit,
                                    const ModelData& data,
                                    const Eigen::VectorXd& at = {});

}  // namespace swmediate
