#include "swmediate/gradient_check.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "swmediate/glmm.hpp"
#include "swmediate/lmm.hpp"

namespace swmediate {

namespace {

GradientCheck run_check(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    const Eigen::VectorXd& at) {
  Eigen::VectorXd analytic;
  fn(at, &analytic);
  const double h = 1e-6;
  GradientCheck out;
  out.grad_inf_norm = analytic.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    Eigen::VectorXd xp = at;
    Eigen::VectorXd xm = at;
    xp(k) += h;
    xm(k) -= h;
    const double fd = (fn(xp, nullptr) - fn(xm, nullptr)) / (2.0 * h);
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(analytic(k) - fd));
  }
  out.relative = out.max_abs_diff / std::max(1.0, out.grad_inf_norm);
  return out;
}

}  // namespace

GradientCheck loglik_gradient_check(const FittedModel& fit,
                                    const ModelData& data,
                                    const Eigen::VectorXd& at) {
  const bool continuous = std::isfinite(fit.residual_sd);
  if (continuous) {
    LmmWorkspace ws = LmmWorkspace::build(data);
    Eigen::VectorXd point = at;
    if (point.size() == 0) {
      point.resize(fit.beta.size() + 2);
      point.head(fit.beta.size()) = fit.beta;
      point(fit.beta.size()) =
          fit.random_intercept_sd * fit.random_intercept_sd;
      point(fit.beta.size() + 1) = fit.residual_sd * fit.residual_sd;
      // finite differences need room below the variance: nudge off an exact
      // zero boundary
      if (point(fit.beta.size()) < 1e-5) point(fit.beta.size()) = 1e-5;
    }
    auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      return lmm_loglik(ws, -1, fit.used_reml, x, g);
    };
    return run_check(fn, point);
  }

  GlmmBlocks blocks = GlmmBlocks::build(data);
  Eigen::VectorXd point = at;
  if (point.size() == 0) {
    if (fit.at_boundary) {
      auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        return logistic_loglik(blocks, -1, x, g);
      };
      return run_check(fn, fit.beta);
    }
    point.resize(fit.beta.size() + 1);
    point.head(fit.beta.size()) = fit.beta;
    point(fit.beta.size()) = std::log(fit.random_intercept_sd);
  }
  const int nodes = fit.quad_nodes > 0 ? fit.quad_nodes : 15;
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    return glmm_loglik(blocks, -1, x, nodes, g);
  };
  return run_check(fn, point);
}

}  // namespace swmediate
