#pragma once

namespace swmediate {

// E[ expit(mean + U) ], U ~ N(0, sd^2). Serves both the mediator-probability
// integral kappa and the outcome mixture integral lambda, which share this
// exact form with different means and sds.
struct LogisticNormalQuery {
  double mean = 0.0;
  double sd = 0.0;  // >= 0; sd = 0 degenerates to expit(mean)
};

// P(Y = 1) marginalizing a continuous mediator and the outcome random
// intercept:
//   E_alpha E_m expit(outcome_base + beta_m * m + alpha)
// with m ~ N(mediator_mean, mediator_marginal_sd^2) collapsing the mediator
// random intercept and residual into one marginal normal, and
// alpha ~ N(0, outcome_random_sd^2).
struct DoubleIntegralQuery {
  double outcome_base = 0.0;  // period intercept + theta*a + covariate part
  double mediator_mean = 0.0;
  double beta_m = 0.0;
  double mediator_marginal_sd = 0.0;
  double outcome_random_sd = 0.0;
};

// Results lie strictly inside (0,1); values are clamped at 1e-12 from the
// boundaries so downstream logits stay finite.
double ghq_logistic_normal(const LogisticNormalQuery& q, int nodes);
double sta_logistic_normal(const LogisticNormalQuery& q);
double mu_double_ghq(const DoubleIntegralQuery& q, int nodes);
double mu_double_sta(const DoubleIntegralQuery& q);

}  // namespace swmediate
