#include "swmediate/integrals.hpp"

#include <cmath>
#include <stdexcept>

#include "swmediate/ghq.hpp"
#include "swmediate/math.hpp"

namespace swmediate {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
const double kInvSqrtPi = 1.0 / std::sqrt(M_PI);

void check_sd(double sd, const char* what) {
  if (!(sd >= 0.0) || !std::isfinite(sd)) {
    throw std::invalid_argument(std::string(what) + " must be finite and >= 0");
  }
}

}  // namespace

double ghq_logistic_normal(const LogisticNormalQuery& q, int nodes) {
  check_sd(q.sd, "LogisticNormalQuery.sd");
  if (q.sd == 0.0) {
    return clamp_probability(expit(q.mean));
  }
  const GhqRule& rule = ghq_rule(nodes);
  double acc = 0.0;
  for (std::size_t t = 0; t < rule.nodes.size(); ++t) {
    acc += rule.weights[t] * expit(q.mean + kSqrt2 * q.sd * rule.nodes[t]);
  }
  return clamp_probability(acc * kInvSqrtPi);
}

double sta_logistic_normal(const LogisticNormalQuery& q) {
  check_sd(q.sd, "LogisticNormalQuery.sd");
  double m = expit(q.mean);
  double corr = (m - 3.0 * m * m + 2.0 * m * m * m) * q.sd * q.sd / 2.0;
  return clamp_probability(m + corr);
}

double mu_double_ghq(const DoubleIntegralQuery& q, int nodes) {
  check_sd(q.mediator_marginal_sd, "DoubleIntegralQuery.mediator_marginal_sd");
  check_sd(q.outcome_random_sd, "DoubleIntegralQuery.outcome_random_sd");
  const double center = q.outcome_base + q.beta_m * q.mediator_mean;
  const double sm = std::abs(q.beta_m) * q.mediator_marginal_sd;
  const double sa = q.outcome_random_sd;
  // both normals enter only through the linear predictor, so each
  // degenerate direction collapses to the single-integral evaluator
  if (sm == 0.0 && sa == 0.0) return clamp_probability(expit(center));
  if (sm == 0.0) return ghq_logistic_normal({center, sa}, nodes);
  if (sa == 0.0) return ghq_logistic_normal({center, sm}, nodes);
  const GhqRule& rule = ghq_rule(nodes);
  double acc = 0.0;
  for (std::size_t s = 0; s < rule.nodes.size(); ++s) {
    double shift_a = kSqrt2 * sa * rule.nodes[s];
    double inner = 0.0;
    for (std::size_t t = 0; t < rule.nodes.size(); ++t) {
      inner += rule.weights[t] *
               expit(center + shift_a + kSqrt2 * sm * rule.nodes[t]);
    }
    acc += rule.weights[s] * inner;
  }
  return clamp_probability(acc * kInvSqrtPi * kInvSqrtPi);
}

double mu_double_sta(const DoubleIntegralQuery& q) {
  check_sd(q.mediator_marginal_sd, "DoubleIntegralQuery.mediator_marginal_sd");
  check_sd(q.outcome_random_sd, "DoubleIntegralQuery.outcome_random_sd");
  const double z = q.outcome_base + q.beta_m * q.mediator_mean;
  const double s2 =
      q.beta_m * q.beta_m * q.mediator_marginal_sd * q.mediator_marginal_sd;
  const double a2 = q.outcome_random_sd * q.outcome_random_sd;
  // second-order expansion over the mediator, then a second one over the
  // outcome intercept; the cross term carries the fourth derivative
  double p = expit(z);
  double val = p + 0.5 * (s2 + a2) * expit_d2_from_p(p) +
               0.25 * a2 * s2 * expit_d4_from_p(p);
  return clamp_probability(val);
}

}  // namespace swmediate
