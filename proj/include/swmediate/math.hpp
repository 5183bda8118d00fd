#pragma once

#include <cmath>
#include <stdexcept>

namespace swmediate {

inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("logit: argument must lie strictly in (0,1)");
  }
  return std::log(p) - std::log1p(-p);
}

// log(1 + exp(x)) without overflow
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline constexpr double kProbClamp = 1e-12;

inline double clamp_probability(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

// Derivatives of expit written in terms of p = expit(z):
//   p'    = p(1-p)
//   p''   = p(1-p)(1-2p)
//   p'''' = p(1-p)(1-2p)(1-12p+12p^2)
inline double expit_d2_from_p(double p) {
  return p * (1.0 - p) * (1.0 - 2.0 * p);
}

inline double expit_d4_from_p(double p) {
  return p * (1.0 - p) * (1.0 - 2.0 * p) * (1.0 - 12.0 * p + 12.0 * p * p);
}

}  // namespace swmediate
