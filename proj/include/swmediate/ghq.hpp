#pragma once

#include <vector>

namespace swmediate {

// Gauss-Hermite rule in physicists' form: sum_t w_t f(z_t) approximates
// integral of f(z) exp(-z^2) dz. For E[f(Z)] with Z ~ N(0,1) use
// sum_t w_t f(sqrt(2) z_t) / sqrt(pi).
struct GhqRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Computed by Golub-Welsch on the Jacobi matrix, cached per node count.
const GhqRule& ghq_rule(int n);

}  // namespace swmediate
