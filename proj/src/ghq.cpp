#include "swmediate/ghq.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace swmediate {

namespace {

GhqRule compute_rule(int n) {
  if (n < 1 || n > 512) {
    throw std::invalid_argument("ghq_rule: node count must be in [1, 512]");
  }
  if (n == 1) {
    return GhqRule{{0.0}, {std::sqrt(M_PI)}};
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("ghq_rule: eigen decomposition failed");
  }
  GhqRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mu0 = std::sqrt(M_PI);
  for (int t = 0; t < n; ++t) {
    rule.nodes[t] = es.eigenvalues()(t);
    double v0 = es.eigenvectors()(0, t);
    rule.weights[t] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

const GhqRule& ghq_rule(int n) {
  static std::mutex mu;
  static std::map<int, GhqRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, compute_rule(n)).first;
  }
  return it->second;
}

}  // namespace swmediate
