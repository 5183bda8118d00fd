#include "swmediate/lmm.hpp"

#include <cmath>
#include <stdexcept>

namespace swmediate {

namespace {

constexpr double kLambdaCeiling = 1e8;
constexpr double kBoundaryLambda = 1e-10;

struct CriterionParts {
  double value = 0.0;        // -2 * (restricted) log-likelihood
  Eigen::VectorXd beta;
  Eigen::MatrixXd a;         // X' W^-1 X at this lambda
  double sigma2 = 0.0;
  long n_rows = 0;
};

// Profiled criterion at a given variance ratio. W = I + lambda Z Z', inverted
// per cluster by the rank-one identity; beta and sigma^2 drop out in closed
// form.
CriterionParts profiled_criterion(const LmmWorkspace& ws, int exclude,
                                  bool use_reml, double lambda) {
  const Eigen::Index p = ws.p;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double q = 0.0;
  double logdet_w = 0.0;
  long n_total = 0;
  for (std::size_t i = 0; i < ws.clusters.size(); ++i) {
    if (static_cast<int>(i) == exclude) continue;
    const auto& cs = ws.clusters[i];
    if (cs.n == 0) continue;
    const double denom = 1.0 + lambda * static_cast<double>(cs.n);
    if (denom <= 0.0) {
      throw std::domain_error("lmm: variance ratio outside feasible region");
    }
    const double c = lambda / denom;
    a.noalias() += cs.xtx - c * (cs.xs * cs.xs.transpose());
    b.noalias() += cs.xty - (c * cs.sy) * cs.xs;
    q += cs.yy - c * cs.sy * cs.sy;
    logdet_w += std::log(denom);
    n_total += cs.n;
  }
  if (n_total <= p) {
    throw std::invalid_argument("lmm: fewer usable rows than coefficients");
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <=
          1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
    throw std::runtime_error(
        "lmm: design matrix is rank deficient (collinear columns)");
  }
  CriterionParts parts;
  parts.beta = ldlt.solve(b);
  double rwr = q - parts.beta.dot(b);
  rwr = std::max(rwr, 1e-300);
  const double logdet_a = ldlt.vectorD().array().log().sum();
  const double n = static_cast<double>(n_total);
  const double dof = use_reml ? n - static_cast<double>(p) : n;
  parts.sigma2 = rwr / dof;
  parts.value = dof * std::log(parts.sigma2) + logdet_w + dof +
                n * std::log(2.0 * M_PI);
  if (use_reml) parts.value += logdet_a;
  parts.a = std::move(a);
  parts.n_rows = n_total;
  return parts;
}

}  // namespace

LmmWorkspace LmmWorkspace::build(const ModelData& data) {
  LmmWorkspace ws;
  ws.roles = data.roles;
  ws.p = data.x.cols();
  ws.clusters.resize(data.n_clusters);
  for (auto& cs : ws.clusters) {
    cs.xtx = Eigen::MatrixXd::Zero(ws.p, ws.p);
    cs.xs = Eigen::VectorXd::Zero(ws.p);
    cs.xty = Eigen::VectorXd::Zero(ws.p);
  }
  for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
    auto& cs = ws.clusters[data.cluster[r]];
    const auto row = data.x.row(r);
    cs.xtx.noalias() += row.transpose() * row;
    cs.xs += row.transpose();
    cs.xty += data.y(r) * row.transpose();
    cs.sy += data.y(r);
    cs.yy += data.y(r) * data.y(r);
    ++cs.n;
  }
  return ws;
}

FittedModel fit_lmm_workspace(const LmmWorkspace& ws, int exclude_cluster,
                              const FitOptions& options) {
  if (options.fixed_random_sd && *options.fixed_random_sd != 0.0) {
    throw std::invalid_argument(
        "fit_lmm: only fixed_random_sd = 0 is supported");
  }
  int evals = 0;
  auto crit = [&](double lambda) {
    ++evals;
    return profiled_criterion(ws, exclude_cluster, options.use_reml, lambda)
        .value;
  };

  double best_lambda = 0.0;
  if (!options.fixed_random_sd) {
    // bracket the minimum on a log grid (lambda = 0 included), then golden-
    // section to the requested tolerance
    std::vector<double> grid;
    grid.push_back(0.0);
    if (options.variance_start && *options.variance_start > 0.0) {
      const double center = *options.variance_start;
      for (double f = 0.05; f <= 20.0 + 1e-9; f *= std::pow(400.0, 1.0 / 12.0))
        grid.push_back(center * f);
    } else {
      for (double le = -8.0; le <= 6.0 + 1e-9; le += 0.25)
        grid.push_back(std::pow(10.0, le));
    }
    std::size_t best = 0;
    double best_val = crit(grid[0]);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      double v = crit(grid[k]);
      if (v < best_val) {
        best_val = v;
        best = k;
      }
    }
    // a warm-start bracket can miss the minimum; extend outward while the
    // edge keeps winning
    while (best == grid.size() - 1 && grid.back() < kLambdaCeiling) {
      grid.push_back(grid.back() * 4.0);
      double v = crit(grid.back());
      if (v < best_val) {
        best_val = v;
        best = grid.size() - 1;
      } else {
        break;
      }
    }
    while (best == 1 && grid[1] > 1e-9) {
      // descending toward zero: densify between 0 and the current best
      grid[1] *= 0.1;
      double v = crit(grid[1]);
      if (v < best_val) {
        best_val = v;
      } else {
        break;
      }
    }
    double lo = best > 0 ? grid[best - 1] : 0.0;
    double hi = best + 1 < grid.size() ? grid[best + 1] : grid[best] * 4.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = crit(x1);
    double f2 = crit(x2);
    for (int it = 0; it < 300 && (hi - lo) > 1e-12 * (1.0 + hi); ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = crit(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = crit(x2);
      }
    }
    best_lambda = 0.5 * (lo + hi);
    // the zero boundary competes explicitly
    if (profiled_criterion(ws, exclude_cluster, options.use_reml, 0.0).value <=
        profiled_criterion(ws, exclude_cluster, options.use_reml, best_lambda)
            .value) {
      best_lambda = 0.0;
    }
  }

  bool at_boundary = best_lambda <= kBoundaryLambda;
  if (at_boundary) best_lambda = 0.0;

  CriterionParts parts =
      profiled_criterion(ws, exclude_cluster, options.use_reml, best_lambda);
  FittedModel fit;
  fit.beta = parts.beta;
  fit.roles = ws.roles;
  fit.residual_sd = std::sqrt(parts.sigma2);
  fit.random_intercept_sd = std::sqrt(best_lambda * parts.sigma2);
  fit.log_likelihood = -0.5 * parts.value;
  fit.used_reml = options.use_reml;
  fit.converged = true;
  fit.at_boundary = at_boundary;
  fit.iterations = evals;
  fit.message = at_boundary ? "random-intercept variance at zero boundary"
                            : "converged";
  Eigen::LDLT<Eigen::MatrixXd> ldlt(parts.a);
  fit.beta_cov = parts.sigma2 *
                 ldlt.solve(Eigen::MatrixXd::Identity(ws.p, ws.p));
  return fit;
}

FittedModel fit_lmm(const ModelData& data, const FitOptions& options) {
  LmmWorkspace ws = LmmWorkspace::build(data);
  return fit_lmm_workspace(ws, -1, options);
}

double lmm_loglik(const LmmWorkspace& ws, int exclude_cluster, bool use_reml,
                  const Eigen::VectorXd& params, Eigen::VectorXd* grad) {
  const Eigen::Index p = ws.p;
  if (params.size() != p + 2) {
    throw std::invalid_argument("lmm_loglik: expected [beta; vb; ve]");
  }
  const Eigen::VectorXd beta = params.head(p);
  const double vb = params(p);
  const double ve = params(p + 1);
  if (ve <= 0.0) throw std::domain_error("lmm_loglik: residual variance <= 0");
  const double lambda = vb / ve;

  double loglik = 0.0;
  long n_total = 0;
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(p);
  double g_vb = 0.0;
  double g_ve = 0.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);      // X' V^-1 X
  Eigen::MatrixXd dm_vb = Eigen::MatrixXd::Zero(p, p);  // X'V^-1 ZZ' V^-1 X
  Eigen::MatrixXd dm_ve = Eigen::MatrixXd::Zero(p, p);  // X'V^-1 V^-1 X

  for (std::size_t i = 0; i < ws.clusters.size(); ++i) {
    if (static_cast<int>(i) == exclude_cluster) continue;
    const auto& cs = ws.clusters[i];
    if (cs.n == 0) continue;
    const double n_i = static_cast<double>(cs.n);
    const double denom = 1.0 + lambda * n_i;
    if (denom <= 0.0) {
      throw std::domain_error("lmm_loglik: covariance not positive definite");
    }
    const double c = lambda / denom;
    const Eigen::VectorXd xr = cs.xty - cs.xtx * beta;  // X_i' r_i
    const double t = cs.sy - cs.xs.dot(beta);           // 1' r_i
    const double rr =
        cs.yy - 2.0 * beta.dot(cs.xty) + beta.dot(cs.xtx * beta);

    loglik += -0.5 * (n_i * std::log(ve) + std::log(denom) +
                      (rr - c * t * t) / ve + n_i * std::log(2.0 * M_PI));
    n_total += cs.n;

    m.noalias() += (cs.xtx - c * (cs.xs * cs.xs.transpose())) / ve;
    if (grad) {
      g_beta += (xr - (c * t) * cs.xs) / ve;
      const double one_vinv_one = n_i / (ve * denom);
      const double one_vinv_r = t / (ve * denom);
      g_vb += -0.5 * (one_vinv_one - one_vinv_r * one_vinv_r);
      const double tr_vinv = (n_i - c * n_i) / ve;
      const double r_vinv2_r =
          (rr - 2.0 * c * t * t + c * c * n_i * t * t) / (ve * ve);
      g_ve += -0.5 * (tr_vinv - r_vinv2_r);
      const Eigen::VectorXd w = cs.xs / (ve * denom);
      dm_vb.noalias() += w * w.transpose();
      dm_ve.noalias() +=
          (cs.xtx - (2.0 * c - c * c * n_i) * (cs.xs * cs.xs.transpose())) /
          (ve * ve);
    }
  }

  if (use_reml) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    loglik += -0.5 * ldlt.vectorD().array().log().sum();
    if (grad) {
      Eigen::MatrixXd minv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
      g_vb += 0.5 * (minv * dm_vb).trace();
      g_ve += 0.5 * (minv * dm_ve).trace();
    }
  }
  (void)n_total;

  if (grad) {
    grad->resize(p + 2);
    grad->head(p) = g_beta;
    (*grad)(p) = g_vb;
    (*grad)(p + 1) = g_ve;
  }
  return loglik;
}

}  // namespace swmediate
