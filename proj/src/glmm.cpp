#include "swmediate/glmm.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "swmediate/ghq.hpp"
#include "swmediate/math.hpp"

namespace swmediate {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kCoefCap = 30.0;
constexpr double kLogSigmaFloor = -12.0;  // sigma ~ 6e-6 counts as boundary

// joint log-density of one cluster's responses and a random intercept u,
// g(u) = sum_k [y_k eta_k - log(1+e^{eta_k})] - u^2/(2 sigma^2) - log sigma
//        - log(2 pi)/2,  eta_k = x_k' beta + u
double cluster_g(const GlmmBlocks::Block& blk, const Eigen::VectorXd& eta0,
                 double u, double sigma) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
    const double eta = eta0(k) + u;
    acc += blk.y(k) * eta - log1pexp(eta);
  }
  acc += -0.5 * u * u / (sigma * sigma) - std::log(sigma) -
         0.5 * std::log(2.0 * M_PI);
  return acc;
}

// conditional mode of g by damped Newton; g is strictly concave in u
double find_mode(const GlmmBlocks::Block& blk, const Eigen::VectorXd& eta0,
                 double sigma) {
  const double inv_s2 = 1.0 / (sigma * sigma);
  double u = 0.0;
  for (int it = 0; it < 100; ++it) {
    double score = -u * inv_s2;
    double curv = inv_s2;
    for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
      const double p = expit(eta0(k) + u);
      score += blk.y(k) - p;
      curv += p * (1.0 - p);
    }
    double step = score / curv;
    if (step > 5.0) step = 5.0;
    if (step < -5.0) step = -5.0;
    u += step;
    if (std::abs(step) < 1e-13 * (1.0 + std::abs(u))) break;
  }
  return u;
}

}  // namespace

GlmmBlocks GlmmBlocks::build(const ModelData& data) {
  GlmmBlocks blocks;
  blocks.roles = data.roles;
  blocks.p = data.x.cols();
  std::vector<long> counts(data.n_clusters, 0);
  for (int c : data.cluster) ++counts[c];
  blocks.clusters.resize(data.n_clusters);
  for (int i = 0; i < data.n_clusters; ++i) {
    blocks.clusters[i].x.resize(counts[i], blocks.p);
    blocks.clusters[i].y.resize(counts[i]);
  }
  std::vector<long> fill(data.n_clusters, 0);
  for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
    const int i = data.cluster[r];
    blocks.clusters[i].x.row(fill[i]) = data.x.row(r);
    blocks.clusters[i].y(fill[i]) = data.y(r);
    ++fill[i];
  }
  return blocks;
}

double glmm_loglik(const GlmmBlocks& blocks, int exclude_cluster,
                   const Eigen::VectorXd& params, int quad_nodes,
                   Eigen::VectorXd* grad) {
  const Eigen::Index p = blocks.p;
  if (params.size() != p + 1) {
    throw std::invalid_argument("glmm_loglik: expected [beta; log sigma]");
  }
  const Eigen::VectorXd beta = params.head(p);
  const double zeta = params(p);
  const double sigma = std::exp(zeta);
  const double inv_s2 = 1.0 / (sigma * sigma);
  const GhqRule& rule = ghq_rule(quad_nodes);
  const int nt = static_cast<int>(rule.nodes.size());

  double total = 0.0;
  if (grad) {
    grad->setZero(p + 1);
  }

  Eigen::VectorXd eta0;
  Eigen::VectorXd p_mode;
  for (std::size_t i = 0; i < blocks.clusters.size(); ++i) {
    if (static_cast<int>(i) == exclude_cluster) continue;
    const auto& blk = blocks.clusters[i];
    if (blk.y.size() == 0) continue;
    eta0.noalias() = blk.x * beta;

    const double uhat = find_mode(blk, eta0, sigma);

    // curvature pieces at the mode
    double q = 0.0;   // sum p(1-p)
    double r3 = 0.0;  // sum p(1-p)(1-2p)
    Eigen::VectorXd qx = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd rx = Eigen::VectorXd::Zero(p);
    for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
      const double pk = expit(eta0(k) + uhat);
      const double w1 = pk * (1.0 - pk);
      q += w1;
      qx += w1 * blk.x.row(k).transpose();
      const double w2 = w1 * (1.0 - 2.0 * pk);
      r3 += w2;
      if (grad) rx += w2 * blk.x.row(k).transpose();
    }
    const double h = q + inv_s2;  // -g_uu
    const double shat = 1.0 / std::sqrt(h);
    const double g_hat = cluster_g(blk, eta0, uhat, sigma);

    // adapted quadrature: integral = sqrt(2) shat sum_t w_t e^{z_t^2} g(u_t)
    double sum_a = 0.0;
    std::vector<double> a(nt);
    std::vector<double> gu(grad ? nt : 0);
    std::vector<Eigen::VectorXd> sx;
    std::vector<double> gzeta(grad ? nt : 0);
    if (grad) sx.assign(nt, Eigen::VectorXd::Zero(p));
    for (int t = 0; t < nt; ++t) {
      const double z = rule.nodes[t];
      const double ut = uhat + kSqrt2 * shat * z;
      const double gt = cluster_g(blk, eta0, ut, sigma);
      a[t] = rule.weights[t] * std::exp(z * z + gt - g_hat);
      sum_a += a[t];
      if (grad) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
          const double pk = expit(eta0(k) + ut);
          s += blk.y(k) - pk;
          sx[t] += (blk.y(k) - pk) * blk.x.row(k).transpose();
        }
        gu[t] = s - ut * inv_s2;
        gzeta[t] = ut * ut * inv_s2 - 1.0;
      }
    }
    total += 0.5 * std::log(2.0) + std::log(shat) + g_hat + std::log(sum_a);

    if (grad) {
      // implicit shifts of the mode and scale with the parameters:
      //   duhat/dtheta = g_utheta / h,  dshat/dtheta = -shat^3/2 * dh/dtheta
      const Eigen::VectorXd uhat_beta = -qx / h;
      const double uhat_zeta = (2.0 * uhat * inv_s2) / h;
      const Eigen::VectorXd dh_beta = r3 * uhat_beta + rx;
      const double dh_zeta = r3 * uhat_zeta - 2.0 * inv_s2;
      const Eigen::VectorXd shat_beta = -0.5 * shat * shat * shat * dh_beta;
      const double shat_zeta = -0.5 * shat * shat * shat * dh_zeta;

      Eigen::VectorXd acc_beta = shat_beta / shat;
      double acc_zeta = shat_zeta / shat;
      for (int t = 0; t < nt; ++t) {
        const double pi_t = a[t] / sum_a;
        const double z = rule.nodes[t];
        acc_beta += pi_t * (sx[t] + gu[t] * (uhat_beta + kSqrt2 * z * shat_beta));
        acc_zeta +=
            pi_t * (gzeta[t] + gu[t] * (uhat_zeta + kSqrt2 * z * shat_zeta));
      }
      grad->head(p) += acc_beta;
      (*grad)(p) += acc_zeta;
    }
  }
  return total;
}

double logistic_loglik(const GlmmBlocks& blocks, int exclude_cluster,
                       const Eigen::VectorXd& beta, Eigen::VectorXd* grad) {
  double total = 0.0;
  if (grad) grad->setZero(beta.size());
  for (std::size_t i = 0; i < blocks.clusters.size(); ++i) {
    if (static_cast<int>(i) == exclude_cluster) continue;
    const auto& blk = blocks.clusters[i];
    for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
      const double eta = blk.x.row(k).dot(beta);
      total += blk.y(k) * eta - log1pexp(eta);
      if (grad) {
        grad->noalias() += (blk.y(k) - expit(eta)) * blk.x.row(k).transpose();
      }
    }
  }
  return total;
}

namespace {

// ridge-penalized logistic regression by Newton steps; start values only
Eigen::VectorXd penalized_logistic_start(const GlmmBlocks& blocks,
                                         int exclude) {
  const Eigen::Index p = blocks.p;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 25; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd hmat = 1e-4 * Eigen::MatrixXd::Identity(p, p);
    for (std::size_t i = 0; i < blocks.clusters.size(); ++i) {
      if (static_cast<int>(i) == exclude) continue;
      const auto& blk = blocks.clusters[i];
      for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
        const double eta = blk.x.row(k).dot(beta);
        const double pk = expit(eta);
        g += (blk.y(k) - pk) * blk.x.row(k).transpose();
        hmat.noalias() +=
            pk * (1.0 - pk) * blk.x.row(k).transpose() * blk.x.row(k);
      }
    }
    g -= 1e-4 * beta;
    Eigen::VectorXd step = hmat.ldlt().solve(g);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-8) break;
  }
  return beta;
}

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  bool converged = false;
  int iterations = 0;
};

// maximizes f via BFGS on the negative, backtracking line search
BfgsResult bfgs_maximize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    Eigen::VectorXd x0, int max_iter, double rel_tol) {
  const Eigen::Index n = x0.size();
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g(n);
  double f = fn(x0, &g);
  BfgsResult res;
  res.x = x0;
  res.f = f;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::VectorXd dir = hinv * g;  // ascent direction
    if (dir.dot(g) <= 0.0) {
      hinv.setIdentity();
      dir = g;
    }
    double step = 1.0;
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new(n);
    bool advanced = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = res.x + step * dir;
      f_new = fn(x_new, &g_new);
      if (std::isfinite(f_new) &&
          f_new >= res.f + 1e-4 * step * dir.dot(g)) {
        advanced = true;
        break;
      }
      step *= 0.5;
    }
    if (!advanced) {
      res.converged = g.cwiseAbs().maxCoeff() < 1e-5 * (1.0 + std::abs(res.f));
      break;
    }
    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd yvec = g_new - g;  // gradient of the maximized function
    const double sy = -s.dot(yvec);    // positive when curvature usable
    if (sy > 1e-12) {
      // BFGS update for the inverse Hessian of -f
      Eigen::VectorXd hy = hinv * (-yvec);
      const double yhy = (-yvec).dot(hy);
      hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
              (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    const double improve = f_new - res.f;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    if (improve < rel_tol * (1.0 + std::abs(res.f)) &&
        g.cwiseAbs().maxCoeff() < 1e-4 * (1.0 + std::abs(res.f))) {
      res.converged = true;
      break;
    }
    if (it == max_iter - 1) res.converged = false;
  }
  if (!res.converged && g.cwiseAbs().maxCoeff() < 1e-5 * (1.0 + std::abs(res.f))) {
    res.converged = true;
  }
  return res;
}

}  // namespace

FittedModel fit_glmm_blocks(const GlmmBlocks& blocks, int exclude_cluster,
                            const FitOptions& options) {
  if (options.quad_nodes < 5 || options.quad_nodes > 50) {
    throw std::invalid_argument(
        "fit_logistic_glmm: quadrature nodes must lie in 5..50");
  }
  const Eigen::Index p = blocks.p;

  // degenerate response cannot identify the model
  double ymin = 1.0, ymax = 0.0;
  long n_rows = 0;
  for (std::size_t i = 0; i < blocks.clusters.size(); ++i) {
    if (static_cast<int>(i) == exclude_cluster) continue;
    const auto& blk = blocks.clusters[i];
    for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
      ymin = std::min(ymin, blk.y(k));
      ymax = std::max(ymax, blk.y(k));
      ++n_rows;
    }
  }
  FittedModel fit;
  fit.roles = blocks.roles;
  fit.used_reml = false;
  fit.quad_nodes = options.quad_nodes;
  if (n_rows <= p) {
    throw std::invalid_argument("fit_logistic_glmm: fewer rows than "
                                "coefficients");
  }
  if (ymin > 0.0 || ymax < 1.0) {
    fit.beta = Eigen::VectorXd::Zero(p);
    fit.converged = false;
    fit.message =
        "response is constant; coefficients diverge (complete separation)";
    return fit;
  }

  const bool pin_zero =
      options.fixed_random_sd && *options.fixed_random_sd == 0.0;
  if (options.fixed_random_sd && *options.fixed_random_sd != 0.0) {
    throw std::invalid_argument(
        "fit_logistic_glmm: only fixed_random_sd = 0 is supported");
  }

  Eigen::VectorXd beta0 = options.beta_start
                              ? *options.beta_start
                              : penalized_logistic_start(blocks, exclude_cluster);
  if (beta0.size() != p) {
    throw std::invalid_argument("fit_logistic_glmm: start vector length");
  }

  if (pin_zero) {
    // the plain logistic likelihood is globally concave, so damped Newton
    // drives the gradient to machine scale (quasi-Newton would leave a
    // larger stationarity gap than the 1e-6 agreement this path promises)
    Eigen::VectorXd beta = beta0;
    Eigen::VectorXd g(p);
    double f = logistic_loglik(blocks, exclude_cluster, beta, &g);
    Eigen::MatrixXd info(p, p);
    auto fill_info = [&](const Eigen::VectorXd& b) {
      info.setZero();
      for (std::size_t i = 0; i < blocks.clusters.size(); ++i) {
        if (static_cast<int>(i) == exclude_cluster) continue;
        const auto& blk = blocks.clusters[i];
        for (Eigen::Index k = 0; k < blk.y.size(); ++k) {
          const double pk = expit(blk.x.row(k).dot(b));
          info.noalias() +=
              pk * (1.0 - pk) * blk.x.row(k).transpose() * blk.x.row(k);
        }
      }
    };
    bool converged = false;
    int iters = 0;
    for (int it = 0; it < options.max_iterations; ++it) {
      iters = it + 1;
      fill_info(beta);
      Eigen::VectorXd dir = info.ldlt().solve(g);
      double step = 1.0;
      bool advanced = false;
      Eigen::VectorXd beta_new;
      Eigen::VectorXd g_new(p);
      double f_new = 0.0;
      for (int ls = 0; ls < 40; ++ls) {
        beta_new = beta + step * dir;
        f_new = logistic_loglik(blocks, exclude_cluster, beta_new, &g_new);
        if (std::isfinite(f_new) && f_new >= f) {
          advanced = true;
          break;
        }
        step *= 0.5;
      }
      if (!advanced) {
        converged = dir.cwiseAbs().maxCoeff() <
                    1e-8 * (1.0 + beta.cwiseAbs().maxCoeff());
        break;
      }
      const double moved = (step * dir).cwiseAbs().maxCoeff();
      beta = beta_new;
      f = f_new;
      g = g_new;
      if (moved < 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
      if (beta.cwiseAbs().maxCoeff() > kCoefCap) break;
    }
    fit.beta = beta;
    fit.random_intercept_sd = 0.0;
    fit.log_likelihood = f;
    fit.converged = converged;
    fit.at_boundary = true;
    fit.iterations = iters;
    fit.message = "sigma pinned at zero (plain logistic)";
    fill_info(beta);
    fit.beta_cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    if (fit.beta.cwiseAbs().maxCoeff() > kCoefCap) {
      fit.converged = false;
      fit.message = "coefficients ran away; possible separation";
    }
    return fit;
  }

  Eigen::VectorXd x0(p + 1);
  x0.head(p) = beta0;
  x0(p) = std::log(options.variance_start && *options.variance_start > 0.0
                       ? *options.variance_start
                       : 0.5);
  auto fn = [&](const Eigen::VectorXd& params, Eigen::VectorXd* g) {
    Eigen::VectorXd clamped = params;
    if (clamped(p) < kLogSigmaFloor) clamped(p) = kLogSigmaFloor;
    return glmm_loglik(blocks, exclude_cluster, clamped, options.quad_nodes, g);
  };
  BfgsResult res =
      bfgs_maximize(fn, x0, options.max_iterations, options.rel_tol);

  fit.beta = res.x.head(p);
  fit.random_intercept_sd = std::exp(res.x(p));
  fit.log_likelihood = res.f;
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.message = res.converged ? "converged" : "hit iteration limit";

  if (fit.random_intercept_sd <= 0.05) {
    // the surface flattens in log sigma near zero, so the optimizer can
    // stall at a tiny positive sigma; let the boundary compete the way the
    // linear fitter does and adopt it unless the interior is genuinely better
    FitOptions pinned = options;
    pinned.fixed_random_sd = 0.0;
    pinned.beta_start = fit.beta;
    FittedModel b = fit_glmm_blocks(blocks, exclude_cluster, pinned);
    if (b.log_likelihood >=
        fit.log_likelihood - 1e-6 * (1.0 + std::abs(fit.log_likelihood))) {
      b.message = "sigma reached the zero boundary; refit as plain logistic";
      b.at_boundary = true;
      return b;
    }
  }

  if (fit.beta.cwiseAbs().maxCoeff() > kCoefCap) {
    fit.converged = false;
    fit.message = "coefficients ran away; possible separation";
    return fit;
  }

  if (options.beta_covariance) {
    // observed information of [beta; log sigma] by central differences of
    // the analytic gradient
    const Eigen::Index d = p + 1;
    Eigen::MatrixXd info(d, d);
    const double h = 1e-5;
    Eigen::VectorXd gp(d), gm(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::VectorXd xp = res.x;
      Eigen::VectorXd xm = res.x;
      xp(c) += h;
      xm(c) -= h;
      glmm_loglik(blocks, exclude_cluster, xp, options.quad_nodes, &gp);
      glmm_loglik(blocks, exclude_cluster, xm, options.quad_nodes, &gm);
      info.col(c) = -(gp - gm) / (2.0 * h);
    }
    info = 0.5 * (info + info.transpose()).eval();
    Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
    fit.beta_cov = cov.topLeftCorner(p, p);
  }
  return fit;
}

FittedModel fit_logistic_glmm(const ModelData& data,
                              const FitOptions& options) {
  GlmmBlocks blocks = GlmmBlocks::build(data);
  return fit_glmm_blocks(blocks, -1, options);
}

}  // namespace swmediate
