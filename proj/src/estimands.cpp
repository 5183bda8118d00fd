#include "swmediate/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "swmediate/glmm.hpp"
#include "swmediate/integrals.hpp"
#include "swmediate/lmm.hpp"
#include "swmediate/math.hpp"

namespace swmediate {

IntegralMethod parse_method(const std::string& name) {
  if (name == "ghq") return IntegralMethod::kGhq;
  if (name == "sta") return IntegralMethod::kSta;
  throw std::invalid_argument("unknown integral method: " + name);
}

std::string method_name(IntegralMethod m) {
  return m == IntegralMethod::kGhq ? "ghq" : "sta";
}

CovariateProfile median_profile(const MediationDataset& data) {
  CovariateProfile profile;
  profile.names = data.covariate_names;
  profile.source = "median";
  const std::size_t n_cov = data.covariate_names.size();
  profile.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_cov));
  if (n_cov == 0) return profile;

  std::vector<std::vector<double>> cols(n_cov);
  for (const auto& rec : data.records) {
    if (!data.design.included(rec.cluster, rec.period)) continue;
    if (!rec.outcome || !rec.mediator) continue;
    if (rec.covariates.size() != n_cov) {
      throw std::invalid_argument("median_profile: covariate length drift");
    }
    for (std::size_t c = 0; c < n_cov; ++c) {
      cols[c].push_back(rec.covariates[c]);
    }
  }
  if (cols[0].empty()) {
    throw std::invalid_argument("median_profile: no usable records");
  }
  for (std::size_t c = 0; c < n_cov; ++c) {
    auto& v = cols[c];
    const bool binary = std::all_of(v.begin(), v.end(), [](double x) {
      return x == 0.0 || x == 1.0;
    });
    if (binary) {
      const std::size_t ones =
          static_cast<std::size_t>(std::count(v.begin(), v.end(), 1.0));
      profile.values(static_cast<Eigen::Index>(c)) =
          (2 * ones > v.size()) ? 1.0 : 0.0;
    } else {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      profile.values(static_cast<Eigen::Index>(c)) =
          (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }
  return profile;
}

EffectQuad make_effect_quad(double nie, double nde) {
  EffectQuad q;
  q.nie = nie;
  q.nde = nde;
  q.te = nie + nde;
  q.te_near_zero = std::abs(q.te) < 1e-8;
  if (q.te == 0.0) {
    q.mp = std::numeric_limits<double>::quiet_NaN();
    q.mp_defined = false;
  } else {
    q.mp = nie / q.te;
    q.mp_defined = true;
  }
  return q;
}

namespace {

struct CellContext {
  double beta_0j;       // outcome period intercept
  double theta;         // treatment effect for this cell's exposure
  double beta_m;
  double beta_x;        // outcome covariate contribution
  double sigma_alpha;
  double gamma_0j;      // mediator period intercept
  double eta;           // mediator treatment effect for this cell's exposure
  double gamma_x;
  double sigma_tau;
  double sigma_e;       // mediator residual sd (continuous mediator)
};

CellContext cell_context(const FittedModelPair& fit, int period, int exposure,
                         const CovariateProfile& profile) {
  CellContext ctx;
  ctx.beta_0j = fit.outcome.period_intercept(period);
  ctx.theta = fit.outcome.treatment_effect_at(exposure);
  ctx.beta_m = fit.outcome.mediator_coefficient();
  ctx.beta_x = fit.outcome.covariate_contribution(profile.values);
  ctx.sigma_alpha = fit.outcome.random_intercept_sd;
  ctx.gamma_0j = fit.mediator.period_intercept(period);
  ctx.eta = fit.mediator.treatment_effect_at(exposure);
  ctx.gamma_x = fit.mediator.covariate_contribution(profile.values);
  ctx.sigma_tau = fit.mediator.random_intercept_sd;
  ctx.sigma_e = fit.mediator.residual_sd;
  return ctx;
}

double kappa(const CellContext& ctx, int a_star, const EstimandOptions& opts) {
  LogisticNormalQuery q{ctx.gamma_0j + (a_star ? ctx.eta : 0.0) + ctx.gamma_x,
                        ctx.sigma_tau};
  return opts.method == IntegralMethod::kGhq
             ? ghq_logistic_normal(q, opts.nodes)
             : sta_logistic_normal(q);
}

double lambda_mix(const CellContext& ctx, int a, double m,
                  const EstimandOptions& opts) {
  LogisticNormalQuery q{
      ctx.beta_0j + (a ? ctx.theta : 0.0) + ctx.beta_m * m + ctx.beta_x,
      ctx.sigma_alpha};
  return opts.method == IntegralMethod::kGhq
             ? ghq_logistic_normal(q, opts.nodes)
             : sta_logistic_normal(q);
}

double mu(const CellContext& ctx, int a, int a_star,
          const EstimandOptions& opts) {
  DoubleIntegralQuery q;
  q.outcome_base = ctx.beta_0j + (a ? ctx.theta : 0.0) + ctx.beta_x;
  q.mediator_mean = ctx.gamma_0j + (a_star ? ctx.eta : 0.0) + ctx.gamma_x;
  q.beta_m = ctx.beta_m;
  q.mediator_marginal_sd =
      std::sqrt(ctx.sigma_tau * ctx.sigma_tau + ctx.sigma_e * ctx.sigma_e);
  q.outcome_random_sd = ctx.sigma_alpha;
  return opts.method == IntegralMethod::kGhq ? mu_double_ghq(q, opts.nodes)
                                             : mu_double_sta(q);
}

double checked_logit(double p, int period, int exposure, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::runtime_error(
        std::string(what) + " probability degenerate at period " +
        std::to_string(period) +
        (exposure > 0 ? ", exposure " + std::to_string(exposure) : "") +
        "; logit undefined");
  }
  return logit(p);
}

EffectQuad cell_estimands(const FittedModelPair& fit, int period, int exposure,
                          const CovariateProfile& profile,
                          const EstimandOptions& opts) {
  const CellContext ctx = cell_context(fit, period, exposure, profile);
  const bool yb = fit.types.outcome == VarKind::kBinary;
  const bool mb = fit.types.mediator == VarKind::kBinary;

  if (!yb && !mb) {
    return make_effect_quad(ctx.beta_m * ctx.eta, ctx.theta);
  }
  if (!yb && mb) {
    const double k1 = kappa(ctx, 1, opts);
    const double k0 = kappa(ctx, 0, opts);
    return make_effect_quad(ctx.beta_m * (k1 - k0), ctx.theta);
  }
  if (yb && !mb) {
    const double m11 = mu(ctx, 1, 1, opts);
    const double m10 = mu(ctx, 1, 0, opts);
    const double m00 = mu(ctx, 0, 0, opts);
    const double nie = checked_logit(m11, period, exposure, "mu(1,1)") -
                       checked_logit(m10, period, exposure, "mu(1,0)");
    const double nde = checked_logit(m10, period, exposure, "mu(1,0)") -
                       checked_logit(m00, period, exposure, "mu(0,0)");
    return make_effect_quad(nie, nde);
  }
  const double k1 = kappa(ctx, 1, opts);
  const double k0 = kappa(ctx, 0, opts);
  auto mix = [&](int a, double k) {
    return lambda_mix(ctx, a, 0.0, opts) * (1.0 - k) +
           lambda_mix(ctx, a, 1.0, opts) * k;
  };
  const double p11 = mix(1, k1);
  const double p10 = mix(1, k0);
  const double p00 = mix(0, k0);
  const double nie = checked_logit(p11, period, exposure, "mixture(1,1)") -
                     checked_logit(p10, period, exposure, "mixture(1,0)");
  const double nde = checked_logit(p10, period, exposure, "mixture(1,0)") -
                     checked_logit(p00, period, exposure, "mixture(0,0)");
  return make_effect_quad(nie, nde);
}

// TE-share-weighted mp over components; falls back to the algebraically
// equal sum(nie)/sum(te) when a zero component te makes a share undefined
double te_share_mp(const std::vector<EffectQuad>& quads, double* nie_sum_out,
                   double* te_sum_out) {
  double nie_sum = 0.0;
  double te_sum = 0.0;
  bool all_defined = true;
  for (const auto& q : quads) {
    nie_sum += q.nie;
    te_sum += q.te;
    if (!q.mp_defined) all_defined = false;
  }
  if (nie_sum_out) *nie_sum_out = nie_sum;
  if (te_sum_out) *te_sum_out = te_sum;
  if (te_sum == 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (all_defined) {
    double mp = 0.0;
    for (const auto& q : quads) mp += (q.te / te_sum) * q.mp;
    return mp;
  }
  return nie_sum / te_sum;
}

}  // namespace

EffectQuad nie_nde_constant(const FittedModelPair& fit, int period,
                            const CovariateProfile& profile,
                            const EstimandOptions& opts) {
  if (fit.structure != EffectStructure::kConstant) {
    throw std::logic_error(
        "nie_nde_constant: pair was fitted with the exposure-time structure");
  }
  return cell_estimands(fit, period, 0, profile, opts);
}

EffectQuad nie_nde_exposure(const FittedModelPair& fit, int period,
                            int exposure, const CovariateProfile& profile,
                            const EstimandOptions& opts) {
  if (fit.structure != EffectStructure::kExposureTime) {
    throw std::logic_error(
        "nie_nde_exposure: pair was fitted with the constant structure");
  }
  if (exposure < 1) {
    throw std::domain_error("nie_nde_exposure: exposure must be >= 1");
  }
  if (exposure > period - 1) {
    throw std::domain_error(
        "nie_nde_exposure: exposure " + std::to_string(exposure) +
        " cannot occur by period " + std::to_string(period));
  }
  return cell_estimands(fit, period, exposure, profile, opts);
}

EffectQuad summarize_constant(
    const std::vector<std::pair<int, EffectQuad>>& per_period) {
  if (per_period.empty()) {
    throw std::invalid_argument("summarize_constant: no period estimates");
  }
  double nie = 0.0;
  double nde = 0.0;
  std::vector<EffectQuad> quads;
  quads.reserve(per_period.size());
  for (const auto& [j, q] : per_period) {
    nie += q.nie;
    nde += q.nde;
    quads.push_back(q);
  }
  nie /= static_cast<double>(per_period.size());
  nde /= static_cast<double>(per_period.size());
  EffectQuad overall = make_effect_quad(nie, nde);
  const double mp = te_share_mp(quads, nullptr, nullptr);
  overall.mp = mp;
  overall.mp_defined = std::isfinite(mp);
  return overall;
}

ExposureSummary summarize_exposure(
    const std::vector<std::tuple<int, int, EffectQuad>>& per_cell,
    const TrialDesign& design) {
  ExposureSummary out;
  const std::vector<int> levels = design.observable_exposure_levels();
  if (levels.empty()) {
    throw std::domain_error("summarize_exposure: design has no treated cells");
  }
  std::vector<EffectQuad> level_quads;
  for (int e : levels) {
    const std::vector<int> eligible = design.eligible_periods(e);
    if (eligible.empty()) {
      throw std::domain_error(
          "summarize_exposure: empty eligible period set for exposure " +
          std::to_string(e));
    }
    double nie = 0.0;
    double nde = 0.0;
    std::vector<EffectQuad> quads;
    for (int j : eligible) {
      auto it = std::find_if(per_cell.begin(), per_cell.end(),
                             [&](const auto& cell) {
                               return std::get<0>(cell) == j &&
                                      std::get<1>(cell) == e;
                             });
      if (it == per_cell.end()) {
        throw std::invalid_argument(
            "summarize_exposure: missing cell estimate at period " +
            std::to_string(j) + ", exposure " + std::to_string(e));
      }
      nie += std::get<2>(*it).nie;
      nde += std::get<2>(*it).nde;
      quads.push_back(std::get<2>(*it));
    }
    nie /= static_cast<double>(eligible.size());
    nde /= static_cast<double>(eligible.size());
    EffectQuad level_quad = make_effect_quad(nie, nde);
    const double mp = te_share_mp(quads, nullptr, nullptr);
    level_quad.mp = mp;
    level_quad.mp_defined = std::isfinite(mp);
    out.per_exposure.emplace_back(e, level_quad);
    level_quads.push_back(level_quad);
  }
  double nie = 0.0;
  double nde = 0.0;
  for (const auto& q : level_quads) {
    nie += q.nie;
    nde += q.nde;
  }
  nie /= static_cast<double>(level_quads.size());
  nde /= static_cast<double>(level_quads.size());
  out.overall = make_effect_quad(nie, nde);
  const double mp = te_share_mp(level_quads, nullptr, nullptr);
  out.overall.mp = mp;
  out.overall.mp_defined = std::isfinite(mp);
  return out;
}

MediationEstimates evaluate_estimands(const FittedModelPair& fit,
                                      const TrialDesign& design,
                                      const CovariateProfile& profile,
                                      const EstimandOptions& opts) {
  MediationEstimates est;
  est.structure = fit.structure;
  est.method = opts.method;
  est.nodes = opts.nodes;
  est.profile = profile;
  if (fit.structure == EffectStructure::kConstant) {
    for (int j = 1; j <= design.n_periods(); ++j) {
      est.per_period.emplace_back(j,
                                  nie_nde_constant(fit, j, profile, opts));
    }
    est.overall = summarize_constant(est.per_period);
  } else {
    for (int e : design.observable_exposure_levels()) {
      for (int j : design.eligible_periods(e)) {
        est.per_cell.emplace_back(
            j, e, nie_nde_exposure(fit, j, e, profile, opts));
      }
    }
    ExposureSummary summary = summarize_exposure(est.per_cell, design);
    est.per_exposure = std::move(summary.per_exposure);
    est.overall = summary.overall;
  }
  est.mp_ratio_of_sums =
      est.overall.te == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                            : est.overall.nie / est.overall.te;
  return est;
}

FittedModelPair fit_models(const MediationDataset& data,
                           const AnalysisConfig& config) {
  FittedModelPair pair;
  pair.types = config.types;
  pair.structure = config.structure;

  ModelData outcome_data =
      build_design_matrix(data, ModelTarget::kOutcome, config.structure);
  ModelData mediator_data =
      build_design_matrix(data, ModelTarget::kMediator, config.structure);

  pair.outcome = config.types.outcome == VarKind::kBinary
                     ? fit_logistic_glmm(outcome_data, config.fit)
                     : fit_lmm(outcome_data, config.fit);
  if (!pair.outcome.converged) {
    throw std::runtime_error("outcome model did not converge: " +
                             pair.outcome.message);
  }
  pair.mediator = config.types.mediator == VarKind::kBinary
                      ? fit_logistic_glmm(mediator_data, config.fit)
                      : fit_lmm(mediator_data, config.fit);
  if (!pair.mediator.converged) {
    throw std::runtime_error("mediator model did not converge: " +
                             pair.mediator.message);
  }
  return pair;
}

MediationEstimates estimate(const MediationDataset& data,
                            const AnalysisConfig& config) {
  FittedModelPair pair = fit_models(data, config);
  CovariateProfile profile =
      config.profile ? *config.profile : median_profile(data);
  return evaluate_estimands(pair, data.design, profile, config.integrals);
}

}  // namespace swmediate
