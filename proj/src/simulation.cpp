#include "swmediate/simulation.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "swmediate/math.hpp"
#include "swmediate/rng.hpp"
#include "swmediate/threading.hpp"

namespace swmediate {

std::vector<double> default_period_effects(int n_periods, double base) {
  if (n_periods < 2) {
    throw std::invalid_argument(
        "default_period_effects: needs at least two periods");
  }
  std::vector<double> v(n_periods, 0.0);
  double increment = base;
  for (int j = 1; j < n_periods; ++j) {
    v[j] = v[j - 1] + increment;
    increment *= 0.5;
  }
  return v;
}

double GeneratingParams::theta_at(int exposure) const {
  if (structure == EffectStructure::kConstant) return theta.at(0);
  for (std::size_t k = 0; k < exposure_levels.size(); ++k) {
    if (exposure_levels[k] == exposure) return theta[k];
  }
  throw std::invalid_argument("theta_at: unknown exposure level " +
                              std::to_string(exposure));
}

double GeneratingParams::eta_at(int exposure) const {
  if (structure == EffectStructure::kConstant) return eta.at(0);
  for (std::size_t k = 0; k < exposure_levels.size(); ++k) {
    if (exposure_levels[k] == exposure) return eta[k];
  }
  throw std::invalid_argument("eta_at: unknown exposure level " +
                              std::to_string(exposure));
}

namespace {

ColumnRoles synthetic_roles(const GeneratingParams& params,
                            ModelTarget target) {
  ColumnRoles roles;
  roles.structure = params.structure;
  roles.target = target;
  roles.n_periods = params.design.n_periods();
  int col = 0;
  for (int j = 1; j <= roles.n_periods; ++j) {
    roles.period_cols.push_back(col++);
    roles.names.push_back("period" + std::to_string(j));
  }
  if (params.structure == EffectStructure::kConstant) {
    roles.treatment_cols.push_back(col++);
    roles.exposure_levels.push_back(0);
    roles.names.push_back("treatment");
  } else {
    for (int e : params.exposure_levels) {
      roles.treatment_cols.push_back(col++);
      roles.exposure_levels.push_back(e);
      roles.names.push_back("exposure" + std::to_string(e));
    }
  }
  if (target == ModelTarget::kOutcome) {
    roles.mediator_col = col++;
    roles.names.push_back("mediator");
  }
  return roles;
}

}  // namespace

FittedModelPair synthetic_pair(const GeneratingParams& params) {
  FittedModelPair pair;
  pair.types = params.types;
  pair.structure = params.structure;

  FittedModel& out = pair.outcome;
  out.roles = synthetic_roles(params, ModelTarget::kOutcome);
  out.beta.resize(static_cast<Eigen::Index>(out.roles.names.size()));
  {
    Eigen::Index c = 0;
    for (double b : params.outcome_period_effects) out.beta(c++) = b;
    for (double t : params.theta) out.beta(c++) = t;
    out.beta(c++) = params.beta_m;
  }
  out.random_intercept_sd = params.outcome_random_sd;
  out.residual_sd = params.types.outcome == VarKind::kContinuous
                        ? params.outcome_residual_sd
                        : std::numeric_limits<double>::quiet_NaN();
  out.converged = true;
  out.message = "generating values";

  FittedModel& med = pair.mediator;
  med.roles = synthetic_roles(params, ModelTarget::kMediator);
  med.beta.resize(static_cast<Eigen::Index>(med.roles.names.size()));
  {
    Eigen::Index c = 0;
    for (double g : params.mediator_period_effects) med.beta(c++) = g;
    for (double e : params.eta) med.beta(c++) = e;
  }
  med.random_intercept_sd = params.mediator_random_sd;
  med.residual_sd = params.types.mediator == VarKind::kContinuous
                        ? params.mediator_residual_sd
                        : std::numeric_limits<double>::quiet_NaN();
  med.converged = true;
  med.message = "generating values";
  return pair;
}

MediationEstimates true_estimands(const GeneratingParams& params, int nodes) {
  CovariateProfile profile;
  profile.source = "none";
  return evaluate_estimands(synthetic_pair(params), params.design, profile,
                            EstimandOptions{IntegralMethod::kGhq, nodes});
}

namespace {

struct CalibrationQuad {
  double nie = 0.0;
  double nde = 0.0;
};

CalibrationQuad anchor_values(const GeneratingParams& params, int anchor) {
  MediationEstimates est = true_estimands(params, 64);
  if (anchor == 0) return {est.overall.nie, est.overall.nde};
  for (const auto& [j, q] : est.per_period) {
    if (j == anchor) return {q.nie, q.nde};
  }
  throw std::invalid_argument("calibration anchor period " +
                              std::to_string(anchor) +
                              " has no estimand (valid: 1.." +
                              std::to_string(params.design.n_periods()) +
                              " or 0 for the summary)");
}

std::string residual_text(double r_nie, double r_nde) {
  std::ostringstream os;
  os << "residual (" << r_nie << ", " << r_nde << ")";
  return os.str();
}

}  // namespace

GeneratingParams calibrate_coefficients(const SimulationScenario& scenario) {
  if (scenario.target_mp < 0.0 || scenario.target_mp >= 1.0) {
    throw std::invalid_argument(
        "calibrate_coefficients: target mediation proportion must lie in "
        "[0, 1)");
  }
  if (scenario.target_te == 0.0) {
    throw std::invalid_argument(
        "calibrate_coefficients: target total effect must be nonzero");
  }
  if (scenario.cell_size < 1) {
    throw std::invalid_argument("calibrate_coefficients: cell size >= 1");
  }

  GeneratingParams params{
      standard_design(scenario.n_clusters, scenario.n_periods,
                      scenario.implementation_gap),
      scenario.data_type};
  params.structure = scenario.structure;
  params.cell_size = scenario.cell_size;
  params.outcome_period_effects =
      scenario.outcome_period_effects.empty()
          ? default_period_effects(scenario.n_periods, 0.1)
          : scenario.outcome_period_effects;
  params.mediator_period_effects =
      scenario.mediator_period_effects.empty()
          ? default_period_effects(scenario.n_periods, 0.3)
          : scenario.mediator_period_effects;
  if (static_cast<int>(params.outcome_period_effects.size()) !=
          scenario.n_periods ||
      static_cast<int>(params.mediator_period_effects.size()) !=
          scenario.n_periods) {
    throw std::invalid_argument(
        "calibrate_coefficients: period-effect sequences must have one "
        "entry per period");
  }
  const bool yb = scenario.data_type.outcome == VarKind::kBinary;
  const bool mb = scenario.data_type.mediator == VarKind::kBinary;
  params.outcome_random_sd = scenario.outcome_random_sd >= 0.0
                                 ? scenario.outcome_random_sd
                                 : (yb ? 0.605 : 0.334);
  params.mediator_random_sd = scenario.mediator_random_sd >= 0.0
                                  ? scenario.mediator_random_sd
                                  : (mb ? 0.605 : 0.334);
  params.outcome_residual_sd = scenario.outcome_residual_sd;
  params.mediator_residual_sd = scenario.mediator_residual_sd;

  // treatment-effect shape over exposure levels: linear ramp normalized to
  // mean one, so the level summary of a linear estimand hits the base value
  std::vector<double> ramp{1.0};
  int anchor = scenario.calibration_anchor;
  if (scenario.structure == EffectStructure::kExposureTime) {
    params.exposure_levels = params.design.observable_exposure_levels();
    double mean_level = 0.0;
    for (int e : params.exposure_levels) mean_level += e;
    mean_level /= static_cast<double>(params.exposure_levels.size());
    ramp.assign(params.exposure_levels.size(), 0.0);
    for (std::size_t k = 0; k < ramp.size(); ++k) {
      ramp[k] = params.exposure_levels[k] / mean_level;
    }
    anchor = 0;  // the per-level law only pins down the summary
  } else if (anchor < 0 || anchor > scenario.n_periods) {
    throw std::invalid_argument(
        "calibrate_coefficients: anchor must be a calendar period or 0");
  }

  if (scenario.structure == EffectStructure::kExposureTime &&
      !scenario.eta_by_exposure.empty()) {
    if (scenario.eta_by_exposure.size() != params.exposure_levels.size()) {
      throw std::invalid_argument(
          "calibrate_coefficients: eta_by_exposure needs one entry per "
          "observable exposure level (" +
          std::to_string(params.exposure_levels.size()) + ")");
    }
    params.eta = scenario.eta_by_exposure;
  } else {
    params.eta.resize(ramp.size());
    for (std::size_t k = 0; k < ramp.size(); ++k) {
      params.eta[k] = scenario.eta * ramp[k];
    }
  }

  const double target_nie = scenario.target_mp * scenario.target_te;
  const double target_nde = (1.0 - scenario.target_mp) * scenario.target_te;

  auto with = [&](double theta_base, double beta_m) {
    GeneratingParams p = params;
    p.theta.resize(ramp.size());
    for (std::size_t k = 0; k < ramp.size(); ++k) {
      p.theta[k] = theta_base * ramp[k];
    }
    p.beta_m = beta_m;
    return p;
  };

  if (!yb) {
    // identity link: nde equals theta at every period and nie is linear in
    // beta_m, so both equations separate
    const double theta = target_nde;
    double beta_m = 0.0;
    if (target_nie != 0.0) {
      const double unit = anchor_values(with(theta, 1.0), anchor).nie;
      if (std::abs(unit) < 1e-12) {
        throw std::runtime_error(
            "calibrate_coefficients: the mediator path is flat (eta ~ 0); "
            "no beta_m reaches the indirect-effect target");
      }
      beta_m = target_nie / unit;
    }
    params = with(theta, beta_m);
    CalibrationQuad check = anchor_values(params, anchor);
    const double r_nie = check.nie - target_nie;
    const double r_nde = check.nde - target_nde;
    if (std::hypot(r_nie, r_nde) > 1e-10) {
      throw std::runtime_error(
          "calibrate_coefficients: closed form failed to verify; " +
          residual_text(r_nie, r_nde));
    }
    return params;
  }

  // binary outcome: solve the two logit-scale equations jointly
  auto residual = [&](double theta_base, double beta_m) {
    CalibrationQuad q = anchor_values(with(theta_base, beta_m), anchor);
    return std::array<double, 2>{q.nie - target_nie, q.nde - target_nde};
  };
  double theta = target_nde;
  double beta_m = scenario.eta != 0.0 ? target_nie / scenario.eta : 0.0;

  auto norm2 = [](const std::array<double, 2>& r) {
    return std::hypot(r[0], r[1]);
  };
  std::array<double, 2> r = residual(theta, beta_m);
  bool solved = norm2(r) < 1e-10;
  for (int iter = 0; iter < 100 && !solved; ++iter) {
    const double h_t = 1e-6 * std::max(1.0, std::abs(theta));
    const double h_b = 1e-6 * std::max(1.0, std::abs(beta_m));
    std::array<double, 2> rtp = residual(theta + h_t, beta_m);
    std::array<double, 2> rtm = residual(theta - h_t, beta_m);
    std::array<double, 2> rbp = residual(theta, beta_m + h_b);
    std::array<double, 2> rbm = residual(theta, beta_m - h_b);
    Eigen::Matrix2d jac;
    jac << (rtp[0] - rtm[0]) / (2.0 * h_t), (rbp[0] - rbm[0]) / (2.0 * h_b),
        (rtp[1] - rtm[1]) / (2.0 * h_t), (rbp[1] - rbm[1]) / (2.0 * h_b);
    Eigen::Vector2d step = jac.partialPivLu().solve(Eigen::Vector2d(r[0], r[1]));
    if (!step.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int back = 0; back < 30; ++back) {
      std::array<double, 2> rn =
          residual(theta - t * step(0), beta_m - t * step(1));
      if (norm2(rn) < (1.0 - 1e-4 * t) * norm2(r)) {
        theta -= t * step(0);
        beta_m -= t * step(1);
        r = rn;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    solved = norm2(r) < 1e-10;
  }

  if (!solved) {
    // fallback: the direct equation is monotone in theta at fixed beta_m,
    // and the indirect equation in beta_m once theta tracks it
    auto theta_for = [&](double bm) {
      auto f = [&](double th) { return residual(th, bm)[1]; };
      double lo = target_nde - 1.0, hi = target_nde + 1.0, step = 1.0;
      while (f(lo) > 0.0) {
        lo -= step;
        step *= 2.0;
        if (lo < -60.0) {
          throw std::runtime_error(
              "calibrate_coefficients: no theta bracket; " +
              residual_text(r[0], r[1]));
        }
      }
      step = 1.0;
      while (f(hi) < 0.0) {
        hi += step;
        step *= 2.0;
        if (hi > 60.0) {
          throw std::runtime_error(
              "calibrate_coefficients: no theta bracket; " +
              residual_text(r[0], r[1]));
        }
      }
      for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo));
           ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) <= 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    auto g = [&](double bm) { return residual(theta_for(bm), bm)[0]; };
    double blo = beta_m, bhi = beta_m, glo = g(blo), ghi = glo;
    bool bracketed = false;
    for (double d = 0.5; d <= 64.0; d *= 2.0) {
      blo = beta_m - d;
      bhi = beta_m + d;
      glo = g(blo);
      ghi = g(bhi);
      if (glo * ghi <= 0.0) {
        bracketed = true;
        break;
      }
    }
    if (!bracketed) {
      throw std::runtime_error(
          "calibrate_coefficients: root finding failed; " +
          residual_text(r[0], r[1]));
    }
    for (int it = 0;
         it < 200 && bhi - blo > 1e-14 * std::max(1.0, std::abs(blo)); ++it) {
      const double mid = 0.5 * (blo + bhi);
      if (glo * g(mid) <= 0.0) bhi = mid;
      else {
        blo = mid;
        glo = g(blo);
      }
    }
    beta_m = 0.5 * (blo + bhi);
    theta = theta_for(beta_m);
    r = residual(theta, beta_m);
    if (norm2(r) > 1e-10) {
      throw std::runtime_error(
          "calibrate_coefficients: root finding failed; " +
          residual_text(r[0], r[1]));
    }
  }
  return with(theta, beta_m);
}

MediationDataset generate(const GeneratingParams& params, std::uint32_t seed,
                          std::uint32_t replicate) {
  const TrialDesign& design = params.design;
  const bool yb = params.types.outcome == VarKind::kBinary;
  const bool mb = params.types.mediator == VarKind::kBinary;
  MediationDataset data{design, {}, {}, {}};
  data.records.reserve(static_cast<std::size_t>(design.n_clusters()) *
                       design.n_periods() * params.cell_size);
  for (int i = 0; i < design.n_clusters(); ++i) {
    data.cluster_labels.push_back(std::to_string(i + 1));
    RngStream stream(seed, 0u, replicate, static_cast<std::uint32_t>(i));
    const double tau = stream.normal(0.0, params.mediator_random_sd);
    const double alpha = stream.normal(0.0, params.outcome_random_sd);
    for (int j = 1; j <= design.n_periods(); ++j) {
      if (!design.included(i, j)) continue;
      const bool treated = design.treated(i, j);
      const double eta_cell =
          treated ? params.eta_at(design.exposure_time(i, j)) : 0.0;
      const double theta_cell =
          treated ? params.theta_at(design.exposure_time(i, j)) : 0.0;
      const double m_mean =
          params.mediator_period_effects[j - 1] + eta_cell + tau;
      for (int k = 0; k < params.cell_size; ++k) {
        IndividualRecord rec;
        rec.cluster = i;
        rec.period = j;
        const double m =
            mb ? (stream.bernoulli(expit(m_mean)) ? 1.0 : 0.0)
               : m_mean + stream.normal(0.0, params.mediator_residual_sd);
        const double y_lin = params.outcome_period_effects[j - 1] +
                             theta_cell + params.beta_m * m + alpha;
        const double y =
            yb ? (stream.bernoulli(expit(y_lin)) ? 1.0 : 0.0)
               : y_lin + stream.normal(0.0, params.outcome_residual_sd);
        rec.mediator = m;
        rec.outcome = y;
        data.records.push_back(rec);
      }
    }
  }
  return data;
}

SimulationReport run_study(const SimulationScenario& scenario) {
  if (scenario.n_replications < 1) {
    throw std::invalid_argument("run_study: needs at least one replication");
  }
  if (scenario.methods.empty()) {
    throw std::invalid_argument("run_study: needs at least one method");
  }

  SimulationReport report{calibrate_coefficients(scenario)};
  report.n_replications = scenario.n_replications;
  const TrialDesign& design = report.params.design;

  // truth: calibration targets for the overall rows, the generating law for
  // period- and exposure-specific rows
  MediationEstimates truth_est = true_estimands(report.params, 64);
  auto truth_rows = flatten_targets(truth_est);
  const std::size_t n_targets = truth_rows.size();
  for (auto& [key, value] : truth_rows) {
    if (key.level != TargetLevel::kOverall) continue;
    if (key.measure == "nie") value = scenario.target_mp * scenario.target_te;
    if (key.measure == "nde") {
      value = (1.0 - scenario.target_mp) * scenario.target_te;
    }
    if (key.measure == "te") value = scenario.target_te;
    if (key.measure == "mp") value = scenario.target_mp;
  }

  AnalysisConfig config;
  config.types = scenario.data_type;
  config.structure = scenario.structure;
  config.fit.use_reml = scenario.use_reml;
  config.fit.quad_nodes = scenario.fit_nodes;
  config.fit.beta_covariance = false;

  const std::size_t n_methods = scenario.methods.size();
  const std::size_t stride = n_methods * n_targets;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> estimates(scenario.n_replications * stride, nan);
  std::vector<double> ses(scenario.n_replications * stride, nan);
  std::vector<char> failed(scenario.n_replications, 0);

  parallel_for(scenario.n_replications, [&](long rep) {
    try {
      MediationDataset data = generate(report.params, scenario.rng_seed,
                                       static_cast<std::uint32_t>(rep));
      double* est_row = estimates.data() + rep * stride;
      double* se_row = ses.data() + rep * stride;
      if (scenario.use_jackknife) {
        FitSet fits = fit_all_replicates(data, config);
        for (std::size_t m = 0; m < n_methods; ++m) {
          InferenceResult res = jackknife_from_fits(
              fits, design,
              EstimandOptions{scenario.methods[m], scenario.eval_nodes});
          if (res.keys.size() != n_targets) {
            throw std::runtime_error("replicate target set mismatch");
          }
          for (std::size_t t = 0; t < n_targets; ++t) {
            if (!(res.keys[t] == truth_rows[t].first)) {
              throw std::runtime_error("replicate target set mismatch");
            }
            est_row[m * n_targets + t] = res.intervals[t].estimate;
            if (res.intervals[t].se_defined) {
              se_row[m * n_targets + t] = res.intervals[t].se;
            }
          }
        }
      } else {
        FittedModelPair pair = fit_models(data, config);
        CovariateProfile profile = median_profile(data);
        for (std::size_t m = 0; m < n_methods; ++m) {
          MediationEstimates est = evaluate_estimands(
              pair, design,
              profile,
              EstimandOptions{scenario.methods[m], scenario.eval_nodes});
          auto rows = flatten_targets(est);
          if (rows.size() != n_targets) {
            throw std::runtime_error("replicate target set mismatch");
          }
          for (std::size_t t = 0; t < n_targets; ++t) {
            est_row[m * n_targets + t] = rows[t].second;
          }
        }
      }
    } catch (const std::exception&) {
      failed[rep] = 1;
    }
  });

  for (int rep = 0; rep < scenario.n_replications; ++rep) {
    if (failed[rep]) report.failed_replicates.push_back(rep);
  }
  report.n_failed = static_cast<int>(report.failed_replicates.size());
  report.failure_flagged =
      report.n_failed * 20 > scenario.n_replications;  // > 5%

  boost::math::students_t_distribution<double> tdist(design.n_clusters() -
                                                     1.0);
  const double t_crit = boost::math::quantile(tdist, 0.975);

  for (std::size_t m = 0; m < n_methods; ++m) {
    MethodReport method_report;
    method_report.method = scenario.methods[m];
    for (std::size_t t = 0; t < n_targets; ++t) {
      TargetSummary row;
      row.key = truth_rows[t].first;
      row.truth = truth_rows[t].second;
      double sum = 0.0;
      int n_est = 0;
      for (int rep = 0; rep < scenario.n_replications; ++rep) {
        if (failed[rep]) continue;
        const double est = estimates[rep * stride + m * n_targets + t];
        if (!std::isfinite(est)) continue;
        sum += est;
        ++n_est;
      }
      row.n_estimates = n_est;
      if (n_est > 0) {
        row.mean_estimate = sum / n_est;
        if (row.truth != 0.0) {
          row.bias_percent =
              (row.mean_estimate - row.truth) / row.truth * 100.0;
        }
        if (n_est > 1) {
          double ss = 0.0;
          for (int rep = 0; rep < scenario.n_replications; ++rep) {
            if (failed[rep]) continue;
            const double est = estimates[rep * stride + m * n_targets + t];
            if (!std::isfinite(est)) continue;
            ss += (est - row.mean_estimate) * (est - row.mean_estimate);
          }
          row.mcsd = std::sqrt(ss / (n_est - 1));
        }
      }
      double se_sum = 0.0;
      int n_se = 0, n_cover = 0;
      for (int rep = 0; rep < scenario.n_replications; ++rep) {
        if (failed[rep]) continue;
        const double est = estimates[rep * stride + m * n_targets + t];
        const double se = ses[rep * stride + m * n_targets + t];
        if (!std::isfinite(est) || !std::isfinite(se)) continue;
        se_sum += se;
        ++n_se;
        if (std::abs(est - row.truth) <= t_crit * se) ++n_cover;
      }
      row.n_ses = n_se;
      if (n_se > 0) {
        row.aese = se_sum / n_se;
        row.coverage_percent = 100.0 * n_cover / n_se;
      }
      method_report.targets.push_back(std::move(row));
    }
    report.methods.push_back(std::move(method_report));
  }
  return report;
}

HeterogeneityStudy run_heterogeneity_study(const SimulationScenario& scenario,
                                           double alpha) {
  GeneratingParams params = calibrate_coefficients(scenario);
  const TrialDesign& design = params.design;

  AnalysisConfig config;
  config.types = scenario.data_type;
  config.structure = EffectStructure::kExposureTime;
  config.fit.use_reml = scenario.use_reml;
  config.fit.quad_nodes = scenario.fit_nodes;
  config.fit.beta_covariance = false;

  HeterogeneityStudy study;
  study.n_replications = scenario.n_replications;
  study.alpha = alpha;
  std::vector<char> failed(scenario.n_replications, 0);
  std::vector<char> rejected(scenario.n_replications, 0);
  parallel_for(scenario.n_replications, [&](long rep) {
    try {
      MediationDataset data = generate(params, scenario.rng_seed,
                                       static_cast<std::uint32_t>(rep));
      FitSet fits = fit_all_replicates(data, config);
      if (!fits.failed_clusters.empty()) {
        throw std::runtime_error("jackknife replicate failed");
      }
      HeterogeneityTest het = heterogeneity_from_fits(
          fits, design,
          EstimandOptions{IntegralMethod::kGhq, scenario.eval_nodes});
      rejected[rep] = het.p_value < alpha ? 1 : 0;
    } catch (const std::exception&) {
      failed[rep] = 1;
    }
  });
  for (int rep = 0; rep < scenario.n_replications; ++rep) {
    if (failed[rep]) ++study.n_failed;
    else if (rejected[rep]) ++study.n_rejections;
  }
  const int n_ok = study.n_replications - study.n_failed;
  if (n_ok > 0) {
    study.rejection_rate = static_cast<double>(study.n_rejections) / n_ok;
  }
  return study;
}

}  // namespace swmediate
