#include "swmediate/inference.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <stdexcept>

#include "swmediate/glmm.hpp"
#include "swmediate/lmm.hpp"
#include "swmediate/threading.hpp"

namespace swmediate {

std::string target_level_name(TargetLevel level) {
  switch (level) {
    case TargetLevel::kOverall: return "overall";
    case TargetLevel::kPeriod: return "period";
    case TargetLevel::kExposure: return "exposure";
  }
  return "?";
}

namespace {

void push_quad(std::vector<std::pair<TargetKey, double>>& out,
               TargetLevel level, int index, const EffectQuad& q) {
  out.push_back({{level, index, "nie"}, q.nie});
  out.push_back({{level, index, "nde"}, q.nde});
  out.push_back({{level, index, "te"}, q.te});
  out.push_back({{level, index, "mp"},
                 q.mp_defined ? q.mp
                              : std::numeric_limits<double>::quiet_NaN()});
}

}  // namespace

std::vector<std::pair<TargetKey, double>> flatten_targets(
    const MediationEstimates& est) {
  std::vector<std::pair<TargetKey, double>> out;
  push_quad(out, TargetLevel::kOverall, 0, est.overall);
  if (est.structure == EffectStructure::kConstant) {
    for (const auto& [j, q] : est.per_period) {
      push_quad(out, TargetLevel::kPeriod, j, q);
    }
  } else {
    for (const auto& [e, q] : est.per_exposure) {
      push_quad(out, TargetLevel::kExposure, e, q);
    }
  }
  return out;
}

FitSet fit_all_replicates(const MediationDataset& data,
                          const AnalysisConfig& config) {
  FitSet set;
  set.profile = config.profile ? *config.profile : median_profile(data);

  ModelData outcome_data =
      build_design_matrix(data, ModelTarget::kOutcome, config.structure);
  ModelData mediator_data =
      build_design_matrix(data, ModelTarget::kMediator, config.structure);
  const bool yb = config.types.outcome == VarKind::kBinary;
  const bool mb = config.types.mediator == VarKind::kBinary;

  // reusable per-cluster blocks; a leave-one-out refit skips one cluster
  std::optional<LmmWorkspace> outcome_ws, mediator_ws;
  std::optional<GlmmBlocks> outcome_blocks, mediator_blocks;
  if (yb) outcome_blocks = GlmmBlocks::build(outcome_data);
  else outcome_ws = LmmWorkspace::build(outcome_data);
  if (mb) mediator_blocks = GlmmBlocks::build(mediator_data);
  else mediator_ws = LmmWorkspace::build(mediator_data);

  auto fit_one = [&](int exclude, const FitOptions& opts_outcome,
                     const FitOptions& opts_mediator) {
    FittedModelPair pair;
    pair.types = config.types;
    pair.structure = config.structure;
    pair.outcome = yb ? fit_glmm_blocks(*outcome_blocks, exclude, opts_outcome)
                      : fit_lmm_workspace(*outcome_ws, exclude, opts_outcome);
    if (!pair.outcome.converged) {
      throw std::runtime_error("outcome model did not converge: " +
                               pair.outcome.message);
    }
    pair.mediator =
        mb ? fit_glmm_blocks(*mediator_blocks, exclude, opts_mediator)
           : fit_lmm_workspace(*mediator_ws, exclude, opts_mediator);
    if (!pair.mediator.converged) {
      throw std::runtime_error("mediator model did not converge: " +
                               pair.mediator.message);
    }
    return pair;
  };

  set.full = fit_one(-1, config.fit, config.fit);

  // warm starts: full-sample coefficients and variance parameters
  FitOptions warm_outcome = config.fit;
  warm_outcome.beta_covariance = false;
  warm_outcome.beta_start = set.full.outcome.beta;
  if (yb) {
    if (!set.full.outcome.at_boundary) {
      warm_outcome.variance_start = set.full.outcome.random_intercept_sd;
    }
  } else if (set.full.outcome.residual_sd > 0.0) {
    const double lam = set.full.outcome.random_intercept_sd *
                       set.full.outcome.random_intercept_sd /
                       (set.full.outcome.residual_sd *
                        set.full.outcome.residual_sd);
    if (lam > 0.0) warm_outcome.variance_start = lam;
  }
  FitOptions warm_mediator = config.fit;
  warm_mediator.beta_covariance = false;
  warm_mediator.beta_start = set.full.mediator.beta;
  if (mb) {
    if (!set.full.mediator.at_boundary) {
      warm_mediator.variance_start = set.full.mediator.random_intercept_sd;
    }
  } else if (set.full.mediator.residual_sd > 0.0) {
    const double lam = set.full.mediator.random_intercept_sd *
                       set.full.mediator.random_intercept_sd /
                       (set.full.mediator.residual_sd *
                        set.full.mediator.residual_sd);
    if (lam > 0.0) warm_mediator.variance_start = lam;
  }

  const int n_clusters = data.design.n_clusters();
  set.leave_one_out.resize(n_clusters);
  std::vector<char> failed(n_clusters, 0);
  parallel_for(n_clusters, [&](long i) {
    try {
      set.leave_one_out[i] =
          fit_one(static_cast<int>(i), warm_outcome, warm_mediator);
    } catch (const std::exception&) {
      failed[i] = 1;
    }
  });
  for (int i = 0; i < n_clusters; ++i) {
    if (failed[i]) set.failed_clusters.push_back(i);
  }
  return set;
}

InferenceResult jackknife_from_fits(const FitSet& fits,
                                    const TrialDesign& design,
                                    const EstimandOptions& opts) {
  InferenceResult res;
  res.full = evaluate_estimands(fits.full, design, fits.profile, opts);
  res.failed_clusters = fits.failed_clusters;
  res.n_clusters = design.n_clusters();

  auto full_flat = flatten_targets(res.full);
  const std::size_t n_targets = full_flat.size();
  res.keys.reserve(n_targets);
  for (const auto& [key, value] : full_flat) res.keys.push_back(key);

  const double n = static_cast<double>(res.n_clusters);
  boost::math::students_t_distribution<double> tdist(n - 1.0);
  res.t_critical = boost::math::quantile(tdist, 0.975);

  const bool usable = fits.failed_clusters.empty() && res.n_clusters >= 2;
  std::vector<std::vector<double>> rep_values;
  if (usable) {
    rep_values.reserve(fits.leave_one_out.size());
    for (const auto& pair : fits.leave_one_out) {
      auto flat = evaluate_estimands(*pair, design, fits.profile, opts);
      auto rows = flatten_targets(flat);
      std::vector<double> vals(n_targets);
      for (std::size_t k = 0; k < n_targets; ++k) vals[k] = rows[k].second;
      rep_values.push_back(std::move(vals));
    }
  }

  res.intervals.resize(n_targets);
  for (std::size_t k = 0; k < n_targets; ++k) {
    JackknifeInterval& ji = res.intervals[k];
    ji.estimate = full_flat[k].second;
    if (!usable) continue;
    double mean = 0.0;
    bool finite = std::isfinite(ji.estimate);
    for (const auto& rep : rep_values) {
      mean += rep[k];
      finite = finite && std::isfinite(rep[k]);
    }
    if (!finite) continue;  // undefined mp in some replicate: no se
    mean /= n;
    double ss = 0.0;
    for (const auto& rep : rep_values) {
      ss += (rep[k] - mean) * (rep[k] - mean);
    }
    ji.se = std::sqrt((n - 1.0) / n * ss);
    ji.ci_low = ji.estimate - res.t_critical * ji.se;
    ji.ci_high = ji.estimate + res.t_critical * ji.se;
    ji.se_defined = true;
  }
  return res;
}

InferenceResult jackknife(const MediationDataset& data,
                          const AnalysisConfig& config) {
  FitSet fits = fit_all_replicates(data, config);
  return jackknife_from_fits(fits, data.design, config.integrals);
}

HeterogeneityTest heterogeneity_from_fits(const FitSet& fits,
                                          const TrialDesign& design,
                                          const EstimandOptions& opts) {
  if (fits.full.structure != EffectStructure::kExposureTime) {
    throw std::invalid_argument(
        "heterogeneity_test: requires the exposure-time structure");
  }
  MediationEstimates full =
      evaluate_estimands(fits.full, design, fits.profile, opts);
  const std::size_t n_levels = full.per_exposure.size();
  if (n_levels < 2) {
    throw std::invalid_argument(
        "heterogeneity_test: needs at least two exposure levels");
  }
  const int d = static_cast<int>(n_levels) - 1;

  auto contrast_vector = [&](const MediationEstimates& est) {
    Eigen::VectorXd s(d);
    const double te_first = est.per_exposure.front().second.te;
    for (int k = 0; k < d; ++k) {
      s(k) = te_first - est.per_exposure[k + 1].second.te;
    }
    return s;
  };

  HeterogeneityTest test;
  test.df = d;
  test.contrasts = contrast_vector(full);
  for (const auto& [e, q] : full.per_exposure) {
    test.exposure_levels.push_back(e);
  }
  test.failed_clusters = fits.failed_clusters;
  test.description = "TE(" + std::to_string(test.exposure_levels.front()) +
                     "|x*) - TE(e|x*) for the remaining exposure levels, "
                     "covariance by delete-one-cluster jackknife";

  std::vector<Eigen::VectorXd> reps;
  for (std::size_t i = 0; i < fits.leave_one_out.size(); ++i) {
    if (!fits.leave_one_out[i]) continue;
    reps.push_back(contrast_vector(evaluate_estimands(
        *fits.leave_one_out[i], design, fits.profile, opts)));
  }
  if (reps.size() < 2) {
    throw std::runtime_error(
        "heterogeneity_test: not enough successful replicates");
  }
  const double n = static_cast<double>(reps.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : reps) mean += s;
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : reps) {
    cov.noalias() += (s - mean) * (s - mean).transpose();
  }
  cov *= (n - 1.0) / n;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      cov, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double tol =
      1e-12 * std::max(1.0, svd.singularValues().maxCoeff());
  int rank = 0;
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < d; ++k) {
    if (svd.singularValues()(k) > tol) {
      inv_sv(k) = 1.0 / svd.singularValues()(k);
      ++rank;
    }
  }
  test.covariance_rank = rank;
  test.covariance_rank_deficient = rank < d;
  Eigen::MatrixXd pinv = svd.matrixV() * inv_sv.asDiagonal() *
                         svd.matrixU().transpose();
  test.statistic = test.contrasts.dot(pinv * test.contrasts);
  boost::math::chi_squared_distribution<double> chi2(
      static_cast<double>(test.df));
  test.p_value = boost::math::cdf(boost::math::complement(
      chi2, std::max(0.0, test.statistic)));
  return test;
}

HeterogeneityTest heterogeneity_test(const MediationDataset& data,
                                     const AnalysisConfig& config) {
  if (config.structure != EffectStructure::kExposureTime) {
    throw std::invalid_argument(
        "heterogeneity_test: requires the exposure-time structure");
  }
  FitSet fits = fit_all_replicates(data, config);
  return heterogeneity_from_fits(fits, data.design, config.integrals);
}

}  // namespace swmediate
