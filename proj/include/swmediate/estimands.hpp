#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "swmediate/model.hpp"

namespace swmediate {

enum class IntegralMethod { kGhq, kSta };

IntegralMethod parse_method(const std::string& name);
std::string method_name(IntegralMethod m);

struct EstimandOptions {
  IntegralMethod method = IntegralMethod::kGhq;
  int nodes = 64;
};

struct CovariateProfile {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  std::string source = "median";
};

// Component-wise median over the analysis records; binary columns take the
// sample mode with ties broken toward 0.
CovariateProfile median_profile(const MediationDataset& data);

// One cell's mediation measures on the outcome link scale. te = nie + nde by
// construction; mp = nie/te is reported unclamped, with a flag when te sits
// within 1e-8 of zero and mp_defined = false when te is exactly zero.
struct EffectQuad {
  double nie = 0.0;
  double nde = 0.0;
  double te = 0.0;
  double mp = 0.0;
  bool mp_defined = true;
  bool te_near_zero = false;
};

EffectQuad make_effect_quad(double nie, double nde);

struct MediationEstimates {
  EffectStructure structure = EffectStructure::kConstant;
  IntegralMethod method = IntegralMethod::kGhq;
  int nodes = 64;
  CovariateProfile profile;
  // constant structure: one entry per calendar period j = 1..J
  std::vector<std::pair<int, EffectQuad>> per_period;
  // exposure structure: one entry per eligible cell (j, e), then per level e
  std::vector<std::tuple<int, int, EffectQuad>> per_cell;
  std::vector<std::pair<int, EffectQuad>> per_exposure;
  EffectQuad overall;
  // NIE(x)/TE(x) from the weighted sums; with uniform weights it coincides
  // with the TE-share-weighted mp, both are surfaced
  double mp_ratio_of_sums = 0.0;
};

// Period-specific measures under the constant treatment-effect structure.
// Continuous outcomes give mean differences; binary outcomes give marginal
// log odds ratios assembled from the logistic-normal integrals.
EffectQuad nie_nde_constant(const FittedModelPair& fit, int period,
                            const CovariateProfile& profile,
                            const EstimandOptions& opts);

// Cell-specific measures under the exposure-time structure; requires
// exposure >= 1 and exposure <= period - 1.
EffectQuad nie_nde_exposure(const FittedModelPair& fit, int period,
                            int exposure, const CovariateProfile& profile,
                            const EstimandOptions& opts);

// Uniform weights 1/J over periods; the summary mp is TE-share weighted.
EffectQuad summarize_constant(
    const std::vector<std::pair<int, EffectQuad>>& per_period);

struct ExposureSummary {
  std::vector<std::pair<int, EffectQuad>> per_exposure;
  EffectQuad overall;
};

// Per-level summaries average uniformly over each level's eligible calendar
// periods (derived from the design's inclusion mask); the overall summary
// averages uniformly over levels, with TE-share weights for mp.
ExposureSummary summarize_exposure(
    const std::vector<std::tuple<int, int, EffectQuad>>& per_cell,
    const TrialDesign& design);

// Estimands from an already-fitted pair (no data access).
MediationEstimates evaluate_estimands(const FittedModelPair& fit,
                                      const TrialDesign& design,
                                      const CovariateProfile& profile,
                                      const EstimandOptions& opts);

struct AnalysisConfig {
  DataTypeSpec types;
  EffectStructure structure = EffectStructure::kConstant;
  EstimandOptions integrals;
  FitOptions fit;
  std::optional<CovariateProfile> profile;
};

FittedModelPair fit_models(const MediationDataset& data,
                           const AnalysisConfig& config);

// Fit both models and evaluate every level of the mediation estimands.
// Throws on non-convergence of either model.
MediationEstimates estimate(const MediationDataset& data,
                            const AnalysisConfig& config);

}  // namespace swmediate
