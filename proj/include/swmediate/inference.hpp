#pragma once

#include "swmediate/estimands.hpp"

namespace swmediate {

enum class TargetLevel { kOverall, kPeriod, kExposure };

struct TargetKey {
  TargetLevel level = TargetLevel::kOverall;
  int index = 0;  // calendar period or exposure level; 0 for overall
  std::string measure;  // "nie", "nde", "te", "mp"

  bool operator==(const TargetKey&) const = default;
};

std::string target_level_name(TargetLevel level);

// The inference targets of an estimate in a fixed order: overall first, then
// per-period (constant) or per-exposure (exposure-time), four measures each.
std::vector<std::pair<TargetKey, double>> flatten_targets(
    const MediationEstimates& est);

// All model fits needed for delete-one-cluster inference: the full-sample
// pair plus one pair per left-out cluster, each warm started from the full
// fit. Estimand evaluation is separate so several integral methods can share
// one set of fits.
struct FitSet {
  FittedModelPair full;
  std::vector<std::optional<FittedModelPair>> leave_one_out;
  std::vector<int> failed_clusters;
  CovariateProfile profile;  // full-sample profile, frozen across replicates
};

FitSet fit_all_replicates(const MediationDataset& data,
                          const AnalysisConfig& config);

struct JackknifeInterval {
  double estimate = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  bool se_defined = false;
};

struct InferenceResult {
  MediationEstimates full;
  std::vector<TargetKey> keys;
  std::vector<JackknifeInterval> intervals;  // aligned with keys
  std::vector<int> failed_clusters;
  int n_clusters = 0;
  double t_critical = 0.0;  // t_{I-1, 0.975}
};

// Delete-one-cluster jackknife over every inference target. When any
// replicate fails to refit, standard errors are reported missing and the
// failing clusters are listed; nothing is silently dropped.
InferenceResult jackknife(const MediationDataset& data,
                          const AnalysisConfig& config);
InferenceResult jackknife_from_fits(const FitSet& fits,
                                    const TrialDesign& design,
                                    const EstimandOptions& opts);

struct HeterogeneityTest {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  Eigen::VectorXd contrasts;  // TE(first level) - TE(e) at the profile
  std::vector<int> exposure_levels;
  bool covariance_rank_deficient = false;
  int covariance_rank = 0;
  std::vector<int> failed_clusters;
  std::string description;
};

// Tests constancy of the total effect over exposure time: the contrast
// vector stacks TE(first observable level) - TE(e) for the remaining levels,
// its covariance comes from the same delete-one-cluster replicates, and the
// statistic is referred to chi-squared with (levels - 1) degrees of freedom.
// A singular covariance falls back to the pseudo-inverse and is flagged.
HeterogeneityTest heterogeneity_test(const MediationDataset& data,
                                     const AnalysisConfig& config);
HeterogeneityTest heterogeneity_from_fits(const FitSet& fits,
                                          const TrialDesign& design,
                                          const EstimandOptions& opts);

}  // namespace swmediate
