#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "swmediate/design.hpp"

namespace swmediate {

enum class EffectStructure { kConstant, kExposureTime };

EffectStructure parse_structure(const std::string& name);
std::string structure_name(EffectStructure s);

enum class ModelTarget { kOutcome, kMediator };

// Where each coefficient lives in the design matrix. Period indicators
// replace a global intercept; the treatment block is a single column under
// the constant structure and one column per observable exposure level under
// the exposure-time structure.
struct ColumnRoles {
  int n_periods = 0;
  std::vector<int> period_cols;
  std::vector<int> treatment_cols;
  std::vector<int> exposure_levels;  // aligned with treatment_cols
  int mediator_col = -1;             // outcome model only
  std::vector<int> covariate_cols;
  std::vector<std::string> names;
  EffectStructure structure = EffectStructure::kConstant;
  ModelTarget target = ModelTarget::kOutcome;
};

struct ModelData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<int> cluster;  // dense cluster index per row
  int n_clusters = 0;        // design cluster count (indices may be sparse)
  ColumnRoles roles;
};

// Rows: records in included cells with outcome and mediator present.
// Throws when an exposure level the design says should carry data has no
// usable records (the period/exposure block would be rank deficient).
ModelData build_design_matrix(const MediationDataset& data,
                              ModelTarget target, EffectStructure structure);

struct FitOptions {
  bool use_reml = true;   // continuous-response models
  int quad_nodes = 15;    // adaptive quadrature nodes, 5..50
  int max_iterations = 200;
  double rel_tol = 1e-9;
  // model-based covariance of beta; skipped for jackknife replicate refits
  // where only the point estimates matter
  bool beta_covariance = true;
  std::optional<Eigen::VectorXd> beta_start;
  std::optional<double> variance_start;  // lambda for LMM, sigma for GLMM
  std::optional<double> fixed_random_sd; // pin the random-intercept sd
};

struct FittedModel {
  Eigen::VectorXd beta;
  ColumnRoles roles;
  double random_intercept_sd = 0.0;
  double residual_sd = std::numeric_limits<double>::quiet_NaN();
  double log_likelihood = 0.0;
  bool used_reml = false;
  int quad_nodes = 0;  // 0 for continuous fits
  bool converged = false;
  bool at_boundary = false;
  int iterations = 0;
  std::string message;
  Eigen::MatrixXd beta_cov;  // model-based covariance of beta

  double period_intercept(int period) const;
  // constant structure: the single effect; exposure structure: error
  double treatment_effect() const;
  // exposure structure: effect at exposure level e (error for unknown e);
  // constant structure ignores e
  double treatment_effect_at(int exposure) const;
  double mediator_coefficient() const;
  double covariate_contribution(const Eigen::VectorXd& x) const;
};

struct FittedModelPair {
  FittedModel outcome;
  FittedModel mediator;
  DataTypeSpec types;
  EffectStructure structure = EffectStructure::kConstant;
};

}  // namespace swmediate
