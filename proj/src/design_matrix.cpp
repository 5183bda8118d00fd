#include <algorithm>
#include <stdexcept>

#include "swmediate/model.hpp"

namespace swmediate {

EffectStructure parse_structure(const std::string& name) {
  if (name == "constant") return EffectStructure::kConstant;
  if (name == "exposure") return EffectStructure::kExposureTime;
  throw std::invalid_argument("unknown effect structure: " + name);
}

std::string structure_name(EffectStructure s) {
  return s == EffectStructure::kConstant ? "constant" : "exposure";
}

ModelData build_design_matrix(const MediationDataset& data, ModelTarget target,
                              EffectStructure structure) {
  const TrialDesign& design = data.design;
  const int n_periods = design.n_periods();

  std::vector<std::size_t> rows;
  rows.reserve(data.records.size());
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    const IndividualRecord& rec = data.records[r];
    if (rec.period < 1 || rec.period > n_periods || rec.cluster < 0 ||
        rec.cluster >= design.n_clusters()) {
      throw std::invalid_argument(
          "build_design_matrix: record outside the design grid (run "
          "validate_dataset first)");
    }
    if (!design.included(rec.cluster, rec.period)) continue;
    if (!rec.outcome || !rec.mediator) {
      throw std::invalid_argument(
          "build_design_matrix: missing outcome/mediator in included cell");
    }
    rows.push_back(r);
  }
  if (rows.empty()) {
    throw std::invalid_argument("build_design_matrix: no usable records");
  }

  std::vector<int> levels;
  if (structure == EffectStructure::kExposureTime) {
    levels = design.observable_exposure_levels();
    if (levels.empty()) {
      throw std::invalid_argument(
          "build_design_matrix: design has no treated cells, exposure-time "
          "structure not fittable");
    }
    // every structurally observable level must actually carry data
    for (int e : levels) {
      bool seen = false;
      for (std::size_t r : rows) {
        const IndividualRecord& rec = data.records[r];
        if (design.exposure_time(rec.cluster, rec.period) == e) {
          seen = true;
          break;
        }
      }
      if (!seen) {
        throw std::invalid_argument(
            "build_design_matrix: exposure level " + std::to_string(e) +
            " has zero treated records; its effect column is rank deficient");
      }
    }
  }

  ColumnRoles roles;
  roles.n_periods = n_periods;
  roles.structure = structure;
  roles.target = target;
  int col = 0;
  for (int j = 1; j <= n_periods; ++j) {
    roles.period_cols.push_back(col++);
    roles.names.push_back("period_" + std::to_string(j));
  }
  if (structure == EffectStructure::kConstant) {
    roles.treatment_cols.push_back(col++);
    roles.exposure_levels.push_back(0);
    roles.names.push_back("treatment");
  } else {
    for (int e : levels) {
      roles.treatment_cols.push_back(col++);
      roles.exposure_levels.push_back(e);
      roles.names.push_back("exposure_" + std::to_string(e));
    }
  }
  if (target == ModelTarget::kOutcome) {
    roles.mediator_col = col++;
    roles.names.push_back("mediator");
  }
  for (const std::string& name : data.covariate_names) {
    roles.covariate_cols.push_back(col++);
    roles.names.push_back(name);
  }

  ModelData out;
  out.roles = roles;
  out.n_clusters = design.n_clusters();
  out.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), col);
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.cluster.resize(rows.size());

  for (std::size_t k = 0; k < rows.size(); ++k) {
    const IndividualRecord& rec = data.records[rows[k]];
    const Eigen::Index i = static_cast<Eigen::Index>(k);
    out.cluster[k] = rec.cluster;
    out.x(i, roles.period_cols[rec.period - 1]) = 1.0;
    if (design.treated(rec.cluster, rec.period)) {
      if (structure == EffectStructure::kConstant) {
        out.x(i, roles.treatment_cols[0]) = 1.0;
      } else {
        int e = design.exposure_time(rec.cluster, rec.period);
        auto it = std::find(levels.begin(), levels.end(), e);
        out.x(i, roles.treatment_cols[it - levels.begin()]) = 1.0;
      }
    }
    if (target == ModelTarget::kOutcome) {
      out.x(i, roles.mediator_col) = *rec.mediator;
      out.y(i) = *rec.outcome;
    } else {
      out.y(i) = *rec.mediator;
    }
    for (std::size_t c = 0; c < rec.covariates.size(); ++c) {
      out.x(i, roles.covariate_cols[c]) = rec.covariates[c];
    }
  }
  return out;
}

double FittedModel::period_intercept(int period) const {
  if (period < 1 || period > roles.n_periods) {
    throw std::out_of_range("period outside 1..J");
  }
  return beta(roles.period_cols[period - 1]);
}

double FittedModel::treatment_effect() const {
  if (roles.structure != EffectStructure::kConstant) {
    throw std::logic_error(
        "treatment_effect(): model uses exposure-time structure, pass the "
        "exposure level");
  }
  return beta(roles.treatment_cols[0]);
}

double FittedModel::treatment_effect_at(int exposure) const {
  if (roles.structure == EffectStructure::kConstant) {
    return beta(roles.treatment_cols[0]);
  }
  for (std::size_t k = 0; k < roles.exposure_levels.size(); ++k) {
    if (roles.exposure_levels[k] == exposure) {
      return beta(roles.treatment_cols[k]);
    }
  }
  throw std::domain_error("no treatment effect at exposure level " +
                          std::to_string(exposure));
}

double FittedModel::mediator_coefficient() const {
  if (roles.mediator_col < 0) {
    throw std::logic_error("mediator coefficient requested from a model "
                           "without a mediator column");
  }
  return beta(roles.mediator_col);
}

double FittedModel::covariate_contribution(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != roles.covariate_cols.size()) {
    throw std::invalid_argument(
        "covariate profile length does not match the fitted model");
  }
  double acc = 0.0;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    acc += beta(roles.covariate_cols[c]) * x(c);
  }
  return acc;
}

}  // namespace swmediate
