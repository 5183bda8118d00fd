#include "swmediate/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace swmediate {

TrialDesign::TrialDesign(int n_clusters, int n_periods,
                         std::vector<int> adoption_period)
    : n_clusters_(n_clusters),
      n_periods_(n_periods),
      adoption_(std::move(adoption_period)),
      excluded_(static_cast<std::size_t>(n_clusters) * n_periods, false) {
  if (n_clusters < 1) {
    throw std::invalid_argument("TrialDesign: need at least one cluster");
  }
  if (n_periods < 3) {
    throw std::invalid_argument("TrialDesign: need at least three periods");
  }
  if (static_cast<int>(adoption_.size()) != n_clusters) {
    throw std::invalid_argument(
        "TrialDesign: adoption vector length must equal cluster count");
  }
  for (int a : adoption_) {
    if (a != kNeverTreated && (a < 2 || a > n_periods)) {
      throw std::invalid_argument(
          "TrialDesign: adoption periods must lie in 2..J (or never)");
    }
  }
}

void TrialDesign::exclude_cell(int cluster, int period) {
  if (cluster < 0 || cluster >= n_clusters_ || period < 1 ||
      period > n_periods_) {
    throw std::out_of_range("TrialDesign::exclude_cell: cell outside grid");
  }
  excluded_[static_cast<std::size_t>(cluster) * n_periods_ + (period - 1)] =
      true;
}

int TrialDesign::max_exposure() const {
  int e_max = 0;
  for (int i = 0; i < n_clusters_; ++i) {
    for (int j = 1; j <= n_periods_; ++j) {
      if (included(i, j)) e_max = std::max(e_max, exposure_time(i, j));
    }
  }
  return e_max;
}

std::vector<int> TrialDesign::observable_exposure_levels() const {
  std::set<int> levels;
  for (int i = 0; i < n_clusters_; ++i) {
    for (int j = 1; j <= n_periods_; ++j) {
      int e = exposure_time(i, j);
      if (e >= 1 && included(i, j)) levels.insert(e);
    }
  }
  return {levels.begin(), levels.end()};
}

std::vector<int> TrialDesign::eligible_periods(int exposure) const {
  std::set<int> periods;
  for (int i = 0; i < n_clusters_; ++i) {
    for (int j = 1; j <= n_periods_; ++j) {
      if (included(i, j) && exposure_time(i, j) == exposure) periods.insert(j);
    }
  }
  return {periods.begin(), periods.end()};
}

TrialDesign standard_design(int n_clusters, int n_periods,
                            int implementation_gap) {
  if (implementation_gap != 0 && implementation_gap != 1) {
    throw std::invalid_argument("standard_design: gap must be 0 or 1");
  }
  if (n_periods < 3) {
    throw std::invalid_argument("standard_design: need at least three periods");
  }
  const int first_adoption = implementation_gap ? 3 : 2;
  const int n_sequences = n_periods - first_adoption + 1;
  if (n_sequences < 1) {
    throw std::invalid_argument("standard_design: no feasible sequences");
  }
  if (n_clusters % n_sequences != 0) {
    throw std::invalid_argument(
        "standard_design: cluster count not divisible by sequence count (" +
        std::to_string(n_sequences) + ")");
  }
  const int per_seq = n_clusters / n_sequences;
  std::vector<int> adoption(n_clusters);
  for (int i = 0; i < n_clusters; ++i) {
    adoption[i] = first_adoption + i / per_seq;
  }
  TrialDesign design(n_clusters, n_periods, std::move(adoption));
  if (implementation_gap) {
    for (int i = 0; i < n_clusters; ++i) {
      design.exclude_cell(i, design.adoption_period(i));
    }
  }
  return design;
}

DataTypeSpec parse_data_type(const std::string& code) {
  if (code == "ycmc") return {VarKind::kContinuous, VarKind::kContinuous};
  if (code == "ycmb") return {VarKind::kContinuous, VarKind::kBinary};
  if (code == "ybmc") return {VarKind::kBinary, VarKind::kContinuous};
  if (code == "ybmb") return {VarKind::kBinary, VarKind::kBinary};
  throw std::invalid_argument("unknown data type code: " + code);
}

std::string data_type_code(const DataTypeSpec& spec) {
  std::string code = spec.outcome == VarKind::kBinary ? "yb" : "yc";
  code += spec.mediator == VarKind::kBinary ? "mb" : "mc";
  return code;
}

namespace {

bool binary_ok(double v) { return v == 0.0 || v == 1.0; }

std::string cell_tag(int cluster, int period) {
  return "cluster " + std::to_string(cluster) + ", period " +
         std::to_string(period);
}

}  // namespace

std::vector<Diagnostic> validate_dataset(const MediationDataset& data,
                                         const DataTypeSpec& types) {
  std::vector<Diagnostic> diags;
  const TrialDesign& design = data.design;
  const std::size_t n_cov = data.covariate_names.size();
  std::vector<long> usable_per_period(design.n_periods() + 1, 0);

  for (std::size_t r = 0; r < data.records.size(); ++r) {
    const IndividualRecord& rec = data.records[r];
    long rid = static_cast<long>(r);
    if (rec.cluster < 0 || rec.cluster >= design.n_clusters()) {
      diags.push_back({Severity::kError, "cluster-range",
                       "record references cluster index outside the design",
                       rec.cluster, rec.period, rid});
      continue;
    }
    if (rec.period < 1 || rec.period > design.n_periods()) {
      diags.push_back({Severity::kError, "period-range",
                       "record period outside 1..J", rec.cluster, rec.period,
                       rid});
      continue;
    }
    if (rec.covariates.size() != n_cov) {
      diags.push_back({Severity::kError, "covariate-drift",
                       "record carries " +
                           std::to_string(rec.covariates.size()) +
                           " covariates, dataset declares " +
                           std::to_string(n_cov),
                       rec.cluster, rec.period, rid});
    }
    for (double x : rec.covariates) {
      if (!std::isfinite(x)) {
        diags.push_back({Severity::kError, "covariate-nonfinite",
                         "non-finite covariate value", rec.cluster, rec.period,
                         rid});
        break;
      }
    }
    const bool cell_in = design.included(rec.cluster, rec.period);
    if (!cell_in) {
      if (rec.outcome || rec.mediator) {
        diags.push_back({Severity::kError, "excluded-cell-data",
                         "non-missing outcome/mediator in excluded cell (" +
                             cell_tag(rec.cluster, rec.period) + ")",
                         rec.cluster, rec.period, rid});
      }
      continue;
    }
    if (!rec.outcome) {
      diags.push_back({Severity::kError, "outcome-missing",
                       "missing outcome in included cell (" +
                           cell_tag(rec.cluster, rec.period) + ")",
                       rec.cluster, rec.period, rid});
    } else if (!std::isfinite(*rec.outcome)) {
      diags.push_back({Severity::kError, "outcome-nonfinite",
                       "non-finite outcome value", rec.cluster, rec.period,
                       rid});
    } else if (types.outcome == VarKind::kBinary && !binary_ok(*rec.outcome)) {
      diags.push_back({Severity::kError, "outcome-support",
                       "binary outcome value not in {0,1}", rec.cluster,
                       rec.period, rid});
    }
    if (!rec.mediator) {
      diags.push_back({Severity::kError, "mediator-missing",
                       "missing mediator in included cell (" +
                           cell_tag(rec.cluster, rec.period) + ")",
                       rec.cluster, rec.period, rid});
    } else if (!std::isfinite(*rec.mediator)) {
      diags.push_back({Severity::kError, "mediator-nonfinite",
                       "non-finite mediator value", rec.cluster, rec.period,
                       rid});
    } else if (types.mediator == VarKind::kBinary &&
               !binary_ok(*rec.mediator)) {
      diags.push_back({Severity::kError, "mediator-support",
                       "binary mediator value not in {0,1}", rec.cluster,
                       rec.period, rid});
    }
    if (rec.outcome && rec.mediator) ++usable_per_period[rec.period];
  }

  for (int j = 1; j <= design.n_periods(); ++j) {
    if (usable_per_period[j] == 0) {
      diags.push_back({Severity::kError, "empty-period",
                       "period " + std::to_string(j) +
                           " has no usable records; its period effect is not "
                           "identifiable",
                       -1, j, -1});
    }
  }

  std::map<int, int> per_adoption;
  for (int i = 0; i < design.n_clusters(); ++i) {
    ++per_adoption[design.adoption_period(i)];
    if (design.adoption_period(i) == kNeverTreated) {
      diags.push_back({Severity::kWarning, "never-treated",
                       "cluster " + std::to_string(i) + " never adopts",
                       i, -1, -1});
    }
  }
  for (const auto& [adopt, count] : per_adoption) {
    if (adopt != kNeverTreated && count < 2) {
      diags.push_back({Severity::kWarning, "thin-sequence",
                       "adoption period " + std::to_string(adopt) +
                           " has fewer than 2 clusters",
                       -1, adopt, -1});
    }
  }
  return diags;
}

}  // namespace swmediate
