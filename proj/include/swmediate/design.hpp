#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace swmediate {

inline constexpr int kNeverTreated = std::numeric_limits<int>::max();

// Cross-sectional stepped-wedge layout: I clusters by J calendar periods,
// every cluster starting in control, crossing over once at its adoption
// period, and staying treated. Cells can be structurally excluded
// (implementation periods); excluded cells never contribute records to a fit.
class TrialDesign {
 public:
  TrialDesign(int n_clusters, int n_periods, std::vector<int> adoption_period);

  int n_clusters() const { return n_clusters_; }
  int n_periods() const { return n_periods_; }
  int adoption_period(int cluster) const { return adoption_[cluster]; }

  bool treated(int cluster, int period) const {
    return period >= adoption_[cluster];
  }
  // exposure time: 0 before adoption, then 1, 2, ... from the adoption period
  int exposure_time(int cluster, int period) const {
    if (!treated(cluster, period)) return 0;
    return period - adoption_[cluster] + 1;
  }

  void exclude_cell(int cluster, int period);
  bool included(int cluster, int period) const {
    return !excluded_[static_cast<std::size_t>(cluster) * n_periods_ +
                      (period - 1)];
  }

  // largest exposure time over included cells
  int max_exposure() const;
  // distinct exposure levels >= 1 appearing in included cells, ascending;
  // equals 1..max_exposure() on designs without structural gaps
  std::vector<int> observable_exposure_levels() const;
  // calendar periods j holding at least one included cell with exposure e
  std::vector<int> eligible_periods(int exposure) const;

  bool operator==(const TrialDesign&) const = default;

 private:
  int n_clusters_;
  int n_periods_;
  std::vector<int> adoption_;
  std::vector<bool> excluded_;  // row-major cluster x period
};

// Equal allocation of clusters over the distinct adoption sequences. Without
// an implementation gap the sequences adopt at periods 2..J. With a one-period
// gap the sequences adopt at 3..J and the first treated cell of each cluster
// is excluded, so the earliest included cell at exposure e sits at period
// e + 2 and the largest observable exposure is J - 2.
TrialDesign standard_design(int n_clusters, int n_periods,
                            int implementation_gap);

enum class VarKind { kContinuous, kBinary };

struct DataTypeSpec {
  VarKind outcome = VarKind::kContinuous;
  VarKind mediator = VarKind::kContinuous;
};

// accepts "ycmc", "ycmb", "ybmc", "ybmb"
DataTypeSpec parse_data_type(const std::string& code);
std::string data_type_code(const DataTypeSpec& spec);

struct IndividualRecord {
  int cluster = 0;  // dense index into the design
  int period = 1;   // 1-based calendar period
  std::optional<double> outcome;
  std::optional<double> mediator;
  std::vector<double> covariates;
};

struct MediationDataset {
  TrialDesign design;
  std::vector<IndividualRecord> records;
  std::vector<std::string> cluster_labels;   // aligned with dense indices
  std::vector<std::string> covariate_names;
};

enum class Severity { kWarning, kError };

struct Diagnostic {
  Severity severity = Severity::kError;
  std::string code;
  std::string message;
  int cluster = -1;  // -1 when not tied to a cluster
  int period = -1;
  long record = -1;
};

// Structural checks before fitting: range, support, missingness placement,
// covariate drift, empty periods. Warnings flag unusual but usable layouts
// (never-treated clusters, thinly covered adoption periods).
std::vector<Diagnostic> validate_dataset(const MediationDataset& data,
                                         const DataTypeSpec& types);

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::kError) return true;
  }
  return false;
}

}  // namespace swmediate
