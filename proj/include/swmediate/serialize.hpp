#pragma once

#include "swmediate/inference.hpp"
#include "swmediate/simulation.hpp"

namespace swmediate {

// One line of the full-precision estimates table. level is "overall",
// "period", "exposure" or "cell"; period/exposure are 0 when they do not
// apply.
struct FlatEstimateRow {
  std::string level;
  int period = 0;
  int exposure = 0;
  std::string measure;
  double estimate = 0.0;
};

std::vector<FlatEstimateRow> flat_estimate_rows(const MediationEstimates& est);

// level,period,exposure,measure,estimate with %.17g values: parsing the
// text recovers every double bit for bit.
std::string estimates_csv(const MediationEstimates& est);
std::vector<FlatEstimateRow> parse_estimates_csv(const std::string& text);

std::string estimates_json(const MediationEstimates& est);

// Presentation table (3-decimal) with jackknife standard errors and 95%
// confidence intervals; winzorize_mp clamps the mp interval to [0, 1].
std::string inference_csv(const InferenceResult& res, bool winzorize_mp);

// Full-precision JSON of the same, plus diagnostics context and the
// heterogeneity test when one was run.
std::string inference_json(const InferenceResult& res, bool winzorize_mp,
                           const HeterogeneityTest* het);

std::string heterogeneity_text(const HeterogeneityTest& het);

// Simulation report: one row per method x target with truth, Bias(%), MCSD,
// AESE and CP(%) columns (3-decimal), plus a full-precision JSON twin.
std::string report_csv(const SimulationReport& report);
std::string report_json(const SimulationReport& report,
                        const SimulationScenario& scenario);

struct NamedScenario {
  std::string name;
  SimulationScenario scenario;
};

// A scenario file is either one scenario object or {"rows": [...]} with a
// "name" per entry. Unknown keys are rejected.
std::vector<NamedScenario> scenarios_from_json(const std::string& text);

}  // namespace swmediate
