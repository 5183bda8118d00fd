#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "swmediate/design.hpp"

namespace swmediate {

// Minimal CSV reader: comma separated, double quotes with "" escapes,
// CR/LF tolerant. Every row is returned; field counts are the caller's
// problem.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
std::vector<std::vector<std::string>> parse_csv_text(const std::string& text);

struct LoadedDataset {
  std::optional<MediationDataset> data;  // absent when no design can be built
  std::vector<Diagnostic> diagnostics;
};

// Reads one-row-per-individual data with a required header naming cluster,
// period, outcome and mediator columns; an optional treatment column; all
// other columns are covariates. The trial design comes from the sidecar JSON
// when given (adoption periods and excluded cells; it wins over the
// treatment column on conflict, with a warning) and is otherwise inferred
// from the treatment column, which must describe a uni-directional
// crossover.
LoadedDataset load_dataset(const std::string& data_path,
                           const std::optional<std::string>& design_path);

LoadedDataset load_dataset_text(const std::string& csv_text,
                                const std::optional<std::string>& design_json);

// Variable kinds for validation when the caller does not say: a column whose
// observed values all lie in {0, 1} is treated as binary.
DataTypeSpec infer_data_type(const MediationDataset& data);

}  // namespace swmediate
