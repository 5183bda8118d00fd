#include "swmediate/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace swmediate {

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;  // saw content in the current row
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get(c);
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          any = false;
        }
        break;
      default:
        field.push_back(c);
        any = true;
        break;
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

bool parse_double(const std::string& s, double* out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  *out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

bool parse_int(const std::string& s, long* out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  *out = std::strtol(t.c_str(), &end, 10);
  return end == t.c_str() + t.size();
}

void add(std::vector<Diagnostic>& diags, Severity sev, std::string code,
         std::string message, int cluster = -1, int period = -1,
         long record = -1) {
  diags.push_back(
      {sev, std::move(code), std::move(message), cluster, period, record});
}

struct RawRow {
  std::string cluster;
  int period = 0;
  std::optional<double> outcome;
  std::optional<double> mediator;
  std::optional<int> treatment;
  std::vector<double> covariates;
  long record = 0;  // 1-based data row
};

struct SidecarDesign {
  int n_periods = 0;
  std::vector<std::string> ids;
  std::vector<int> adoption;  // kNeverTreated for null
  std::vector<std::vector<int>> excluded;
};

std::optional<SidecarDesign> parse_sidecar(const std::string& text,
                                           std::vector<Diagnostic>& diags) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    add(diags, Severity::kError, "design-parse",
        std::string("design file is not valid JSON: ") + e.what());
    return std::nullopt;
  }
  SidecarDesign d;
  try {
    d.n_periods = j.at("n_periods").get<int>();
    for (const auto& c : j.at("clusters")) {
      d.ids.push_back(c.at("id").is_string()
                          ? c.at("id").get<std::string>()
                          : std::to_string(c.at("id").get<long>()));
      const auto it = c.find("adoption_period");
      d.adoption.push_back(it == c.end() || it->is_null() ? kNeverTreated
                                                          : it->get<int>());
      std::vector<int> ex;
      if (const auto ep = c.find("excluded_periods"); ep != c.end()) {
        ex = ep->get<std::vector<int>>();
      }
      d.excluded.push_back(std::move(ex));
    }
  } catch (const std::exception& e) {
    add(diags, Severity::kError, "design-parse",
        std::string("design file structure: ") + e.what() +
            " (expected n_periods and clusters[{id, adoption_period, "
            "excluded_periods}])");
    return std::nullopt;
  }
  if (d.ids.empty()) {
    add(diags, Severity::kError, "design-parse",
        "design file lists no clusters");
    return std::nullopt;
  }
  std::set<std::string> seen;
  for (const auto& id : d.ids) {
    if (!seen.insert(id).second) {
      add(diags, Severity::kError, "design-parse",
          "design file repeats cluster id '" + id + "'");
      return std::nullopt;
    }
  }
  return d;
}

}  // namespace

LoadedDataset load_dataset_text(const std::string& csv_text,
                                const std::optional<std::string>& design_json) {
  LoadedDataset out;
  auto& diags = out.diagnostics;
  auto rows = parse_csv_text(csv_text);
  if (rows.empty()) {
    add(diags, Severity::kError, "csv-header", "file is empty");
    return out;
  }

  // header
  std::map<std::string, std::size_t> col;
  std::vector<std::string> covariate_names;
  std::vector<std::size_t> covariate_cols;
  for (std::size_t c = 0; c < rows[0].size(); ++c) {
    const std::string name = trim(rows[0][c]);
    const std::string key = lower(name);
    if (key == "cluster" || key == "period" || key == "outcome" ||
        key == "mediator" || key == "treatment") {
      if (!col.emplace(key, c).second) {
        add(diags, Severity::kError, "csv-header",
            "duplicate column '" + key + "'");
      }
    } else if (key.empty()) {
      add(diags, Severity::kError, "csv-header",
          "column " + std::to_string(c + 1) + " has an empty name");
    } else {
      covariate_names.push_back(name);
      covariate_cols.push_back(c);
    }
  }
  for (const char* need : {"cluster", "period", "outcome", "mediator"}) {
    if (!col.count(need)) {
      add(diags, Severity::kError, "csv-header",
          std::string("missing required column '") + need + "'");
    }
  }
  if (has_errors(diags)) return out;
  const bool has_treatment = col.count("treatment") > 0;

  // rows
  std::vector<RawRow> raw;
  raw.reserve(rows.size() - 1);
  int max_period = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const long record = static_cast<long>(r);  // 1-based data row
    if (cells.size() != rows[0].size()) {
      add(diags, Severity::kError, "csv-parse",
          "row has " + std::to_string(cells.size()) + " fields, header has " +
              std::to_string(rows[0].size()),
          -1, -1, record);
      continue;
    }
    RawRow row;
    row.record = record;
    row.cluster = trim(cells[col["cluster"]]);
    if (row.cluster.empty()) {
      add(diags, Severity::kError, "csv-parse", "empty cluster label", -1, -1,
          record);
      continue;
    }
    long period = 0;
    if (!parse_int(cells[col["period"]], &period) || period < 1) {
      add(diags, Severity::kError, "csv-parse",
          "period '" + trim(cells[col["period"]]) +
              "' is not a positive integer",
          -1, -1, record);
      continue;
    }
    row.period = static_cast<int>(period);
    max_period = std::max(max_period, row.period);

    auto read_response = [&](const char* name,
                             std::optional<double>& slot) {
      const std::string& cell = cells[col[name]];
      if (trim(cell).empty()) return true;  // missing
      double v = 0.0;
      if (!parse_double(cell, &v)) {
        add(diags, Severity::kError, "csv-parse",
            std::string(name) + " '" + trim(cell) + "' is not numeric", -1,
            -1, record);
        return false;
      }
      slot = v;
      return true;
    };
    if (!read_response("outcome", row.outcome)) continue;
    if (!read_response("mediator", row.mediator)) continue;

    if (has_treatment) {
      double t = 0.0;
      if (!parse_double(cells[col["treatment"]], &t) ||
          (t != 0.0 && t != 1.0)) {
        add(diags, Severity::kError, "csv-parse",
            "treatment '" + trim(cells[col["treatment"]]) +
                "' is not 0 or 1",
            -1, -1, record);
        continue;
      }
      row.treatment = static_cast<int>(t);
    }

    bool cov_ok = true;
    row.covariates.reserve(covariate_cols.size());
    for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
      const std::string& cell = cells[covariate_cols[c]];
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!trim(cell).empty() && !parse_double(cell, &v)) {
        add(diags, Severity::kError, "csv-parse",
            "covariate " + covariate_names[c] + " '" + trim(cell) +
                "' is not numeric",
            -1, -1, record);
        cov_ok = false;
        break;
      }
      row.covariates.push_back(v);
    }
    if (!cov_ok) continue;
    raw.push_back(std::move(row));
  }
  if (raw.empty()) {
    add(diags, Severity::kError, "csv-parse", "no usable data rows");
    return out;
  }

  // resolve the design
  std::vector<std::string> labels;
  std::map<std::string, int> label_index;
  std::vector<int> adoption;
  int n_periods = max_period;
  std::vector<std::vector<int>> excluded;

  std::optional<SidecarDesign> sidecar;
  if (design_json) {
    sidecar = parse_sidecar(*design_json, diags);
    if (!sidecar) return out;
    labels = sidecar->ids;
    adoption = sidecar->adoption;
    excluded = sidecar->excluded;
    n_periods = sidecar->n_periods;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      label_index[labels[i]] = static_cast<int>(i);
    }
    bool unknown = false;
    for (const auto& row : raw) {
      if (!label_index.count(row.cluster)) {
        add(diags, Severity::kError, "design-cluster-unknown",
            "cluster '" + row.cluster + "' does not appear in the design file",
            -1, -1, row.record);
        unknown = true;
      }
    }
    if (unknown) return out;
    for (const auto& row : raw) {
      if (row.period > n_periods) {
        add(diags, Severity::kError, "csv-parse",
            "period " + std::to_string(row.period) +
                " exceeds the design's n_periods " +
                std::to_string(n_periods),
            -1, row.period, row.record);
      }
    }
    if (has_errors(diags)) return out;
  } else {
    if (!has_treatment) {
      add(diags, Severity::kError, "design-missing",
          "no design file and no treatment column to infer one from");
      return out;
    }
    // first-appearance order keeps the mapping deterministic
    for (const auto& row : raw) {
      if (label_index.emplace(row.cluster, static_cast<int>(labels.size()))
              .second) {
        labels.push_back(row.cluster);
      }
    }
    adoption.assign(labels.size(), kNeverTreated);
    excluded.assign(labels.size(), {});
    // per cluster: treatment by period must be constant within a cell and
    // step from 0 to 1 exactly once
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::map<int, int> by_period;
      bool ok = true;
      for (const auto& row : raw) {
        if (row.cluster != labels[i]) continue;
        auto [it, inserted] = by_period.emplace(row.period, *row.treatment);
        if (!inserted && it->second != *row.treatment) {
          add(diags, Severity::kError, "not-uni-directional",
              "cluster '" + labels[i] + "' period " +
                  std::to_string(row.period) +
                  " mixes treated and untreated records",
              static_cast<int>(i), row.period);
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      int first_treated = kNeverTreated;
      int last_control = 0;
      for (const auto& [j, t] : by_period) {
        if (t == 1 && first_treated == kNeverTreated) first_treated = j;
        if (t == 0) last_control = j;
      }
      if (first_treated != kNeverTreated && last_control > first_treated) {
        add(diags, Severity::kError, "not-uni-directional",
            "cluster '" + labels[i] + "' is untreated at period " +
                std::to_string(last_control) +
                " after adopting at period " +
                std::to_string(first_treated),
            static_cast<int>(i), last_control);
        continue;
      }
      adoption[i] = first_treated;
    }
    if (has_errors(diags)) return out;
  }

  TrialDesign* design_ptr = nullptr;
  std::optional<TrialDesign> design;
  try {
    design.emplace(static_cast<int>(labels.size()), n_periods, adoption);
    design_ptr = &*design;
  } catch (const std::exception& e) {
    add(diags, Severity::kError, "design-invalid", e.what());
    return out;
  }
  for (std::size_t i = 0; i < excluded.size(); ++i) {
    for (int j : excluded[i]) {
      if (j < 1 || j > n_periods) {
        add(diags, Severity::kError, "design-invalid",
            "excluded period " + std::to_string(j) + " of cluster '" +
                labels[i] + "' is out of range",
            static_cast<int>(i), j);
        continue;
      }
      design_ptr->exclude_cell(static_cast<int>(i), j);
    }
  }
  if (has_errors(diags)) return out;

  if (sidecar && has_treatment) {
    long conflicts = 0;
    for (const auto& row : raw) {
      const int i = label_index[row.cluster];
      if (design_ptr->treated(i, row.period) != (*row.treatment == 1)) {
        ++conflicts;
      }
    }
    if (conflicts > 0) {
      add(diags, Severity::kWarning, "treatment-conflict",
          "treatment column disagrees with the design file in " +
              std::to_string(conflicts) + " record(s); the design file wins");
    }
  }

  MediationDataset data{*design, {}, labels, covariate_names};
  data.records.reserve(raw.size());
  for (const auto& row : raw) {
    IndividualRecord rec;
    rec.cluster = label_index[row.cluster];
    rec.period = row.period;
    rec.outcome = row.outcome;
    rec.mediator = row.mediator;
    rec.covariates = row.covariates;
    data.records.push_back(std::move(rec));
  }
  out.data = std::move(data);
  return out;
}

LoadedDataset load_dataset(const std::string& data_path,
                           const std::optional<std::string>& design_path) {
  auto slurp = [](const std::string& path,
                  std::string* text) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    *text = ss.str();
    return true;
  };
  LoadedDataset out;
  std::string csv_text;
  if (!slurp(data_path, &csv_text)) {
    out.diagnostics.push_back({Severity::kError, "file-missing",
                               "cannot read data file '" + data_path + "'",
                               -1, -1, -1});
    return out;
  }
  std::optional<std::string> design_text;
  if (design_path) {
    std::string t;
    if (!slurp(*design_path, &t)) {
      out.diagnostics.push_back({Severity::kError, "file-missing",
                                 "cannot read design file '" + *design_path +
                                     "'",
                                 -1, -1, -1});
      return out;
    }
    design_text = std::move(t);
  }
  return load_dataset_text(csv_text, design_text);
}

DataTypeSpec infer_data_type(const MediationDataset& data) {
  bool outcome_binary = true;
  bool mediator_binary = true;
  for (const auto& rec : data.records) {
    if (rec.outcome && *rec.outcome != 0.0 && *rec.outcome != 1.0) {
      outcome_binary = false;
    }
    if (rec.mediator && *rec.mediator != 0.0 && *rec.mediator != 1.0) {
      mediator_binary = false;
    }
  }
  return {outcome_binary ? VarKind::kBinary : VarKind::kContinuous,
          mediator_binary ? VarKind::kBinary : VarKind::kContinuous};
}

}  // namespace swmediate
