#include "swmediate/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "swmediate/csv.hpp"

namespace swmediate {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// blank for undefined values in presentation tables
std::string f3(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void push_measures(std::vector<FlatEstimateRow>& rows, const std::string& lvl,
                   int period, int exposure, const EffectQuad& q) {
  rows.push_back({lvl, period, exposure, "nie", q.nie});
  rows.push_back({lvl, period, exposure, "nde", q.nde});
  rows.push_back({lvl, period, exposure, "te", q.te});
  rows.push_back({lvl, period, exposure, "mp",
                  q.mp_defined ? q.mp
                               : std::numeric_limits<double>::quiet_NaN()});
}

nlohmann::json quad_json(const EffectQuad& q) {
  nlohmann::json j;
  j["nie"] = q.nie;
  j["nde"] = q.nde;
  j["te"] = q.te;
  if (q.mp_defined) j["mp"] = q.mp;
  else j["mp"] = nullptr;
  j["te_near_zero"] = q.te_near_zero;
  return j;
}

}  // namespace

std::vector<FlatEstimateRow> flat_estimate_rows(const MediationEstimates& est) {
  std::vector<FlatEstimateRow> rows;
  push_measures(rows, "overall", 0, 0, est.overall);
  if (est.structure == EffectStructure::kConstant) {
    for (const auto& [j, q] : est.per_period) {
      push_measures(rows, "period", j, 0, q);
    }
  } else {
    for (const auto& [e, q] : est.per_exposure) {
      push_measures(rows, "exposure", 0, e, q);
    }
    for (const auto& [j, e, q] : est.per_cell) {
      push_measures(rows, "cell", j, e, q);
    }
  }
  return rows;
}

std::string estimates_csv(const MediationEstimates& est) {
  std::ostringstream os;
  os << "level,period,exposure,measure,estimate\n";
  for (const auto& row : flat_estimate_rows(est)) {
    os << row.level << ',';
    if (row.period > 0) os << row.period;
    os << ',';
    if (row.exposure > 0) os << row.exposure;
    os << ',' << row.measure << ',' << g17(row.estimate) << '\n';
  }
  return os.str();
}

std::vector<FlatEstimateRow> parse_estimates_csv(const std::string& text) {
  auto cells = parse_csv_text(text);
  if (cells.empty() ||
      cells[0] != std::vector<std::string>{"level", "period", "exposure",
                                           "measure", "estimate"}) {
    throw std::invalid_argument(
        "parse_estimates_csv: expected header "
        "level,period,exposure,measure,estimate");
  }
  std::vector<FlatEstimateRow> rows;
  for (std::size_t r = 1; r < cells.size(); ++r) {
    if (cells[r].size() != 5) {
      throw std::invalid_argument("parse_estimates_csv: row " +
                                  std::to_string(r) + " has " +
                                  std::to_string(cells[r].size()) +
                                  " fields");
    }
    FlatEstimateRow row;
    row.level = cells[r][0];
    row.period = cells[r][1].empty() ? 0 : std::stoi(cells[r][1]);
    row.exposure = cells[r][2].empty() ? 0 : std::stoi(cells[r][2]);
    row.measure = cells[r][3];
    row.estimate = std::strtod(cells[r][4].c_str(), nullptr);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string estimates_json(const MediationEstimates& est) {
  nlohmann::json j;
  j["structure"] = structure_name(est.structure);
  j["method"] = method_name(est.method);
  j["nodes"] = est.nodes;
  nlohmann::json prof;
  prof["source"] = est.profile.source;
  prof["names"] = est.profile.names;
  std::vector<double> vals(est.profile.values.data(),
                           est.profile.values.data() +
                               est.profile.values.size());
  prof["values"] = vals;
  j["profile"] = prof;
  j["overall"] = quad_json(est.overall);
  if (est.structure == EffectStructure::kConstant) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [p, q] : est.per_period) {
      nlohmann::json row = quad_json(q);
      row["period"] = p;
      arr.push_back(row);
    }
    j["per_period"] = arr;
  } else {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [e, q] : est.per_exposure) {
      nlohmann::json row = quad_json(q);
      row["exposure"] = e;
      arr.push_back(row);
    }
    j["per_exposure"] = arr;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [p, e, q] : est.per_cell) {
      nlohmann::json row = quad_json(q);
      row["period"] = p;
      row["exposure"] = e;
      cells.push_back(row);
    }
    j["per_cell"] = cells;
  }
  j["mp_ratio_of_sums"] = est.mp_ratio_of_sums;
  return j.dump(2) + "\n";
}

namespace {

JackknifeInterval winzorized(const JackknifeInterval& ji, bool winzorize,
                             const std::string& measure) {
  JackknifeInterval out = ji;
  if (winzorize && measure == "mp" && ji.se_defined) {
    out.ci_low = std::max(0.0, ji.ci_low);
    out.ci_high = std::min(1.0, ji.ci_high);
  }
  return out;
}

}  // namespace

std::string inference_csv(const InferenceResult& res, bool winzorize_mp) {
  std::ostringstream os;
  os << "level,period,exposure,measure,estimate,se,ci_low,ci_high\n";
  for (std::size_t k = 0; k < res.keys.size(); ++k) {
    const TargetKey& key = res.keys[k];
    const JackknifeInterval ji =
        winzorized(res.intervals[k], winzorize_mp, key.measure);
    os << target_level_name(key.level) << ',';
    if (key.level == TargetLevel::kPeriod) os << key.index;
    os << ',';
    if (key.level == TargetLevel::kExposure) os << key.index;
    os << ',' << key.measure << ',' << f3(ji.estimate) << ',';
    if (ji.se_defined) {
      os << f3(ji.se) << ',' << f3(ji.ci_low) << ',' << f3(ji.ci_high);
    } else {
      os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

std::string inference_json(const InferenceResult& res, bool winzorize_mp,
                           const HeterogeneityTest* het) {
  nlohmann::json j;
  j["estimates"] = nlohmann::json::parse(estimates_json(res.full));
  j["n_clusters"] = res.n_clusters;
  j["t_critical"] = res.t_critical;
  j["failed_clusters"] = res.failed_clusters;
  j["mp_ci_winzorized"] = winzorize_mp;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < res.keys.size(); ++k) {
    const TargetKey& key = res.keys[k];
    const JackknifeInterval ji =
        winzorized(res.intervals[k], winzorize_mp, key.measure);
    nlohmann::json row;
    row["level"] = target_level_name(key.level);
    if (key.level == TargetLevel::kPeriod) row["period"] = key.index;
    if (key.level == TargetLevel::kExposure) row["exposure"] = key.index;
    row["measure"] = key.measure;
    row["estimate"] =
        std::isfinite(ji.estimate) ? nlohmann::json(ji.estimate) : nullptr;
    if (ji.se_defined) {
      row["se"] = ji.se;
      row["ci_low"] = ji.ci_low;
      row["ci_high"] = ji.ci_high;
    } else {
      row["se"] = nullptr;
      row["ci_low"] = nullptr;
      row["ci_high"] = nullptr;
    }
    rows.push_back(row);
  }
  j["inference"] = rows;
  if (het) {
    nlohmann::json h;
    h["statistic"] = het->statistic;
    h["df"] = het->df;
    h["p_value"] = het->p_value;
    std::vector<double> contrasts(het->contrasts.data(),
                                  het->contrasts.data() +
                                      het->contrasts.size());
    h["contrasts"] = contrasts;
    h["exposure_levels"] = het->exposure_levels;
    h["covariance_rank"] = het->covariance_rank;
    h["covariance_rank_deficient"] = het->covariance_rank_deficient;
    h["description"] = het->description;
    j["heterogeneity_test"] = h;
  }
  return j.dump(2) + "\n";
}

std::string heterogeneity_text(const HeterogeneityTest& het) {
  std::ostringstream os;
  os << "treatment-effect constancy over exposure time: chi-squared = "
     << f3(het.statistic) << ", df = " << het.df << ", p = "
     << f3(het.p_value);
  if (het.covariance_rank_deficient) {
    os << " (contrast covariance rank " << het.covariance_rank << " of "
       << het.df << "; pseudo-inverse used)";
  }
  os << '\n';
  return os.str();
}

std::string report_csv(const SimulationReport& report) {
  std::ostringstream os;
  os << "method,level,period,exposure,measure,truth,mean_estimate,"
        "bias_percent,mcsd,aese,coverage_percent,n_estimates,n_ses\n";
  for (const auto& method : report.methods) {
    for (const auto& row : method.targets) {
      os << method_name(method.method) << ','
         << target_level_name(row.key.level) << ',';
      if (row.key.level == TargetLevel::kPeriod) os << row.key.index;
      os << ',';
      if (row.key.level == TargetLevel::kExposure) os << row.key.index;
      os << ',' << row.key.measure << ',' << f3(row.truth) << ','
         << f3(row.mean_estimate) << ',' << f3(row.bias_percent) << ','
         << f3(row.mcsd) << ',' << f3(row.aese) << ','
         << f3(row.coverage_percent) << ',' << row.n_estimates << ','
         << row.n_ses << '\n';
    }
  }
  return os.str();
}

namespace {

nlohmann::json scenario_to_json(const SimulationScenario& s) {
  nlohmann::json j;
  j["data_type"] = data_type_code(s.data_type);
  j["structure"] = structure_name(s.structure);
  j["n_clusters"] = s.n_clusters;
  j["n_periods"] = s.n_periods;
  j["cell_size"] = s.cell_size;
  j["implementation_gap"] = s.implementation_gap;
  j["outcome_period_effects"] = s.outcome_period_effects;
  j["mediator_period_effects"] = s.mediator_period_effects;
  j["outcome_random_sd"] = s.outcome_random_sd;
  j["mediator_random_sd"] = s.mediator_random_sd;
  j["outcome_residual_sd"] = s.outcome_residual_sd;
  j["mediator_residual_sd"] = s.mediator_residual_sd;
  j["eta"] = s.eta;
  j["eta_by_exposure"] = s.eta_by_exposure;
  j["target_te"] = s.target_te;
  j["target_mp"] = s.target_mp;
  j["calibration_anchor"] = s.calibration_anchor;
  std::vector<std::string> methods;
  for (auto m : s.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  j["eval_nodes"] = s.eval_nodes;
  j["fit_nodes"] = s.fit_nodes;
  j["use_reml"] = s.use_reml;
  j["use_jackknife"] = s.use_jackknife;
  j["n_replications"] = s.n_replications;
  j["rng_seed"] = s.rng_seed;
  return j;
}

SimulationScenario scenario_from_object(const nlohmann::json& j) {
  SimulationScenario s;
  for (const auto& [key, value] : j.items()) {
    if (key == "name") continue;  // row label, handled by the caller
    if (key == "data_type") s.data_type = parse_data_type(value.get<std::string>());
    else if (key == "structure") s.structure = parse_structure(value.get<std::string>());
    else if (key == "n_clusters") s.n_clusters = value;
    else if (key == "n_periods") s.n_periods = value;
    else if (key == "cell_size") s.cell_size = value;
    else if (key == "implementation_gap") s.implementation_gap = value;
    else if (key == "outcome_period_effects") {
      s.outcome_period_effects = value.get<std::vector<double>>();
    } else if (key == "mediator_period_effects") {
      s.mediator_period_effects = value.get<std::vector<double>>();
    } else if (key == "outcome_random_sd") s.outcome_random_sd = value;
    else if (key == "mediator_random_sd") s.mediator_random_sd = value;
    else if (key == "outcome_residual_sd") s.outcome_residual_sd = value;
    else if (key == "mediator_residual_sd") s.mediator_residual_sd = value;
    else if (key == "eta") s.eta = value;
    else if (key == "eta_by_exposure") {
      s.eta_by_exposure = value.get<std::vector<double>>();
    } else if (key == "target_te") s.target_te = value;
    else if (key == "target_mp") s.target_mp = value;
    else if (key == "calibration_anchor") s.calibration_anchor = value;
    else if (key == "methods") {
      s.methods.clear();
      for (const auto& m : value) s.methods.push_back(parse_method(m.get<std::string>()));
    } else if (key == "eval_nodes") s.eval_nodes = value;
    else if (key == "fit_nodes") s.fit_nodes = value;
    else if (key == "use_reml") s.use_reml = value;
    else if (key == "use_jackknife") s.use_jackknife = value;
    else if (key == "n_replications") s.n_replications = value;
    else if (key == "rng_seed") s.rng_seed = value;
    else {
      throw std::invalid_argument("scenario: unknown key '" + key + "'");
    }
  }
  return s;
}

}  // namespace

std::string report_json(const SimulationReport& report,
                        const SimulationScenario& scenario) {
  nlohmann::json j;
  j["scenario"] = scenario_to_json(scenario);
  nlohmann::json cal;
  cal["theta"] = report.params.theta;
  cal["eta"] = report.params.eta;
  cal["beta_m"] = report.params.beta_m;
  cal["exposure_levels"] = report.params.exposure_levels;
  cal["outcome_period_effects"] = report.params.outcome_period_effects;
  cal["mediator_period_effects"] = report.params.mediator_period_effects;
  cal["outcome_random_sd"] = report.params.outcome_random_sd;
  cal["mediator_random_sd"] = report.params.mediator_random_sd;
  j["calibrated"] = cal;
  j["n_replications"] = report.n_replications;
  j["n_failed"] = report.n_failed;
  j["failure_flagged"] = report.failure_flagged;
  j["failed_replicates"] = report.failed_replicates;
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& method : report.methods) {
    nlohmann::json mj;
    mj["method"] = method_name(method.method);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : method.targets) {
      nlohmann::json rj;
      rj["level"] = target_level_name(row.key.level);
      if (row.key.level == TargetLevel::kPeriod) rj["period"] = row.key.index;
      if (row.key.level == TargetLevel::kExposure) {
        rj["exposure"] = row.key.index;
      }
      rj["measure"] = row.key.measure;
      auto opt = [](double v) {
        return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
      };
      rj["truth"] = opt(row.truth);
      rj["mean_estimate"] = opt(row.mean_estimate);
      rj["bias_percent"] = opt(row.bias_percent);
      rj["mcsd"] = opt(row.mcsd);
      rj["aese"] = opt(row.aese);
      rj["coverage_percent"] = opt(row.coverage_percent);
      rj["n_estimates"] = row.n_estimates;
      rj["n_ses"] = row.n_ses;
      rows.push_back(rj);
    }
    mj["targets"] = rows;
    methods.push_back(mj);
  }
  j["methods"] = methods;
  return j.dump(2) + "\n";
}

std::vector<NamedScenario> scenarios_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("scenario file is not valid JSON: ") +
                                e.what());
  }
  std::vector<NamedScenario> out;
  if (j.is_object() && j.contains("rows")) {
    if (j.size() != 1 || !j["rows"].is_array()) {
      throw std::invalid_argument(
          "scenario file with 'rows' must contain only that array");
    }
    int index = 0;
    for (const auto& row : j["rows"]) {
      NamedScenario named;
      named.name = row.contains("name") ? row["name"].get<std::string>()
                                        : "row" + std::to_string(index);
      named.scenario = scenario_from_object(row);
      out.push_back(std::move(named));
      ++index;
    }
  } else if (j.is_object()) {
    NamedScenario named;
    named.name = j.contains("name") ? j["name"].get<std::string>() : "scenario";
    named.scenario = scenario_from_object(j);
    out.push_back(std::move(named));
  } else {
    throw std::invalid_argument("scenario file must be a JSON object");
  }
  return out;
}

}  // namespace swmediate
