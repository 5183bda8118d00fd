#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swmediate/csv.hpp"
#include "swmediate/serialize.hpp"

namespace {

using namespace swmediate;

constexpr int kExitConfig = 1;
constexpr int kExitValidation = 2;
constexpr int kExitFit = 3;

void print_diagnostics(const std::vector<Diagnostic>& diags,
                       std::ostream& os) {
  for (const auto& d : diags) {
    os << (d.severity == Severity::kError ? "error" : "warning") << '\t'
       << d.code << '\t' << d.message;
    if (d.cluster >= 0) os << "\tcluster=" << d.cluster;
    if (d.period >= 0) os << "\tperiod=" << d.period;
    if (d.record >= 0) os << "\trecord=" << d.record;
    os << '\n';
  }
}

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error\tio\tcannot write '" << path << "'\n";
    return false;
  }
  out << content;
  return out.good();
}

struct MediateArgs {
  std::string data;
  std::string design;
  std::string type;
  std::string structure = "constant";
  std::string method = "ghq";
  int nodes = 64;
  int fit_nodes = 15;
  bool use_ml = false;
  std::string profile = "median";
  bool winzorize_mp = false;
  bool het_test = false;
  std::string out;
  std::string format = "both";
};

int cmd_mediate(const MediateArgs& args) {
  LoadedDataset loaded = load_dataset(
      args.data, args.design.empty()
                     ? std::nullopt
                     : std::optional<std::string>(args.design));
  const DataTypeSpec types = parse_data_type(args.type);
  if (loaded.data && !has_errors(loaded.diagnostics)) {
    auto checks = validate_dataset(*loaded.data, types);
    loaded.diagnostics.insert(loaded.diagnostics.end(), checks.begin(),
                              checks.end());
  }
  print_diagnostics(loaded.diagnostics, std::cerr);
  if (!loaded.data || has_errors(loaded.diagnostics)) return kExitValidation;
  const MediationDataset& data = *loaded.data;

  AnalysisConfig config;
  config.types = types;
  config.structure = parse_structure(args.structure);
  config.integrals.method = parse_method(args.method);
  config.integrals.nodes = args.nodes;
  config.fit.quad_nodes = args.fit_nodes;
  config.fit.use_reml = !args.use_ml;

  if (config.structure == EffectStructure::kExposureTime &&
      data.design.observable_exposure_levels().empty()) {
    std::cerr << "error\tconfig\tthe design has no observable exposure "
                 "levels; the exposure-time structure does not apply\n";
    return kExitConfig;
  }
  if (args.het_test && config.structure != EffectStructure::kExposureTime) {
    std::cerr << "error\tconfig\t--het-test requires --structure exposure\n";
    return kExitConfig;
  }
  if (args.profile != "median") {
    std::vector<double> values;
    std::stringstream ss(args.profile);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
      try {
        values.push_back(std::stod(piece));
      } catch (const std::exception&) {
        std::cerr << "error\tconfig\t--profile must be 'median' or a "
                     "comma-separated numeric list\n";
        return kExitConfig;
      }
    }
    if (values.size() != data.covariate_names.size()) {
      std::cerr << "error\tconfig\t--profile has " << values.size()
                << " values; the data has " << data.covariate_names.size()
                << " covariates\n";
      return kExitConfig;
    }
    CovariateProfile profile;
    profile.names = data.covariate_names;
    profile.values = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    profile.source = "user";
    config.profile = profile;
  }

  InferenceResult result;
  std::optional<HeterogeneityTest> het;
  try {
    FitSet fits = fit_all_replicates(data, config);
    result = jackknife_from_fits(fits, data.design, config.integrals);
    if (args.het_test) {
      het = heterogeneity_from_fits(fits, data.design, config.integrals);
    }
  } catch (const std::exception& e) {
    std::cerr << "error\tfit\t" << e.what() << '\n';
    return kExitFit;
  }

  std::cout << inference_csv(result, args.winzorize_mp);
  if (het) std::cout << heterogeneity_text(*het);
  if (!result.failed_clusters.empty()) {
    std::cerr << "warning\tjackknife\t" << result.failed_clusters.size()
              << " leave-one-out refit(s) failed; standard errors are "
                 "reported missing (clusters:";
    for (int c : result.failed_clusters) std::cerr << ' ' << c;
    std::cerr << ")\n";
  }

  if (!args.out.empty()) {
    bool ok = true;
    if (args.format != "json") {
      ok = write_file(args.out + "-estimates.csv",
                      estimates_csv(result.full)) &&
           ok;
      ok = write_file(args.out + "-inference.csv",
                      inference_csv(result, args.winzorize_mp)) &&
           ok;
    }
    if (args.format != "csv") {
      ok = write_file(args.out + ".json",
                      inference_json(result, args.winzorize_mp,
                                     het ? &*het : nullptr)) &&
           ok;
    }
    if (!ok) return kExitConfig;
  }
  return 0;
}

struct SimulateArgs {
  std::string scenario;
  std::string rows;
  int replications = -1;
  long long seed = -1;
  std::string out;
  std::string format = "both";
};

int cmd_simulate(const SimulateArgs& args) {
  std::ifstream in(args.scenario, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::vector<NamedScenario> rows;
  try {
    rows = scenarios_from_json(ss.str());
  } catch (const std::exception& e) {
    std::cerr << "error\tconfig\t" << e.what() << '\n';
    return kExitConfig;
  }

  if (!args.rows.empty()) {
    std::vector<NamedScenario> selected;
    std::stringstream names(args.rows);
    std::string name;
    while (std::getline(names, name, ',')) {
      bool found = false;
      for (const auto& row : rows) {
        if (row.name == name) {
          selected.push_back(row);
          found = true;
          break;
        }
      }
      if (!found) {
        std::cerr << "error\tconfig\tscenario file has no row named '"
                  << name << "'\n";
        return kExitConfig;
      }
    }
    rows = std::move(selected);
  }

  for (auto& row : rows) {
    if (args.replications > 0) row.scenario.n_replications = args.replications;
    if (args.seed >= 0) {
      row.scenario.rng_seed = static_cast<std::uint32_t>(args.seed);
    }
    std::cerr << "running '" << row.name << "': "
              << row.scenario.n_replications << " replication(s)\n";
    try {
      SimulationReport report = run_study(row.scenario);
      if (report.failure_flagged) {
        std::cerr << "warning\tsimulation\t" << report.n_failed << " of "
                  << report.n_replications
                  << " replicates failed (over 5%)\n";
      }
      std::cout << report_csv(report);
      if (!args.out.empty()) {
        const std::string stem = args.out + "-" + row.name;
        bool ok = true;
        if (args.format != "json") {
          ok = write_file(stem + ".csv", report_csv(report)) && ok;
        }
        if (args.format != "csv") {
          ok = write_file(stem + ".json",
                          report_json(report, row.scenario)) &&
               ok;
        }
        if (!ok) return kExitConfig;
      }
    } catch (const std::exception& e) {
      std::cerr << "error\tconfig\t" << e.what() << '\n';
      return kExitConfig;
    }
  }
  return 0;
}

struct ValidateArgs {
  std::string data;
  std::string design;
  std::string type;
};

int cmd_validate(const ValidateArgs& args) {
  LoadedDataset loaded = load_dataset(
      args.data, args.design.empty()
                     ? std::nullopt
                     : std::optional<std::string>(args.design));
  if (loaded.data && !has_errors(loaded.diagnostics)) {
    const DataTypeSpec types = args.type.empty()
                                   ? infer_data_type(*loaded.data)
                                   : parse_data_type(args.type);
    auto checks = validate_dataset(*loaded.data, types);
    loaded.diagnostics.insert(loaded.diagnostics.end(), checks.begin(),
                              checks.end());
  }
  print_diagnostics(loaded.diagnostics, std::cout);
  if (loaded.diagnostics.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Natural direct and indirect treatment effects in cross-sectional "
      "stepped-wedge trials"};
  app.require_subcommand(1);

  MediateArgs margs;
  CLI::App* mediate =
      app.add_subcommand("mediate", "estimate mediation measures from a CSV");
  mediate->add_option("--data", margs.data, "individual-level CSV")
      ->required()
      ->check(CLI::ExistingFile);
  mediate->add_option("--design", margs.design,
                      "design JSON (adoption periods, exclusions)")
      ->check(CLI::ExistingFile);
  mediate->add_option("--type", margs.type, "outcome/mediator kinds")
      ->required()
      ->check(CLI::IsMember({"ycmc", "ycmb", "ybmc", "ybmb"}));
  mediate->add_option("--structure", margs.structure, "treatment-effect form")
      ->check(CLI::IsMember({"constant", "exposure"}));
  mediate->add_option("--method", margs.method, "integral approximation")
      ->check(CLI::IsMember({"ghq", "sta"}));
  mediate->add_option("--nodes", margs.nodes,
                      "quadrature nodes for estimand evaluation")
      ->check(CLI::Range(1, 512));
  mediate->add_option("--fit-nodes", margs.fit_nodes,
                      "adaptive quadrature nodes for model fitting")
      ->check(CLI::Range(5, 50));
  mediate->add_flag("--ml", margs.use_ml,
                    "maximum likelihood instead of REML for linear models");
  mediate->add_option("--profile", margs.profile,
                      "covariate profile: median or value list");
  mediate->add_flag("--winzorize-mp", margs.winzorize_mp,
                    "clamp the mediation-proportion CI to [0, 1]");
  mediate->add_flag("--het-test", margs.het_test,
                    "test treatment-effect constancy over exposure time");
  mediate->add_option("--out", margs.out, "output path prefix");
  mediate->add_option("--format", margs.format, "which files --out writes")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  SimulateArgs sargs;
  CLI::App* simulate =
      app.add_subcommand("simulate", "run a replication study");
  simulate->add_option("--scenario", sargs.scenario, "scenario JSON")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--rows", sargs.rows,
                       "comma-separated row names to run");
  simulate->add_option("--replications", sargs.replications,
                       "override every row's replication count");
  simulate->add_option("--seed", sargs.seed, "override every row's seed");
  simulate->add_option("--out", sargs.out, "output path prefix");
  simulate->add_option("--format", sargs.format, "which files --out writes")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  ValidateArgs vargs;
  CLI::App* validate =
      app.add_subcommand("validate", "check a dataset and report problems");
  validate->add_option("--data", vargs.data, "individual-level CSV")
      ->required()
      ->check(CLI::ExistingFile);
  validate->add_option("--design", vargs.design, "design JSON")
      ->check(CLI::ExistingFile);
  validate->add_option("--type", vargs.type,
                       "outcome/mediator kinds (inferred when omitted)")
      ->check(CLI::IsMember({"ycmc", "ycmb", "ybmc", "ybmb"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (mediate->parsed()) return cmd_mediate(margs);
    if (simulate->parsed()) return cmd_simulate(sargs);
    if (validate->parsed()) return cmd_validate(vargs);
  } catch (const std::exception& e) {
    std::cerr << "error\tconfig\t" << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
