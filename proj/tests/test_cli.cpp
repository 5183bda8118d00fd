#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "swmediate/csv.hpp"
#include "swmediate/serialize.hpp"

using namespace swmediate;

// Drives the installed binary the way a user would: one process per call,
// checking exit codes and the files it leaves behind.

namespace {

const std::string kDir = "/tmp/swmediate_cli_test";

void ensure_dir() { std::filesystem::create_directories(kDir); }

int run(const std::string& args, std::string* out = nullptr,
        std::string* err = nullptr) {
  ensure_dir();
  const std::string out_path = kDir + "/stdout.txt";
  const std::string err_path = kDir + "/stderr.txt";
  const std::string cmd = std::string(SWMEDIATE_CLI_PATH) + " " + args +
                          " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  auto slurp = [](const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (out) *out = slurp(out_path);
  if (err) *err = slurp(err_path);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string dataset_csv(const MediationDataset& data) {
  std::ostringstream os;
  os.precision(17);
  os << "cluster,period,outcome,mediator,treatment\n";
  for (const auto& rec : data.records) {
    os << data.cluster_labels[rec.cluster] << ',' << rec.period << ',';
    if (rec.outcome) os << *rec.outcome;
    os << ',';
    if (rec.mediator) os << *rec.mediator;
    os << ','
       << (data.design.treated(rec.cluster, rec.period) ? 1 : 0) << '\n';
  }
  return os.str();
}

// a small continuous/continuous trial from the simulation generator
std::string fixture_csv() {
  static std::string cached;
  if (cached.empty()) {
    SimulationScenario scenario;
    scenario.data_type = parse_data_type("ycmc");
    scenario.n_clusters = 6;
    scenario.n_periods = 4;
    scenario.cell_size = 8;
    const GeneratingParams params = calibrate_coefficients(scenario);
    cached = dataset_csv(generate(params, 20260819u, 0));
  }
  return cached;
}

}  // namespace

TEST_CASE("mediate runs end to end and writes the requested files") {
  ensure_dir();
  const std::string data = kDir + "/trial.csv";
  write_text(data, fixture_csv());
  const std::string prefix = kDir + "/fit";

  std::string out, err;
  const int code =
      run("mediate --data " + data +
              " --type ycmc --structure constant --method ghq --out " +
              prefix + " --format both",
          &out, &err);
  CHECK(code == 0);
  CHECK(out.rfind("level,period,exposure,measure,estimate,se,ci_low,ci_high",
                  0) == 0);
  CHECK(err.empty());  // clean data, clean jackknife

  std::ifstream est_in(prefix + "-estimates.csv");
  REQUIRE(est_in.good());
  std::ostringstream est_text;
  est_text << est_in.rdbuf();
  auto rows = parse_estimates_csv(est_text.str());
  REQUIRE(rows.size() == 20);  // overall + 4 periods
  CHECK(rows[0].level == "overall");

  std::ifstream inf_in(prefix + "-inference.csv");
  REQUIRE(inf_in.good());
  std::string header;
  std::getline(inf_in, header);
  CHECK(header == "level,period,exposure,measure,estimate,se,ci_low,ci_high");

  std::ifstream json_in(prefix + ".json");
  REQUIRE(json_in.good());
  const auto j = nlohmann::json::parse(json_in);
  CHECK(j.at("n_clusters") == 6);
  CHECK(j.at("inference").size() == 20);
  CHECK_FALSE(j.contains("heterogeneity_test"));
}

TEST_CASE("mediate runs the heterogeneity test under the exposure structure") {
  ensure_dir();
  const std::string data = kDir + "/trial.csv";
  write_text(data, fixture_csv());
  const std::string prefix = kDir + "/het";

  std::string out;
  const int code = run("mediate --data " + data +
                           " --type ycmc --structure exposure --het-test"
                           " --out " +
                           prefix + " --format json",
                       &out);
  CHECK(code == 0);
  CHECK(out.find("treatment-effect constancy over exposure time") !=
        std::string::npos);

  std::ifstream json_in(prefix + ".json");
  REQUIRE(json_in.good());
  const auto j = nlohmann::json::parse(json_in);
  REQUIRE(j.contains("heterogeneity_test"));
  CHECK(j.at("heterogeneity_test").at("df") == 2);  // levels 1..3

  // --format json must not leave csv files behind
  CHECK_FALSE(std::ifstream(prefix + "-estimates.csv").good());
}

TEST_CASE("configuration mistakes exit with code 1") {
  ensure_dir();
  const std::string data = kDir + "/trial.csv";
  write_text(data, fixture_csv());

  std::string err;
  CHECK(run("mediate --data " + data + " --type ycmc --het-test", nullptr,
            &err) == 1);
  CHECK(err.find("--het-test requires") != std::string::npos);

  CHECK(run("mediate --data " + data + " --type ycmc --profile 1,2", nullptr,
            &err) == 1);
  CHECK(err.find("--profile") != std::string::npos);

  // the data has no covariates, so a non-numeric profile cannot parse either
  CHECK(run("mediate --data " + data + " --type ycmc --profile mean", nullptr,
            &err) == 1);

  CHECK(run("mediate --data " + data, nullptr, &err) == 1);  // --type missing
  CHECK(run("mediate --data " + data + " --type ycmz", nullptr, &err) == 1);
  CHECK(run("nonsense", nullptr, &err) == 1);

  // an all-control trial has no exposure levels to model
  const std::string flat = kDir + "/flat.csv";
  write_text(flat,
             "cluster,period,outcome,mediator,treatment\n"
             "a,1,1.0,0.5,0\na,2,0.5,0.25,0\na,3,1.5,1.0,0\n"
             "b,1,1.2,0.7,0\nb,2,0.9,0.1,0\nb,3,0.3,0.6,0\n");
  CHECK(run("mediate --data " + flat + " --type ycmc --structure exposure",
            nullptr, &err) == 1);
  CHECK(err.find("no observable exposure") != std::string::npos);
}

TEST_CASE("unusable data exits with code 2 and names the problem") {
  ensure_dir();
  const std::string bad = kDir + "/reverted.csv";
  write_text(bad,
             "cluster,period,outcome,mediator,treatment\n"
             "a,1,1,1,0\na,2,1,1,1\na,3,1,1,0\n");

  std::string err;
  CHECK(run("mediate --data " + bad + " --type ycmc", nullptr, &err) == 2);
  CHECK(err.find("not-uni-directional") != std::string::npos);

  // a binary type against clearly continuous responses fails validation
  const std::string data = kDir + "/trial.csv";
  write_text(data, fixture_csv());
  CHECK(run("mediate --data " + data + " --type ybmb", nullptr, &err) == 2);
}

TEST_CASE("validate prints ok exactly when there is nothing to report") {
  ensure_dir();
  const std::string data = kDir + "/trial.csv";
  write_text(data, fixture_csv());

  std::string out;
  CHECK(run("validate --data " + data, &out) == 0);
  CHECK(out == "ok\n");
  CHECK(run("validate --data " + data + " --type ycmc", &out) == 0);

  const std::string bad = kDir + "/reverted.csv";
  write_text(bad,
             "cluster,period,outcome,mediator,treatment\n"
             "a,1,1,1,0\na,2,1,1,1\na,3,1,1,0\n");
  CHECK(run("validate --data " + bad, &out) == 2);
  CHECK(out.find("not-uni-directional") != std::string::npos);

  CHECK(run("validate --data " + kDir + "/does_not_exist.csv", &out) == 1);
}

TEST_CASE("simulate runs scenario rows and honors overrides") {
  ensure_dir();
  const std::string scenario_path = kDir + "/scenario.json";
  write_text(scenario_path, R"({
    "rows": [
      {"name": "tiny", "data_type": "ycmc", "n_clusters": 6, "n_periods": 4,
       "cell_size": 8, "methods": ["ghq"], "n_replications": 2,
       "rng_seed": 11},
      {"name": "skipped", "data_type": "ycmc", "n_clusters": 200,
       "n_replications": 1000}
    ]
  })");

  std::string out, err;
  const int code = run("simulate --scenario " + scenario_path +
                           " --rows tiny --replications 2 --out " + kDir +
                           "/sim --format both",
                       &out, &err);
  CHECK(code == 0);
  CHECK(out.rfind("method,level,period,exposure,measure,truth", 0) == 0);
  CHECK(err.find("running 'tiny': 2 replication(s)") != std::string::npos);

  std::ifstream csv_in(kDir + "/sim-tiny.csv");
  CHECK(csv_in.good());
  std::ifstream json_in(kDir + "/sim-tiny.json");
  REQUIRE(json_in.good());
  const auto j = nlohmann::json::parse(json_in);
  CHECK(j.at("n_replications") == 2);
  CHECK(j.at("scenario").at("n_clusters") == 6);
  CHECK_FALSE(std::ifstream(kDir + "/sim-skipped.json").good());

  CHECK(run("simulate --scenario " + scenario_path + " --rows missing",
            nullptr, &err) == 1);
  CHECK(err.find("no row named 'missing'") != std::string::npos);

  const std::string broken = kDir + "/broken.json";
  write_text(broken, R"({"target_pm": 0.4})");
  CHECK(run("simulate --scenario " + broken, nullptr, &err) == 1);
  CHECK(err.find("unknown key") != std::string::npos);
}
