#include "swmediate/estimands.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "swmediate/integrals.hpp"
#include "swmediate/math.hpp"
#include "swmediate/rng.hpp"

using namespace swmediate;

namespace {

ColumnRoles make_roles(int n_periods, EffectStructure s,
                       const std::vector<int>& levels, ModelTarget target,
                       int n_cov) {
  ColumnRoles roles;
  roles.n_periods = n_periods;
  roles.structure = s;
  roles.target = target;
  int col = 0;
  for (int j = 1; j <= n_periods; ++j) {
    roles.period_cols.push_back(col++);
    roles.names.push_back("period_" + std::to_string(j));
  }
  if (s == EffectStructure::kConstant) {
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
  for (int c = 0; c < n_cov; ++c) {
    roles.covariate_cols.push_back(col++);
    roles.names.push_back("x" + std::to_string(c + 1));
  }
  return roles;
}

FittedModel synth_model(const ColumnRoles& roles,
                        const std::vector<double>& period_effects,
                        const std::vector<double>& treat_effects,
                        double beta_m, const std::vector<double>& cov_coefs,
                        double intercept_sd, double resid_sd) {
  FittedModel m;
  m.roles = roles;
  int total = static_cast<int>(roles.names.size());
  m.beta = Eigen::VectorXd::Zero(total);
  for (std::size_t j = 0; j < period_effects.size(); ++j) {
    m.beta(roles.period_cols[j]) = period_effects[j];
  }
  for (std::size_t t = 0; t < treat_effects.size(); ++t) {
    m.beta(roles.treatment_cols[t]) = treat_effects[t];
  }
  if (roles.mediator_col >= 0) m.beta(roles.mediator_col) = beta_m;
  for (std::size_t c = 0; c < cov_coefs.size(); ++c) {
    m.beta(roles.covariate_cols[c]) = cov_coefs[c];
  }
  m.random_intercept_sd = intercept_sd;
  m.residual_sd = resid_sd;
  m.converged = true;
  m.message = "synthetic";
  return m;
}

const std::vector<double> kBeta0 = {0.0, 0.1, 0.15, 0.175};
const std::vector<double> kGamma0 = {0.0, 0.3, 0.45, 0.525};
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// the four default-study pairs at theta=0.75, beta_m=0.625, eta=0.4
FittedModelPair study_pair(DataTypeSpec types, int n_cov = 0,
                           double beta_x = 0.0, double gamma_x = 0.0) {
  const bool yb = types.outcome == VarKind::kBinary;
  const bool mb = types.mediator == VarKind::kBinary;
  FittedModelPair pair;
  pair.types = types;
  pair.structure = EffectStructure::kConstant;
  ColumnRoles oroles = make_roles(4, EffectStructure::kConstant, {},
                                  ModelTarget::kOutcome, n_cov);
  ColumnRoles mroles = make_roles(4, EffectStructure::kConstant, {},
                                  ModelTarget::kMediator, n_cov);
  std::vector<double> bx(n_cov, beta_x);
  std::vector<double> gx(n_cov, gamma_x);
  pair.outcome = synth_model(oroles, kBeta0, {0.75}, 0.625, bx,
                             yb ? 0.605 : 0.334, yb ? kNan : 1.0);
  pair.mediator = synth_model(mroles, kGamma0, {0.4}, 0.0, gx,
                              mb ? 0.605 : 0.334, mb ? kNan : 1.0);
  return pair;
}

CovariateProfile profile_at(double x, int n_cov) {
  CovariateProfile p;
  p.source = "fixed";
  p.values = Eigen::VectorXd::Constant(n_cov, x);
  for (int c = 0; c < n_cov; ++c) p.names.push_back("x" + std::to_string(c));
  return p;
}

const EstimandOptions kGhq64{IntegralMethod::kGhq, 64};

}  // namespace

TEST_CASE("continuous outcome and mediator reduce to products") {
  FittedModelPair pair = study_pair({VarKind::kContinuous, VarKind::kContinuous});
  CovariateProfile prof = profile_at(0.0, 0);
  for (int j = 1; j <= 4; ++j) {
    EffectQuad q = nie_nde_constant(pair, j, prof, kGhq64);
    CHECK(q.nie == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(q.nde == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(q.te == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(q.mp == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("binary mediator scales the indirect path by the probability change") {
  FittedModelPair pair = study_pair({VarKind::kContinuous, VarKind::kBinary});
  CovariateProfile prof = profile_at(0.0, 0);

  EffectQuad q1 = nie_nde_constant(pair, 1, prof, kGhq64);
  EffectQuad q4 = nie_nde_constant(pair, 4, prof, kGhq64);

  // direct arm untouched by the mediator's link
  CHECK(q1.nde == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(q4.nde == doctest::Approx(0.75).epsilon(1e-14));
  // indirect arm shrinks as the baseline probability climbs the logistic
  // curve (gamma_0 rises over periods)
  CHECK(q1.nie > q4.nie);
  CHECK(q1.nie > 0.0);

  // oracle: beta_m * (kappa1 - kappa0) from the shared integral evaluator
  const double k1 = ghq_logistic_normal({0.4, 0.605}, 64);
  const double k0 = ghq_logistic_normal({0.0, 0.605}, 64);
  CHECK(q1.nie == doctest::Approx(0.625 * (k1 - k0)).epsilon(1e-13));
}

TEST_CASE("per-cell additivity holds to machine precision") {
  for (const char* code : {"ycmc", "ycmb", "ybmc", "ybmb"}) {
    FittedModelPair pair = study_pair(parse_data_type(code));
    CovariateProfile prof = profile_at(0.0, 0);
    for (int j = 1; j <= 4; ++j) {
      EffectQuad q = nie_nde_constant(pair, j, prof, kGhq64);
      CHECK(std::abs(q.te - (q.nie + q.nde)) < 1e-12);
      CHECK(q.mp == doctest::Approx(q.nie / q.te).epsilon(1e-12));
    }
  }
}

TEST_CASE("dependence on period and profile follows the outcome and mediator links") {
  CovariateProfile x0 = profile_at(0.0, 1);
  CovariateProfile x1 = profile_at(1.0, 1);

  // continuous/continuous: flat in period and profile
  FittedModelPair cc =
      study_pair({VarKind::kContinuous, VarKind::kContinuous}, 1, 0.3, 0.25);
  EffectQuad cc_a = nie_nde_constant(cc, 1, x0, kGhq64);
  EffectQuad cc_b = nie_nde_constant(cc, 3, x1, kGhq64);
  CHECK(cc_a.nie == doctest::Approx(cc_b.nie).epsilon(1e-14));
  CHECK(cc_a.nde == doctest::Approx(cc_b.nde).epsilon(1e-14));

  // continuous outcome, binary mediator: nie moves with period and profile,
  // nde stays the raw coefficient
  FittedModelPair cb =
      study_pair({VarKind::kContinuous, VarKind::kBinary}, 1, 0.3, 0.25);
  EffectQuad cb_j1 = nie_nde_constant(cb, 1, x0, kGhq64);
  EffectQuad cb_j3 = nie_nde_constant(cb, 3, x0, kGhq64);
  EffectQuad cb_x1 = nie_nde_constant(cb, 1, x1, kGhq64);
  CHECK(cb_j1.nie != doctest::Approx(cb_j3.nie).epsilon(1e-10));
  CHECK(cb_j1.nie != doctest::Approx(cb_x1.nie).epsilon(1e-10));
  CHECK(cb_j1.nde == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(cb_j3.nde == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(cb_x1.nde == doctest::Approx(0.75).epsilon(1e-14));

  // binary outcome: everything rides the marginal logit, so both components
  // move with period and profile
  FittedModelPair bc =
      study_pair({VarKind::kBinary, VarKind::kContinuous}, 1, 0.3, 0.25);
  EffectQuad bc_j1 = nie_nde_constant(bc, 1, x0, kGhq64);
  EffectQuad bc_j3 = nie_nde_constant(bc, 3, x0, kGhq64);
  EffectQuad bc_x1 = nie_nde_constant(bc, 1, x1, kGhq64);
  CHECK(bc_j1.nde != doctest::Approx(bc_j3.nde).epsilon(1e-10));
  CHECK(bc_j1.nde != doctest::Approx(bc_x1.nde).epsilon(1e-10));
  CHECK(bc_j1.nie != doctest::Approx(bc_x1.nie).epsilon(1e-10));

  FittedModelPair bb =
      study_pair({VarKind::kBinary, VarKind::kBinary}, 1, 0.3, 0.25);
  EffectQuad bb_j1 = nie_nde_constant(bb, 1, x0, kGhq64);
  EffectQuad bb_j3 = nie_nde_constant(bb, 3, x0, kGhq64);
  CHECK(bb_j1.nde != doctest::Approx(bb_j3.nde).epsilon(1e-10));
  CHECK(bb_j1.nie != doctest::Approx(bb_j3.nie).epsilon(1e-10));
}

TEST_CASE("binary outcome cells agree with a direct integral assembly") {
  FittedModelPair pair = study_pair({VarKind::kBinary, VarKind::kContinuous});
  CovariateProfile prof = profile_at(0.0, 0);
  const int j = 2;
  EffectQuad q = nie_nde_constant(pair, j, prof, kGhq64);

  const double sm = std::sqrt(0.334 * 0.334 + 1.0);
  auto mu_at = [&](int a, int a_star) {
    DoubleIntegralQuery dq;
    dq.outcome_base = kBeta0[j - 1] + (a ? 0.75 : 0.0);
    dq.mediator_mean = kGamma0[j - 1] + (a_star ? 0.4 : 0.0);
    dq.beta_m = 0.625;
    dq.mediator_marginal_sd = sm;
    dq.outcome_random_sd = 0.605;
    return mu_double_ghq(dq, 64);
  };
  CHECK(q.nie == doctest::Approx(logit(mu_at(1, 1)) - logit(mu_at(1, 0)))
                     .epsilon(1e-12));
  CHECK(q.nde == doctest::Approx(logit(mu_at(1, 0)) - logit(mu_at(0, 0)))
                     .epsilon(1e-12));
}

TEST_CASE("fully binary cells agree with a Monte Carlo oracle") {
  FittedModelPair pair = study_pair({VarKind::kBinary, VarKind::kBinary});
  CovariateProfile prof = profile_at(0.0, 0);
  const int j = 3;
  EffectQuad q = nie_nde_constant(pair, j, prof, kGhq64);

  // simulate the generating law of this cell directly
  const long n = 4000000;
  RngStream rng(424242u, 5, 0, 0);
  double sum_k1 = 0.0, sum_k0 = 0.0, sq_k1 = 0.0, sq_k0 = 0.0;
  double sum_l1m1 = 0.0, sum_l1m0 = 0.0, sum_l0m0 = 0.0, sum_l0m1 = 0.0;
  double sq_l1m1 = 0.0, sq_l1m0 = 0.0, sq_l0m0 = 0.0;
  for (long t = 0; t < n; ++t) {
    const double tau = rng.normal(0.0, 0.605);
    const double alpha = rng.normal(0.0, 0.605);
    const double k1 = expit(kGamma0[j - 1] + 0.4 + tau);
    const double k0 = expit(kGamma0[j - 1] + tau);
    sum_k1 += k1;
    sum_k0 += k0;
    sq_k1 += k1 * k1;
    sq_k0 += k0 * k0;
    const double l1m1 = expit(kBeta0[j - 1] + 0.75 + 0.625 + alpha);
    const double l1m0 = expit(kBeta0[j - 1] + 0.75 + alpha);
    const double l0m1 = expit(kBeta0[j - 1] + 0.625 + alpha);
    const double l0m0 = expit(kBeta0[j - 1] + alpha);
    sum_l1m1 += l1m1;
    sum_l1m0 += l1m0;
    sum_l0m1 += l0m1;
    sum_l0m0 += l0m0;
    sq_l1m1 += l1m1 * l1m1;
    sq_l1m0 += l1m0 * l1m0;
    sq_l0m0 += l0m0 * l0m0;
  }
  const double dn = static_cast<double>(n);
  const double k1 = sum_k1 / dn, k0 = sum_k0 / dn;
  const double l1m1 = sum_l1m1 / dn, l1m0 = sum_l1m0 / dn;
  const double l0m1 = sum_l0m1 / dn, l0m0 = sum_l0m0 / dn;
  const double p11 = l1m0 * (1.0 - k1) + l1m1 * k1;
  const double p10 = l1m0 * (1.0 - k0) + l1m1 * k0;
  const double p00 = l0m0 * (1.0 - k0) + l0m1 * k0;
  const double nie_mc = logit(p11) - logit(p10);
  const double nde_mc = logit(p10) - logit(p00);

  // crude but sufficient error bound: every averaged term has MC sd below
  // 0.5/sqrt(n); logits amplify by at most 1/(p(1-p)) ~ 5 here
  const double band = 5.0 * 5.0 * 0.5 / std::sqrt(dn);
  CHECK(std::abs(q.nie - nie_mc) < band);
  CHECK(std::abs(q.nde - nde_mc) < band);
}

TEST_CASE("summaries average uniformly and weight mp by te share") {
  FittedModelPair pair = study_pair({VarKind::kContinuous, VarKind::kBinary});
  CovariateProfile prof = profile_at(0.0, 0);
  MediationEstimates est =
      evaluate_estimands(pair, standard_design(6, 4, 0), prof, kGhq64);

  REQUIRE(est.per_period.size() == 4);
  double nie = 0.0, nde = 0.0;
  for (const auto& [j, q] : est.per_period) {
    nie += q.nie;
    nde += q.nde;
  }
  CHECK(est.overall.nie == doctest::Approx(nie / 4.0).epsilon(1e-14));
  CHECK(est.overall.nde == doctest::Approx(nde / 4.0).epsilon(1e-14));
  // with uniform weights the te-share-weighted mp telescopes to the ratio of
  // sums, which is also surfaced directly
  CHECK(est.overall.mp ==
        doctest::Approx(est.overall.nie / est.overall.te).epsilon(1e-12));
  CHECK(est.mp_ratio_of_sums ==
        doctest::Approx(est.overall.mp).epsilon(1e-12));
}

TEST_CASE("exposure cells and summaries honor the eligibility sets") {
  // exposure-time pair over the gap design: levels 2..6, top level observed
  // only in the final period
  TrialDesign design = standard_design(12, 8, 1);
  const std::vector<int> levels = design.observable_exposure_levels();
  REQUIRE(levels == std::vector<int>{2, 3, 4, 5, 6});

  std::vector<double> beta0(8), gamma0(8);
  for (int j = 0; j < 8; ++j) {
    beta0[j] = 0.02 * j;
    gamma0[j] = 0.05 * j;
  }
  std::vector<double> theta = {0.5, 0.7, 0.9, 1.1, 1.3};
  std::vector<double> eta = {0.2, 0.3, 0.4, 0.5, 0.6};

  FittedModelPair pair;
  pair.types = {VarKind::kContinuous, VarKind::kBinary};
  pair.structure = EffectStructure::kExposureTime;
  pair.outcome = synth_model(
      make_roles(8, EffectStructure::kExposureTime, levels,
                 ModelTarget::kOutcome, 0),
      beta0, theta, 0.625, {}, 0.334, 1.0);
  pair.mediator = synth_model(
      make_roles(8, EffectStructure::kExposureTime, levels,
                 ModelTarget::kMediator, 0),
      gamma0, eta, 0.0, {}, 0.605, kNan);

  CovariateProfile prof = profile_at(0.0, 0);
  MediationEstimates est = evaluate_estimands(pair, design, prof, kGhq64);

  std::size_t expect_cells = 0;
  for (int e : levels) expect_cells += design.eligible_periods(e).size();
  CHECK(est.per_cell.size() == expect_cells);
  REQUIRE(est.per_exposure.size() == 5);

  // top level: only period 8 is eligible, so the level summary IS that cell
  const auto& top = est.per_exposure.back();
  CHECK(top.first == 6);
  bool found = false;
  for (const auto& cell : est.per_cell) {
    if (std::get<0>(cell) == 8 && std::get<1>(cell) == 6) {
      found = true;
      CHECK(top.second.nie ==
            doctest::Approx(std::get<2>(cell).nie).epsilon(1e-14));
      CHECK(top.second.nde ==
            doctest::Approx(std::get<2>(cell).nde).epsilon(1e-14));
    }
  }
  CHECK(found);

  // level 2 averages its five eligible periods uniformly
  double nie2 = 0.0;
  int count2 = 0;
  for (const auto& cell : est.per_cell) {
    if (std::get<1>(cell) == 2) {
      nie2 += std::get<2>(cell).nie;
      ++count2;
    }
  }
  CHECK(count2 == 5);
  CHECK(est.per_exposure.front().second.nie ==
        doctest::Approx(nie2 / 5.0).epsilon(1e-13));

  // overall averages the levels uniformly
  double nie_all = 0.0;
  for (const auto& [e, q] : est.per_exposure) nie_all += q.nie;
  CHECK(est.overall.nie == doctest::Approx(nie_all / 5.0).epsilon(1e-13));
}

TEST_CASE("equal per-level effects collapse to the constant answer") {
  // continuous/continuous: cells are period-free, so an exposure fit with
  // identical level effects must reproduce the constant-structure summary
  TrialDesign design = standard_design(15, 4, 0);
  FittedModelPair flat;
  flat.types = {VarKind::kContinuous, VarKind::kContinuous};
  flat.structure = EffectStructure::kExposureTime;
  flat.outcome = synth_model(
      make_roles(4, EffectStructure::kExposureTime, {1, 2, 3},
                 ModelTarget::kOutcome, 0),
      kBeta0, {0.75, 0.75, 0.75}, 0.625, {}, 0.334, 1.0);
  flat.mediator = synth_model(
      make_roles(4, EffectStructure::kExposureTime, {1, 2, 3},
                 ModelTarget::kMediator, 0),
      kGamma0, {0.4, 0.4, 0.4}, 0.0, {}, 0.334, 1.0);
  CovariateProfile prof = profile_at(0.0, 0);
  MediationEstimates exp_est = evaluate_estimands(flat, design, prof, kGhq64);

  FittedModelPair constant =
      study_pair({VarKind::kContinuous, VarKind::kContinuous});
  MediationEstimates const_est =
      evaluate_estimands(constant, design, prof, kGhq64);

  CHECK(exp_est.overall.nie ==
        doctest::Approx(const_est.overall.nie).epsilon(1e-13));
  CHECK(exp_est.overall.nde ==
        doctest::Approx(const_est.overall.nde).epsilon(1e-13));
  CHECK(exp_est.overall.mp ==
        doctest::Approx(const_est.overall.mp).epsilon(1e-13));
}

TEST_CASE("cell evaluators reject impossible requests") {
  FittedModelPair constant = study_pair({VarKind::kContinuous, VarKind::kContinuous});
  CovariateProfile prof = profile_at(0.0, 0);
  CHECK_THROWS_AS(nie_nde_exposure(constant, 2, 1, prof, kGhq64),
                  std::logic_error);

  TrialDesign design = standard_design(15, 4, 0);
  FittedModelPair exposure;
  exposure.types = {VarKind::kContinuous, VarKind::kContinuous};
  exposure.structure = EffectStructure::kExposureTime;
  exposure.outcome = synth_model(
      make_roles(4, EffectStructure::kExposureTime, {1, 2, 3},
                 ModelTarget::kOutcome, 0),
      kBeta0, {0.5, 1.0, 1.5}, 0.625, {}, 0.334, 1.0);
  exposure.mediator = synth_model(
      make_roles(4, EffectStructure::kExposureTime, {1, 2, 3},
                 ModelTarget::kMediator, 0),
      kGamma0, {0.2, 0.4, 0.6}, 0.0, {}, 0.334, 1.0);

  CHECK_THROWS_AS(nie_nde_constant(exposure, 2, prof, kGhq64),
                  std::logic_error);
  CHECK_THROWS_AS(nie_nde_exposure(exposure, 2, 0, prof, kGhq64),
                  std::domain_error);
  // exposure 3 cannot have happened by period 2
  CHECK_THROWS_AS(nie_nde_exposure(exposure, 2, 3, prof, kGhq64),
                  std::domain_error);
  CHECK_NOTHROW(nie_nde_exposure(exposure, 4, 3, prof, kGhq64));
}

TEST_CASE("zero total effect leaves the proportion undefined") {
  EffectQuad q = make_effect_quad(0.3, -0.3);
  CHECK(q.te == 0.0);
  CHECK_FALSE(q.mp_defined);
  CHECK(std::isnan(q.mp));
  CHECK(q.te_near_zero);

  EffectQuad near = make_effect_quad(0.3, -0.3 + 1e-10);
  CHECK(near.te_near_zero);
  CHECK(near.mp_defined);

  EffectQuad fine = make_effect_quad(0.25, 0.75);
  CHECK_FALSE(fine.te_near_zero);
}

TEST_CASE("sta tracks ghq at the estimand level") {
  for (const char* code : {"ycmb", "ybmc", "ybmb"}) {
    FittedModelPair pair = study_pair(parse_data_type(code));
    CovariateProfile prof = profile_at(0.0, 0);
    MediationEstimates ghq =
        evaluate_estimands(pair, standard_design(6, 4, 0), prof, kGhq64);
    MediationEstimates sta = evaluate_estimands(
        pair, standard_design(6, 4, 0), prof, {IntegralMethod::kSta, 64});
    CHECK(std::abs(ghq.overall.nie - sta.overall.nie) < 0.05);
    CHECK(std::abs(ghq.overall.nde - sta.overall.nde) < 0.05);
    CHECK(sta.method == IntegralMethod::kSta);
  }
}

TEST_CASE("median profile takes medians and modes") {
  TrialDesign design = standard_design(6, 4, 0);
  MediationDataset data{design, {}, {}, {"age", "female"}};
  int t = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = 1; j <= 4; ++j) {
      IndividualRecord rec;
      rec.cluster = i;
      rec.period = j;
      rec.outcome = 1.0;
      rec.mediator = 0.0;
      rec.covariates = {static_cast<double>(t % 7), (t % 3 == 0) ? 1.0 : 0.0};
      data.records.push_back(rec);
      ++t;
    }
  }
  CovariateProfile prof = median_profile(data);
  REQUIRE(prof.values.size() == 2);
  // 24 values of t % 7: the middle pair is {2, 3}
  CHECK(prof.values(0) == doctest::Approx(2.5));
  // ones appear in 8 of 24 records; mode is 0
  CHECK(prof.values(1) == 0.0);
  CHECK(prof.source == "median");

  MediationDataset empty{design, {}, {}, {"z"}};
  CHECK_THROWS_AS(median_profile(empty), std::invalid_argument);
}

TEST_CASE("method names round trip") {
  CHECK(parse_method("ghq") == IntegralMethod::kGhq);
  CHECK(parse_method("sta") == IntegralMethod::kSta);
  CHECK(method_name(IntegralMethod::kSta) == "sta");
  CHECK_THROWS_AS(parse_method("mc"), std::invalid_argument);
  CHECK(parse_structure("constant") == EffectStructure::kConstant);
  CHECK(parse_structure("exposure") == EffectStructure::kExposureTime);
  CHECK_THROWS_AS(parse_structure("linear"), std::invalid_argument);
}
