#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "stagdid/aggregate.hpp"
#include "stagdid/csdid.hpp"
#include "stagdid/simlab.hpp"

using namespace stagdid;
using testutil::build_panel;
using testutil::throws_code;

namespace {

ScenarioSpec base_spec(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.n_periods = 4;
  spec.n_never = 80;
  spec.cohorts = {{2, 25}, {3, 35}};
  spec.set_constant_tau(1.0);
  spec.period_effects = {0.0, 0.3, 0.5, 1.1};
  spec.unit_effect_sd = 1.0;
  spec.noise_sd = 0.5;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("scenario validation rejects malformed specs") {
  ScenarioSpec spec = base_spec(1);
  spec.seed.reset();
  CHECK(throws_code(ErrorCode::ConfigMissingSeed, [&] { gen_panel(spec); }));

  spec = base_spec(1);
  spec.tau.erase({3, 4});
  CHECK(throws_code(ErrorCode::BadScenario, [&] { gen_panel(spec); }));

  spec = base_spec(1);
  spec.n_never = 0;
  CHECK(throws_code(ErrorCode::BadScenario, [&] { gen_panel(spec); }));

  spec = base_spec(1);
  spec.cohorts.push_back({1, 10});
  CHECK(throws_code(ErrorCode::BadScenario, [&] { gen_panel(spec); }));

  spec = base_spec(1);
  spec.period_effects = {0.0, 1.0};
  CHECK(throws_code(ErrorCode::BadScenario, [&] { gen_panel(spec); }));

  spec = base_spec(1);
  spec.n_covariates = 2;
  spec.gamma_trend = {1.0};
  CHECK(throws_code(ErrorCode::BadScenario, [&] { gen_panel(spec); }));
}

TEST_CASE("generated panels are canonical and deterministic in the seed") {
  ScenarioSpec spec = base_spec(404);
  spec.n_covariates = 2;
  spec.gamma_level = {0.5, -0.2};
  spec.gamma_trend = {0.4, 0.0};
  spec.select_coef = {0.8, 0.3};

  const GeneratedPanel a = gen_panel(spec);
  const GeneratedPanel b = gen_panel(spec);
  REQUIRE(a.panel.n_units() == b.panel.n_units());
  CHECK(a.attempts == b.attempts);
  for (int i = 0; i < a.panel.n_units(); ++i) {
    CHECK(a.panel.unit_id(i) == b.panel.unit_id(i));
    CHECK(a.panel.cohort(i) == b.panel.cohort(i));
    for (int t = 1; t <= a.panel.n_periods(); ++t) {
      CHECK(a.panel.outcome(i, t) == b.panel.outcome(i, t));
      for (int k = 0; k < a.panel.n_covariates(); ++k)
        CHECK(a.panel.covariate(i, t, k) == b.panel.covariate(i, t, k));
    }
  }

  // A different seed actually changes the data.
  ScenarioSpec other = spec;
  other.seed = 405;
  const GeneratedPanel c = gen_panel(other);
  bool same = true;
  for (int i = 0; i < a.panel.n_units() && same; ++i)
    same = a.panel.outcome(i, 1) == c.panel.outcome(i, 1);
  CHECK(!same);

  // Covariates are unit-constant, and the panel re-validates cleanly.
  for (int i = 0; i < a.panel.n_units(); ++i)
    for (int t = 2; t <= a.panel.n_periods(); ++t)
      for (int k = 0; k < a.panel.n_covariates(); ++k)
        CHECK(a.panel.covariate(i, t, k) == a.panel.covariate(i, 1, k));

  std::vector<RawRow> rows;
  for (int i = 0; i < a.panel.n_units(); ++i)
    for (int t = 1; t <= a.panel.n_periods(); ++t) {
      RawRow r;
      r.unit = a.panel.unit_id(i);
      r.period = t;
      r.outcome = a.panel.outcome(i, t);
      if (a.panel.cohort(i) != kNever) r.cohort = a.panel.cohort(i);
      for (int k = 0; k < a.panel.n_covariates(); ++k) r.covariates.push_back(a.panel.covariate(i, t, k));
      rows.push_back(std::move(r));
    }
  const PanelDataset revalidated = validate_panel(rows, a.panel.covariate_names());
  CHECK(revalidated.n_units() == a.panel.n_units());
  for (int i = 0; i < a.panel.n_units(); ++i) CHECK(revalidated.cohort(i) == a.panel.cohort(i));
}

TEST_CASE("impossible cohort assignment errors out after its retries") {
  ScenarioSpec spec = base_spec(7);
  spec.n_covariates = 1;
  spec.cov_mean = {3.0};
  spec.cov_sd = {0.1};
  spec.select_coef = {-40.0};  // cohort odds ~ exp(-120): never happens
  CHECK(throws_code(ErrorCode::EmptyCohort, [&] { gen_panel(spec); }));
}

TEST_CASE("zero noise and zero effect give zero cells everywhere") {
  ScenarioSpec spec = base_spec(11);
  spec.set_constant_tau(0.0);
  spec.noise_sd = 0.0;
  spec.n_covariates = 1;
  spec.gamma_level = {0.7};  // level effects cancel in differences
  spec.select_coef = {1.0};

  const GeneratedPanel gen = gen_panel(spec);
  const CohortDesign design = build_cohort_design(gen.panel);
  const GtattTable table = gtatt_table(gen.panel, design, {}, Flavor::DR);
  for (const auto& cell : table.cells) {
    CHECK(std::abs(cell.estimate) < 1e-10);
    CHECK(std::abs(oracle_gtatt(gen.panel, cell.g, cell.t)) < 1e-10);
  }
}

TEST_CASE("oracle agrees with the no-covariate estimator on every cell") {
  ScenarioSpec spec = base_spec(13);
  spec.set_event_linear_tau(0.5, 0.75);
  const GeneratedPanel gen = gen_panel(spec);
  const CohortDesign design = build_cohort_design(gen.panel);
  for (Flavor flavor : {Flavor::OR, Flavor::IPW, Flavor::DR}) {
    const GtattTable table = gtatt_table(gen.panel, design, {}, flavor);
    for (const auto& cell : table.cells)
      CHECK(cell.estimate == doctest::Approx(oracle_gtatt(gen.panel, cell.g, cell.t)).epsilon(1e-10));
  }
}

TEST_CASE("oracle hand cases") {
  const PanelDataset p = build_panel({2, 0}, 2, [](int i, int t) {
    // Treated unit rises by 7, control by 4.
    return i == 0 ? (t == 1 ? 1.0 : 8.0) : (t == 1 ? 2.0 : 6.0);
  });
  CHECK(oracle_gtatt(p, 2, 2) == doctest::Approx(3.0).epsilon(1e-12));

  const PanelDataset swapped = build_panel({0, 2}, 2, [](int i, int t) {
    return i == 0 ? (t == 1 ? 1.0 : 8.0) : (t == 1 ? 2.0 : 6.0);
  });
  CHECK(oracle_gtatt(swapped, 2, 2) == doctest::Approx(-3.0).epsilon(1e-12));

  CHECK(throws_code(ErrorCode::EmptyCell, [&] { oracle_gtatt(p, 3, 2); }));
  CHECK(throws_code(ErrorCode::NoPrePeriods, [&] { oracle_gtatt(p, 2, 1); }));
}

TEST_CASE("confounded selection biases the raw contrast but not the adjusted one") {
  ScenarioSpec spec = base_spec(17);
  spec.set_constant_tau(0.0);
  spec.noise_sd = 0.0;
  spec.n_never = 250;
  spec.cohorts = {{2, 120}, {3, 120}};
  spec.set_constant_tau(0.0);
  spec.n_covariates = 1;
  spec.gamma_trend = {1.0};
  spec.select_coef = {2.0};

  const GeneratedPanel gen = gen_panel(spec);
  const CohortDesign design = build_cohort_design(gen.panel);

  // Raw contrast picks up the covariate-driven trend gap.
  CHECK(std::abs(oracle_gtatt(gen.panel, 2, 2)) > 0.2);

  // The outcome change is exactly linear in x with no noise, so the adjusted
  // estimator removes the confounding entirely.
  const std::vector<std::string> covs = {"x1"};
  const GtattTable table = gtatt_table(gen.panel, design, covs, Flavor::DR);
  for (const auto& cell : table.cells) {
    REQUIRE(!cell.failed());
    CHECK(std::abs(cell.estimate) < 1e-8);
  }
}

TEST_CASE("placebo cells are nonzero exactly when a violation is injected") {
  ScenarioSpec spec = base_spec(19);
  spec.set_constant_tau(2.0);
  spec.noise_sd = 0.0;

  const GeneratedPanel clean = gen_panel(spec);
  const GtattTable clean_table =
      gtatt_table(clean.panel, build_cohort_design(clean.panel), {}, Flavor::DR);
  CHECK(std::abs(clean_table.at(3, 2).estimate) < 1e-10);

  spec.violation_slope = 0.3;
  const GeneratedPanel broken = gen_panel(spec);
  const GtattTable broken_table =
      gtatt_table(broken.panel, build_cohort_design(broken.panel), {}, Flavor::DR);
  // Consecutive-period placebo picks up exactly one period of drift.
  CHECK(broken_table.at(3, 2).estimate == doctest::Approx(0.3).epsilon(1e-10));
  // Post cells absorb tau plus the accumulated drift from the base period.
  CHECK(broken_table.at(2, 2).estimate == doctest::Approx(2.3).epsilon(1e-10));
  CHECK(broken_table.at(2, 4).estimate == doctest::Approx(2.0 + 0.3 * 3).epsilon(1e-10));
}

TEST_CASE("truth table arithmetic") {
  TruthTable truth;
  truth.tau = {{{2, 2}, 1.0}, {{2, 3}, 2.0}, {{2, 4}, 3.0}, {{3, 3}, 1.0}, {{3, 4}, 2.0}};
  CohortDesign d;
  d.cohorts = {2, 3};
  d.cohort_n = {10, 30};
  d.n_never = 60;
  d.n_periods = 4;

  CHECK(truth.at(2, 3) == doctest::Approx(2.0));
  CHECK(throws_code(ErrorCode::MissingCell, [&] { truth.at(2, 5); }));
  CHECK(truth.group_mean(2, 4) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(truth.group_mean(3, 4) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(truth.overall(d, 4) == doctest::Approx((10.0 * 2.0 + 30.0 * 1.5) / 40.0).epsilon(1e-12));
  CHECK(truth.cell_weighted(d, 4) == doctest::Approx((10.0 * 6.0 + 30.0 * 3.0) / 90.0).epsilon(1e-12));
  CHECK(truth.event_mean(0, d, 4) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(truth.event_mean(1, d, 4) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(truth.event_mean(2, d, 4) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(throws_code(ErrorCode::NoEligibleCohort, [&] { truth.event_mean(3, d, 4); }));
}

TEST_CASE("tau helpers fill every post cell") {
  ScenarioSpec spec = base_spec(23);
  spec.tau.clear();
  spec.set_event_linear_tau(1.0, 1.0);
  CHECK(spec.tau.at({2, 2}) == doctest::Approx(1.0));
  CHECK(spec.tau.at({2, 4}) == doctest::Approx(3.0));
  CHECK(spec.tau.at({3, 3}) == doctest::Approx(1.0));
  CHECK(spec.tau.at({3, 4}) == doctest::Approx(2.0));
  CHECK(spec.tau.size() == 5);
}

TEST_CASE("bias demo: dynamic effects break TWFE but not the group-time pipeline") {
  ScenarioSpec spec = base_spec(29);
  spec.tau.clear();
  spec.set_event_linear_tau(1.0, 1.0);  // tau = e + 1
  spec.noise_sd = 0.0;

  const BiasDemoReport report = twfe_bias_demo(spec, 1);
  CHECK(std::abs(report.cs_gap) < 1e-8);
  CHECK(std::abs(report.twfe_gap) > 0.01);
  CHECK(std::abs(report.twfe_gap) > std::abs(report.cs_gap));
}

TEST_CASE("bias demo: constant effects satisfy both estimators") {
  ScenarioSpec spec = base_spec(31);
  spec.set_constant_tau(1.5);
  spec.noise_sd = 0.0;
  const BiasDemoReport report = twfe_bias_demo(spec, 1);
  CHECK(std::abs(report.cs_gap) < 1e-8);
  CHECK(std::abs(report.twfe_gap) < 1e-8);
  CHECK(report.truth_cell_weighted == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("bias demo holds up over noisy replications") {
  ScenarioSpec spec = base_spec(37);
  spec.tau.clear();
  spec.set_event_linear_tau(1.0, 1.0);
  spec.noise_sd = 0.6;
  const BiasDemoReport report = twfe_bias_demo(spec, 20);
  CHECK(report.replications == 20);
  CHECK(std::abs(report.twfe_gap) > std::abs(report.cs_gap));
  CHECK(std::abs(report.cs_gap) < 0.15);
}
