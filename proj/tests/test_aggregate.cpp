#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "stagdid/aggregate.hpp"

using namespace stagdid;
using testutil::build_panel;
using testutil::throws_code;

namespace {

// Table with fixed cell estimates and no influence vectors; enough for the
// weighting arithmetic, which never looks at the panel itself.
GtattTable fixed_table(const std::vector<std::tuple<int, int, double>>& cells, int n_periods) {
  GtattTable table;
  table.n_periods = n_periods;
  for (const auto& [g, t, est] : cells) {
    GtattCell c;
    c.g = g;
    c.t = t;
    c.e = t - g;
    c.estimate = est;
    table.cells.push_back(c);
  }
  return table;
}

CohortDesign two_cohort_design() {
  CohortDesign d;
  d.cohorts = {2, 3};
  d.cohort_n = {41, 135};
  d.n_never = 6045;
  d.n_periods = 4;
  return d;
}

double weight_sum(const AggregationResult& r) {
  double s = 0.0;
  for (const auto& w : r.weights) s += w.w;
  return s;
}

// Staggered panel with unit noise and a constant effect, for bootstrap tests.
PanelDataset noisy_panel(std::uint64_t seed, int n, double tau, double noise_sd) {
  Rng rng(seed);
  std::vector<int> cohorts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    cohorts[static_cast<std::size_t>(i)] = u < 0.25 ? 2 : (u < 0.5 ? 3 : 0);
  }
  std::vector<double> alpha(static_cast<std::size_t>(n)), eps(static_cast<std::size_t>(n) * 4);
  for (auto& a : alpha) a = rng.normal();
  for (auto& e : eps) e = rng.normal(0.0, noise_sd);
  return build_panel(cohorts, 4, [&](int i, int t) {
    const int g = cohorts[static_cast<std::size_t>(i)];
    double y = alpha[static_cast<std::size_t>(i)] + 0.4 * t + eps[static_cast<std::size_t>(i * 4 + t - 1)];
    if (g != 0 && t >= g) y += tau;
    return y;
  });
}

}  // namespace

TEST_CASE("group aggregate is the unweighted mean over post periods") {
  const GtattTable table =
      fixed_table({{2, 2, 2.3}, {2, 3, 3.1}, {2, 4, 3.2}, {3, 3, 0.9}, {3, 4, 1.5}}, 4);
  const CohortDesign d = two_cohort_design();

  const AggregationResult g2 = agg_group(table, d, 2);
  CHECK(g2.estimate == doctest::Approx(8.6 / 3.0).epsilon(1e-12));
  CHECK(g2.kind == AggKind::Group);
  CHECK(g2.key == 2);
  CHECK(weight_sum(g2) == doctest::Approx(1.0).epsilon(1e-12));

  const AggregationResult g3 = agg_group(table, d, 3);
  CHECK(g3.estimate == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("overall aggregate weights group means by cohort shares") {
  const GtattTable table =
      fixed_table({{2, 2, 2.3}, {2, 3, 3.1}, {2, 4, 3.2}, {3, 3, 0.9}, {3, 4, 1.5}}, 4);
  const CohortDesign d = two_cohort_design();
  const AggregationResult overall = agg_overall(table, d);
  const double expect = (41.0 * (8.6 / 3.0) + 135.0 * 1.2) / 176.0;
  CHECK(overall.estimate == doctest::Approx(expect).epsilon(1e-12));
  CHECK(overall.estimate == doctest::Approx(1.588).epsilon(1e-3));
  CHECK(weight_sum(overall) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("event aggregates renormalize over eligible cohorts") {
  const GtattTable table =
      fixed_table({{2, 2, 2.3}, {2, 3, 3.1}, {2, 4, 3.2}, {3, 2, 0.4}, {3, 3, 0.9}, {3, 4, 1.5}}, 4);
  const CohortDesign d = two_cohort_design();

  const AggregationResult e1 = agg_event(table, d, 1);
  CHECK(e1.estimate == doctest::Approx(329.6 / 176.0).epsilon(1e-12));
  CHECK(e1.estimate == doctest::Approx(1.873).epsilon(1e-3));

  const AggregationResult e2 = agg_event(table, d, 2);
  CHECK(e2.estimate == doctest::Approx(3.2).epsilon(1e-12));
  REQUIRE(e2.weights.size() == 1);
  CHECK(e2.weights[0].w == doctest::Approx(1.0).epsilon(1e-12));

  const AggregationResult e0 = agg_event(table, d, 0);
  CHECK(e0.estimate == doctest::Approx(215.8 / 176.0).epsilon(1e-12));

  // Negative event time reaches the pre placebo cell; only cohort 3 has one.
  const AggregationResult em1 = agg_event(table, d, -1);
  CHECK(em1.estimate == doctest::Approx(0.4).epsilon(1e-12));

  CHECK(weight_sum(e0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weight_sum(e1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(throws_code(ErrorCode::NoEligibleCohort, [&] { agg_event(table, d, 3); }));
  CHECK(throws_code(ErrorCode::NoEligibleCohort, [&] { agg_event(table, d, -2); }));
}

TEST_CASE("simple aggregate weights each post cell by cohort size") {
  const GtattTable table =
      fixed_table({{2, 2, 2.3}, {2, 3, 3.1}, {2, 4, 3.2}, {3, 3, 0.9}, {3, 4, 1.5}}, 4);
  const CohortDesign d = two_cohort_design();
  const AggregationResult simple = agg_simple(table, d);
  const double expect = (41.0 * 8.6 + 135.0 * 2.4) / 393.0;
  CHECK(simple.estimate == doctest::Approx(expect).epsilon(1e-12));
  CHECK(simple.estimate == doctest::Approx(1.722).epsilon(1e-3));
  CHECK(weight_sum(simple) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aggregates are linear in the cells") {
  const std::vector<std::tuple<int, int, double>> base = {
      {2, 2, 2.3}, {2, 3, 3.1}, {2, 4, 3.2}, {3, 3, 0.9}, {3, 4, 1.5}};
  std::vector<std::tuple<int, int, double>> scaled = base;
  for (auto& [g, t, est] : scaled) est *= -2.5;
  const CohortDesign d = two_cohort_design();
  const GtattTable ta = fixed_table(base, 4);
  const GtattTable tb = fixed_table(scaled, 4);
  CHECK(agg_overall(tb, d).estimate == doctest::Approx(-2.5 * agg_overall(ta, d).estimate).epsilon(1e-12));
  CHECK(agg_simple(tb, d).estimate == doctest::Approx(-2.5 * agg_simple(ta, d).estimate).epsilon(1e-12));
  CHECK(agg_event(tb, d, 1).estimate == doctest::Approx(-2.5 * agg_event(ta, d, 1).estimate).epsilon(1e-12));
}

TEST_CASE("homogeneous effects pass through every aggregation") {
  const double tau = 0.77;
  const GtattTable table =
      fixed_table({{2, 2, tau}, {2, 3, tau}, {2, 4, tau}, {3, 3, tau}, {3, 4, tau}}, 4);
  const CohortDesign d = two_cohort_design();
  CHECK(agg_overall(table, d).estimate == doctest::Approx(tau).epsilon(1e-12));
  CHECK(agg_simple(table, d).estimate == doctest::Approx(tau).epsilon(1e-12));
  CHECK(agg_event(table, d, 0).estimate == doctest::Approx(tau).epsilon(1e-12));
}

TEST_CASE("single cohort: overall equals group equals simple") {
  const GtattTable table = fixed_table({{2, 2, 1.0}, {2, 3, 2.0}, {2, 4, 4.5}}, 4);
  CohortDesign d;
  d.cohorts = {2};
  d.cohort_n = {10};
  d.n_never = 30;
  d.n_periods = 4;
  const double group = agg_group(table, d, 2).estimate;
  CHECK(agg_overall(table, d).estimate == doctest::Approx(group).epsilon(1e-12));
  CHECK(agg_simple(table, d).estimate == doctest::Approx(group).epsilon(1e-12));
}

TEST_CASE("failed cells poison their aggregates") {
  GtattTable table = fixed_table({{2, 2, 1.0}, {2, 3, 2.0}, {2, 4, 4.5}}, 4);
  table.cells[1].estimate = kNaN;
  CohortDesign d;
  d.cohorts = {2};
  d.cohort_n = {10};
  d.n_never = 30;
  d.n_periods = 4;
  CHECK(throws_code(ErrorCode::MissingCell, [&] { agg_group(table, d, 2); }));
  CHECK(throws_code(ErrorCode::MissingCell, [&] { agg_overall(table, d); }));
  // An event time that avoids the bad cell still works.
  CHECK(agg_event(table, d, 2).estimate == doctest::Approx(4.5).epsilon(1e-12));
}

TEST_CASE("event_times lists distinct event offsets ascending") {
  const GtattTable table =
      fixed_table({{2, 2, 0.0}, {2, 3, 0.0}, {2, 4, 0.0}, {3, 2, 0.0}, {3, 3, 0.0}, {3, 4, 0.0}}, 4);
  CHECK(event_times(table) == std::vector<int>{-1, 0, 1, 2});
}

TEST_CASE("fitted aggregates carry influence consistent with their estimate") {
  const PanelDataset p = noisy_panel(211, 120, 1.0, 0.5);
  const CohortDesign d = build_cohort_design(p);
  const GtattTable table = gtatt_table(p, d, {}, Flavor::DR);
  for (const AggregationResult& r :
       {agg_overall(table, d), agg_simple(table, d), agg_group(table, d, 2), agg_event(table, d, 0)}) {
    REQUIRE(r.influence.size() == static_cast<std::size_t>(d.n_total()));
    CHECK(mean(r.influence) == doctest::Approx(r.estimate).epsilon(1e-10));
    CHECK(r.se > 0.0);
    CHECK(r.ci_lo == doctest::Approx(r.estimate - 1.96 * r.se).epsilon(1e-12));
    CHECK(r.ci_hi == doctest::Approx(r.estimate + 1.96 * r.se).epsilon(1e-12));
  }
}

TEST_CASE("stratified resampling preserves cohort counts") {
  const PanelDataset p = noisy_panel(223, 90, 0.5, 0.5);
  Rng rng(5);
  const std::vector<int> idx = stratified_resample(p, rng);
  REQUIRE(idx.size() == static_cast<std::size_t>(p.n_units()));

  std::map<int, int> original, resampled;
  for (int i = 0; i < p.n_units(); ++i) original[p.cohort(i)]++;
  for (int i : idx) {
    REQUIRE(i >= 0);
    REQUIRE(i < p.n_units());
    resampled[p.cohort(i)]++;
  }
  CHECK(original == resampled);

  // Same rng seed, same draw; different seed, different draw.
  Rng rng_a(5), rng_b(6);
  CHECK(stratified_resample(p, rng_a) == idx);
  CHECK(stratified_resample(p, rng_b) != idx);
}

TEST_CASE("bootstrap rejects too few replicates") {
  const PanelDataset p = noisy_panel(227, 40, 0.5, 0.5);
  CHECK(throws_code(ErrorCode::ConfigInvalid, [&] { bootstrap_inference(p, {}, 99, 1); }));
}

TEST_CASE("bootstrap on a noiseless panel collapses to zero spread") {
  // Unit effects cancel in differences, so every resample sees identical
  // changes and every draw equals the point estimate.
  const std::vector<int> cohorts = {2, 2, 3, 3, 0, 0, 0, 0};
  const PanelDataset p = build_panel(cohorts, 4, [&](int i, int t) {
    const int g = cohorts[static_cast<std::size_t>(i)];
    return 3.0 * i + 0.5 * t + ((g != 0 && t >= g) ? 1.25 : 0.0);
  });
  const BootstrapInference boot = bootstrap_inference(p, {}, 100, 42);
  CHECK(boot.overall.estimate == doctest::Approx(1.25).epsilon(1e-10));
  CHECK(boot.overall.se == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(boot.n_failed_replicates == 0);
  for (double d : boot.overall.draws) CHECK(d == doctest::Approx(1.25).epsilon(1e-10));
  CHECK(boot.overall.ci_pct_lo == doctest::Approx(1.25).epsilon(1e-10));
  CHECK(boot.overall.ci_pct_hi == doctest::Approx(1.25).epsilon(1e-10));
}

TEST_CASE("bootstrap is deterministic in the seed and thread count") {
  const PanelDataset p = noisy_panel(229, 60, 0.8, 0.6);
  const BootstrapInference a = bootstrap_inference(p, {}, 120, 999, 1);
  const BootstrapInference b = bootstrap_inference(p, {}, 120, 999, 3);
  const BootstrapInference c = bootstrap_inference(p, {}, 120, 1000, 1);

  REQUIRE(a.overall.draws.size() == 120);
  REQUIRE(b.overall.draws.size() == 120);
  bool identical = true, differs = false;
  for (std::size_t r = 0; r < 120; ++r) {
    if (a.overall.draws[r] != b.overall.draws[r]) identical = false;
    if (a.overall.draws[r] != c.overall.draws[r]) differs = true;
  }
  CHECK(identical);
  CHECK(differs);

  // Cell draws too, not just the headline number.
  for (const auto& [key, summary] : a.cell_boot) {
    const auto& other = b.cell_boot.at(key);
    REQUIRE(summary.draws.size() == other.draws.size());
    for (std::size_t r = 0; r < summary.draws.size(); ++r) CHECK(summary.draws[r] == other.draws[r]);
  }
}

TEST_CASE("bootstrap summaries are internally consistent") {
  const PanelDataset p = noisy_panel(233, 80, 1.0, 0.7);
  const BootstrapInference boot = bootstrap_inference(p, {}, 150, 31);

  CHECK(boot.overall.se > 0.0);
  CHECK(boot.overall.ci_lo == doctest::Approx(boot.overall.estimate - 1.96 * boot.overall.se).epsilon(1e-12));
  CHECK(boot.overall.ci_hi == doctest::Approx(boot.overall.estimate + 1.96 * boot.overall.se).epsilon(1e-12));

  const std::vector<double> valid = drop_nan(boot.overall.draws);
  CHECK(boot.overall.se == doctest::Approx(sample_sd(valid)).epsilon(1e-12));
  CHECK(boot.overall.ci_pct_lo == doctest::Approx(quantile(valid, 0.025)).epsilon(1e-12));
  CHECK(boot.overall.ci_pct_hi == doctest::Approx(quantile(valid, 0.975)).epsilon(1e-12));
  CHECK(boot.overall.ci_pct_lo < boot.overall.estimate);
  CHECK(boot.overall.ci_pct_hi > boot.overall.estimate);

  // One bootstrap summary per cell, keyed by (g, t).
  CHECK(boot.cell_boot.size() == boot.table.cells.size());
  for (const auto& cell : boot.table.cells) {
    const auto it = boot.cell_boot.find({cell.g, cell.t});
    REQUIRE(it != boot.cell_boot.end());
    CHECK(it->second.estimate == doctest::Approx(cell.estimate).epsilon(1e-12));
  }

  // Groups and events aligned with the design and table.
  const CohortDesign d = build_cohort_design(p);
  REQUIRE(boot.groups.size() == d.cohorts.size());
  REQUIRE(boot.events.size() == event_times(boot.table).size());
}
