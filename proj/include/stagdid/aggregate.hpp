#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stagdid/csdid.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/rng.hpp"
#include "stagdid/stats.hpp"

namespace stagdid {

enum class AggKind { Overall, Group, Event, Simple };

const char* to_string(AggKind kind) noexcept;

struct AggWeight {
  int g = 0;
  int t = 0;
  double w = 0.0;
};

// A weighted combination of group-time cells. Influence contributions are
// combined from the cell-level ones when every involved cell carries them;
// `draws` and the percentile interval are filled in by the bootstrap.
struct AggregationResult {
  AggKind kind = AggKind::Overall;
  int key = 0;  // g for Group, e for Event
  double estimate = kNaN;
  double se = kNaN;
  double ci_lo = kNaN;
  double ci_hi = kNaN;
  double p_value = kNaN;
  double ci_pct_lo = kNaN;
  double ci_pct_hi = kNaN;
  std::vector<AggWeight> weights;   // sums to one
  std::vector<double> influence;    // one slot per panel unit, may be empty
  std::vector<double> draws;        // bootstrap draws, NaN where a replicate failed
};

// Mean of the post cells of cohort g (equal weights over t = g..T).
AggregationResult agg_group(const GtattTable& table, const CohortDesign& design, int g);

// Cohort-size weighted mean of the group aggregates, weights P(G=g | ever).
AggregationResult agg_overall(const GtattTable& table, const CohortDesign& design);

// Event-time aggregate at e = t - g over cohorts with 2 <= g+e <= T,
// weighted by cohort share among the eligible. Negative e uses placebo cells.
AggregationResult agg_event(const GtattTable& table, const CohortDesign& design, int e);

// Cell-size weighted mean over all post cells (weight n_g per cell).
AggregationResult agg_simple(const GtattTable& table, const CohortDesign& design);

// Distinct event times present in the table, ascending.
std::vector<int> event_times(const GtattTable& table);

// Unit indices for one stratified bootstrap replicate: every cohort and the
// never-treated group are resampled with replacement within themselves, so
// replicate cohort counts match the original design exactly.
std::vector<int> stratified_resample(const PanelDataset& panel, Rng& rng);

struct EstimatorSpec {
  Flavor flavor = Flavor::DR;
  std::vector<std::string> covariates;
};

struct BootstrapSummary {
  double estimate = kNaN;  // base-panel estimate
  double se = kNaN;
  double ci_lo = kNaN;   // normal interval, the default reported one
  double ci_hi = kNaN;
  double ci_pct_lo = kNaN;
  double ci_pct_hi = kNaN;
  double p_value = kNaN;
  std::vector<double> draws;
  int n_failed = 0;
};

struct BootstrapInference {
  int b = 0;
  std::uint64_t seed = 0;
  GtattTable table;  // base table, cell inference still the analytic one
  std::map<std::pair<int, int>, BootstrapSummary> cell_boot;
  std::vector<AggregationResult> groups;  // se/ci replaced by bootstrap versions
  std::vector<AggregationResult> events;
  AggregationResult overall;
  AggregationResult simple;
  int n_failed_replicates = 0;  // replicates where the overall target failed
};

// Stratified unit bootstrap over the whole estimation pipeline. Replicate r
// draws its RNG stream from (seed, r), so results are identical for any
// thread count. B must be at least 100.
BootstrapInference bootstrap_inference(const PanelDataset& panel, const EstimatorSpec& spec, int b,
                                       std::uint64_t seed, int threads = 1);

}  // namespace stagdid
