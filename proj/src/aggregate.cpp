#include "stagdid/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stagdid/parallel.hpp"

namespace stagdid {

namespace {

// est = sum of w_c * cell estimate. Influence slots cover all panel units;
// a unit absent from a cell's slice contributes zero for that cell.
AggregationResult combine_cells(AggKind kind, int key,
                                const std::vector<std::pair<const GtattCell*, double>>& terms, int n_units) {
  AggregationResult out;
  out.kind = kind;
  out.key = key;

  double est = 0.0;
  bool have_influence = n_units > 0;
  for (const auto& [cell, w] : terms) {
    if (cell->failed())
      fail(ErrorCode::MissingCell, "cell (" + std::to_string(cell->g) + "," + std::to_string(cell->t) +
                                       ") failed and cannot be aggregated");
    est += w * cell->estimate;
    out.weights.push_back({cell->g, cell->t, w});
    if (cell->influence.empty() || cell->unit_index.size() != cell->influence.size()) have_influence = false;
  }
  out.estimate = est;

  if (have_influence) {
    out.influence.assign(static_cast<std::size_t>(n_units), 0.0);
    for (const auto& [cell, w] : terms) {
      const double factor = w * static_cast<double>(n_units) / static_cast<double>(cell->influence.size());
      for (std::size_t j = 0; j < cell->influence.size(); ++j)
        out.influence[static_cast<std::size_t>(cell->unit_index[j])] += factor * cell->influence[j];
    }
    out.se = sample_sd(out.influence) / std::sqrt(static_cast<double>(n_units));
    out.ci_lo = out.estimate - kZ95 * out.se;
    out.ci_hi = out.estimate + kZ95 * out.se;
    out.p_value = two_sided_p(out.estimate, out.se);
  }
  return out;
}

std::vector<std::pair<const GtattCell*, double>> group_terms(const GtattTable& table, int g) {
  const int t_max = table.n_periods;
  if (g < 2 || g > t_max) fail(ErrorCode::NoEligibleCohort, "cohort " + std::to_string(g) + " out of range");
  std::vector<std::pair<const GtattCell*, double>> terms;
  const double w = 1.0 / static_cast<double>(t_max - g + 1);
  for (int t = g; t <= t_max; ++t) terms.emplace_back(&table.at(g, t), w);
  return terms;
}

void summarize_draws(BootstrapSummary& s) {
  const std::vector<double> valid = drop_nan(s.draws);
  s.n_failed = static_cast<int>(s.draws.size() - valid.size());
  if (valid.size() < 2) return;
  s.se = sample_sd(valid);
  s.ci_lo = s.estimate - kZ95 * s.se;
  s.ci_hi = s.estimate + kZ95 * s.se;
  s.ci_pct_lo = quantile(valid, 0.025);
  s.ci_pct_hi = quantile(valid, 0.975);
  s.p_value = two_sided_p(s.estimate, s.se);
}

void apply_summary(AggregationResult& agg, BootstrapSummary& s) {
  s.estimate = agg.estimate;
  summarize_draws(s);
  agg.draws = s.draws;
  agg.se = s.se;
  agg.ci_lo = s.ci_lo;
  agg.ci_hi = s.ci_hi;
  agg.ci_pct_lo = s.ci_pct_lo;
  agg.ci_pct_hi = s.ci_pct_hi;
  agg.p_value = s.p_value;
}

}  // namespace

const char* to_string(AggKind kind) noexcept {
  switch (kind) {
    case AggKind::Overall: return "overall";
    case AggKind::Group: return "group";
    case AggKind::Event: return "event";
    case AggKind::Simple: return "simple";
  }
  return "overall";
}

AggregationResult agg_group(const GtattTable& table, const CohortDesign& design, int g) {
  return combine_cells(AggKind::Group, g, group_terms(table, g), design.n_total());
}

AggregationResult agg_overall(const GtattTable& table, const CohortDesign& design) {
  std::vector<std::pair<const GtattCell*, double>> terms;
  for (std::size_t j = 0; j < design.cohorts.size(); ++j) {
    const int g = design.cohorts[j];
    const double share = design.ever_share(g);
    for (auto& [cell, w] : group_terms(table, g)) terms.emplace_back(cell, share * w);
  }
  return combine_cells(AggKind::Overall, 0, terms, design.n_total());
}

AggregationResult agg_event(const GtattTable& table, const CohortDesign& design, int e) {
  std::vector<int> eligible;
  double total_n = 0.0;
  for (int g : design.cohorts) {
    const int t = g + e;
    if (t >= 2 && t <= table.n_periods) {
      eligible.push_back(g);
      total_n += static_cast<double>(design.size_of(g));
    }
  }
  if (eligible.empty())
    fail(ErrorCode::NoEligibleCohort, "no cohort observes event time " + std::to_string(e));
  std::vector<std::pair<const GtattCell*, double>> terms;
  for (int g : eligible)
    terms.emplace_back(&table.at(g, g + e), static_cast<double>(design.size_of(g)) / total_n);
  return combine_cells(AggKind::Event, e, terms, design.n_total());
}

AggregationResult agg_simple(const GtattTable& table, const CohortDesign& design) {
  std::vector<std::pair<const GtattCell*, double>> terms;
  double total = 0.0;
  for (int g : design.cohorts)
    for (int t = g; t <= table.n_periods; ++t) total += static_cast<double>(design.size_of(g));
  for (int g : design.cohorts)
    for (int t = g; t <= table.n_periods; ++t)
      terms.emplace_back(&table.at(g, t), static_cast<double>(design.size_of(g)) / total);
  if (terms.empty()) fail(ErrorCode::NoEligibleCohort, "table has no post cells");
  return combine_cells(AggKind::Simple, 0, terms, design.n_total());
}

std::vector<int> event_times(const GtattTable& table) {
  std::set<int> es;
  for (const auto& c : table.cells) es.insert(c.e);
  return std::vector<int>(es.begin(), es.end());
}

std::vector<int> stratified_resample(const PanelDataset& panel, Rng& rng) {
  // Strata in a fixed order: cohorts ascending, then never treated.
  std::map<int, std::vector<int>> strata;
  for (int i = 0; i < panel.n_units(); ++i) strata[panel.cohort(i)].push_back(i);

  std::vector<int> draw;
  draw.reserve(static_cast<std::size_t>(panel.n_units()));
  auto sample_stratum = [&](const std::vector<int>& members) {
    for (std::size_t k = 0; k < members.size(); ++k)
      draw.push_back(members[static_cast<std::size_t>(rng.uniform_int(members.size()))]);
  };
  for (const auto& [g, members] : strata) {
    if (g == kNever) continue;
    sample_stratum(members);
  }
  const auto never_it = strata.find(kNever);
  if (never_it != strata.end()) sample_stratum(never_it->second);
  return draw;
}

BootstrapInference bootstrap_inference(const PanelDataset& panel, const EstimatorSpec& spec, int b,
                                       std::uint64_t seed, int threads) {
  if (b < 100) fail(ErrorCode::ConfigInvalid, "bootstrap needs at least 100 replicates, got " + std::to_string(b));

  const CohortDesign design = build_cohort_design(panel);

  BootstrapInference out;
  out.b = b;
  out.seed = seed;
  out.table = gtatt_table(panel, design, spec.covariates, spec.flavor);

  for (int g : design.cohorts) out.groups.push_back(agg_group(out.table, design, g));
  out.overall = agg_overall(out.table, design);
  out.simple = agg_simple(out.table, design);
  const std::vector<int> es = event_times(out.table);
  for (int e : es) out.events.push_back(agg_event(out.table, design, e));

  // Draw matrix layout: cells first, then groups, overall, simple, events.
  const std::size_t n_cells = out.table.cells.size();
  const std::size_t n_groups = design.cohorts.size();
  const std::size_t n_events = es.size();
  const std::size_t n_targets = n_cells + n_groups + 2 + n_events;
  std::vector<double> draws(n_targets * static_cast<std::size_t>(b), kNaN);

  parallel_for(static_cast<std::size_t>(b), threads, [&](std::size_t r) {
    Rng rng(derive_stream(seed, static_cast<std::uint64_t>(r) + 1));
    const std::vector<int> idx = stratified_resample(panel, rng);
    const PanelDataset rep = resample_units(panel, idx);
    const CohortDesign rep_design = build_cohort_design(rep);

    double* slot = draws.data() + r * n_targets;
    try {
      const GtattTable rep_table = gtatt_table(rep, rep_design, spec.covariates, spec.flavor);
      if (rep_table.cells.size() != n_cells)
        fail(ErrorCode::ReplicateDegenerate, "replicate produced a different cell layout");
      for (std::size_t c = 0; c < n_cells; ++c) {
        const GtattCell& cell = rep_table.cells[c];
        if (cell.g != out.table.cells[c].g || cell.t != out.table.cells[c].t)
          fail(ErrorCode::ReplicateDegenerate, "replicate cell layout mismatch");
        slot[c] = cell.failed() ? kNaN : cell.estimate;
      }
      auto try_agg = [&](std::size_t offset, auto&& make) {
        try {
          slot[offset] = make().estimate;
        } catch (const Error&) {
          slot[offset] = kNaN;
        }
      };
      for (std::size_t j = 0; j < n_groups; ++j)
        try_agg(n_cells + j, [&] { return agg_group(rep_table, rep_design, design.cohorts[j]); });
      try_agg(n_cells + n_groups, [&] { return agg_overall(rep_table, rep_design); });
      try_agg(n_cells + n_groups + 1, [&] { return agg_simple(rep_table, rep_design); });
      for (std::size_t j = 0; j < n_events; ++j)
        try_agg(n_cells + n_groups + 2 + j, [&] { return agg_event(rep_table, rep_design, es[j]); });
    } catch (const Error&) {
      // Leave the whole replicate NaN; summaries count it as failed.
    }
  });

  auto draws_for = [&](std::size_t target) {
    std::vector<double> v(static_cast<std::size_t>(b));
    for (int r = 0; r < b; ++r) v[static_cast<std::size_t>(r)] = draws[static_cast<std::size_t>(r) * n_targets + target];
    return v;
  };

  for (std::size_t c = 0; c < n_cells; ++c) {
    BootstrapSummary s;
    s.estimate = out.table.cells[c].estimate;
    s.draws = draws_for(c);
    summarize_draws(s);
    out.cell_boot.emplace(std::make_pair(out.table.cells[c].g, out.table.cells[c].t), std::move(s));
  }
  for (std::size_t j = 0; j < n_groups; ++j) {
    BootstrapSummary s;
    s.draws = draws_for(n_cells + j);
    apply_summary(out.groups[j], s);
  }
  {
    BootstrapSummary s;
    s.draws = draws_for(n_cells + n_groups);
    apply_summary(out.overall, s);
    out.n_failed_replicates = s.n_failed;
    if (static_cast<int>(s.draws.size()) - s.n_failed < 2)
      fail(ErrorCode::ReplicateDegenerate, "fewer than two bootstrap replicates produced an overall estimate");
  }
  {
    BootstrapSummary s;
    s.draws = draws_for(n_cells + n_groups + 1);
    apply_summary(out.simple, s);
  }
  for (std::size_t j = 0; j < n_events; ++j) {
    BootstrapSummary s;
    s.draws = draws_for(n_cells + n_groups + 2 + j);
    apply_summary(out.events[j], s);
  }
  return out;
}

}  // namespace stagdid
