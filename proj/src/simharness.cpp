#include "sri/simharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "sri/assignment_space.hpp"
#include "sri/error.hpp"
#include "sri/normal.hpp"
#include "sri/parallel.hpp"
#include "sri/selection.hpp"

namespace sri {

using nlohmann::json;

namespace {

const char* kMethods[] = {"naive", "split", "selective_rejection", "selective_rwm"};
constexpr int kNumMethods = 4;

PValueMethod method_of(int m) {
  switch (m) {
    case 0:
      return PValueMethod::Naive;
    case 1:
      return PValueMethod::Split;
    case 2:
      return PValueMethod::SelectiveRejection;
    default:
      return PValueMethod::SelectiveRwm;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// True effect of the group(s) a label selects; NaN when they disagree.
double true_effect(const EnrichmentScenario& sc, const std::string& label) {
  if (label == "only_low") return sc.tau_low;
  if (label == "only_high") return sc.tau_high;
  return sc.tau_low == sc.tau_high ? sc.tau_low : std::numeric_limits<double>::quiet_NaN();
}

void fill_row(PValueRow& row, const PValueResult& res) {
  row.p = res.estimate;
  row.se = res.mc_standard_error;
  row.attempts = res.diagnostics.attempts > 0 ? res.diagnostics.attempts : res.diagnostics.proposals;
  row.accepted = res.num_samples;
}

void append_pvalue_row(std::string& out, const PValueRow& row) {
  out += std::to_string(row.rep);
  out += ',';
  out += format_double(row.tau);
  out += ',';
  out += row.method;
  out += ',';
  out += row.stratum;
  out += ',';
  out += format_double(row.p);
  out += ',';
  out += format_double(row.se);
  out += ',';
  out += std::to_string(row.attempts);
  out += ',';
  out += std::to_string(row.accepted);
  out += ',';
  out += row.failed ? '1' : '0';
  out += ',';
  out += row.error;
  out += '\n';
}

std::vector<std::string> strata_present(const std::vector<std::string>& strata) {
  std::vector<std::string> labels(strata);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace

TrialSpec make_enrichment_spec(const EnrichmentScenario& sc) {
  TrialSpec spec;
  spec.num_arms = 2;
  spec.stages.resize(2);
  const int n1 = sc.n1_low + sc.n1_high;
  spec.stages[0].mechanism.kind = MechanismKind::CompletelyRandomized;
  spec.stages[0].mechanism.counts["*"] = {n1 - n1 / 2, n1 / 2};
  spec.stages[1].mechanism.kind = MechanismKind::CompletelyRandomized;
  spec.stages[1].mechanism.counts["*"] = {sc.n2 - sc.n2 / 2, sc.n2 / 2};
  spec.stages[1].holdout = !sc.select_on_stage2;

  spec.rule.id = "enrichment_delta_threshold";
  spec.rule.num_params["lower"] = normal_quantile(0.2);
  spec.rule.num_params["upper"] = normal_quantile(0.8);
  spec.rule.str_params["low_group"] = "low";
  spec.rule.str_params["high_group"] = "high";

  spec.recruitment.resize(2);
  spec.recruitment[0]["*"] = {{"high", sc.n1_high}, {"low", sc.n1_low}};
  spec.recruitment[1]["only_low"] = {{"low", sc.n2}};
  spec.recruitment[1]["only_high"] = {{"high", sc.n2}};
  spec.recruitment[1]["both"] = {{"high", sc.n2 - sc.n2 / 2}, {"low", sc.n2 / 2}};
  spec.recruitment[1]["undefined"] = spec.recruitment[1]["both"];
  return spec;
}

TrialRecord gen_enrichment_trial(const TrialSpec& spec, const EnrichmentScenario& sc, Rng& rng) {
  TrialRecord rec;
  rec.potential_arms = 2;

  auto add_unit = [&](const std::string& group, double tau, StageData& sd) {
    Unit u;
    u.id = "u" + std::to_string(rec.units.size() + 1);
    u.group = group;
    rec.units.push_back(std::move(u));
    double y0 = rng.normal();
    rec.potential.push_back(y0);
    rec.potential.push_back(y0 + tau);
    sd.units.push_back(static_cast<int>(rec.units.size()) - 1);
  };
  auto observe = [&](StageData& sd) {
    sd.outcomes.reserve(sd.units.size());
    for (std::size_t i = 0; i < sd.units.size(); ++i)
      sd.outcomes.push_back(rec.potential[static_cast<std::size_t>(sd.units[i]) * 2 + sd.treatments[i]]);
  };

  rec.stages.emplace_back();
  for (int i = 0; i < sc.n1_low; ++i) add_unit("low", sc.tau_low, rec.stages[0]);
  for (int i = 0; i < sc.n1_high; ++i) add_unit("high", sc.tau_high, rec.stages[0]);
  draw_stage(spec, rec, 0, "*", rng, rec.stages[0].treatments);
  observe(rec.stages[0]);

  // The stage-1 label decides recruitment; computing it on the one-stage
  // prefix uses the same engine as the final relabeling below.
  const std::string s1 = observed_selection(spec, rec)[0];

  rec.stages.emplace_back();
  auto plan = spec.recruitment[1].find(s1);
  if (plan == spec.recruitment[1].end()) plan = spec.recruitment[1].find("*");
  if (plan == spec.recruitment[1].end())
    throw Error(ErrorCode::InvalidConfig, "no stage-2 recruitment plan for label '" + s1 + "'");
  for (const auto& [group, size] : plan->second)
    for (int i = 0; i < size; ++i)
      add_unit(group, group == "high" ? sc.tau_high : sc.tau_low, rec.stages[1]);
  draw_stage(spec, rec, 1, s1, rng, rec.stages[1].treatments);
  observe(rec.stages[1]);

  rec.selection = observed_selection(spec, rec);
  return rec;
}

std::vector<std::string> selected_groups(const std::string& label) {
  if (label == "only_low") return {"low"};
  if (label == "only_high") return {"high"};
  return {"high", "low"};
}

Hypothesis enrichment_hypothesis(const TrialRecord& rec, double tau) {
  NullSpec primary;
  primary.groups = selected_groups(rec.selection.at(0));
  primary.tau = tau;
  return {primary, NullSpec{}};
}

StatisticSpec enrichment_statistic() {
  StatisticSpec stat;
  stat.id = "standardized_ate";
  stat.direction = Direction::Ge;
  return stat;
}

// --- Study drivers -----------------------------------------------------------

namespace {

InferenceOptions study_options(const StudyConfig& cfg, int method) {
  InferenceOptions opt;
  opt.method = method_of(method);
  opt.samples = cfg.samples;
  opt.max_attempts = cfg.max_attempts;
  opt.window = cfg.window;
  return opt;
}

}  // namespace

StudyReport run_rejection_study(const StudyConfig& cfg) {
  StudyReport report;
  report.config = cfg;
  const TrialSpec spec = make_enrichment_spec(cfg.scenario);
  const StatisticSpec stat = enrichment_statistic();
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  const std::size_t taus = cfg.tau_grid.size();

  report.strata.resize(reps);
  report.pvalues.resize(reps * taus * kNumMethods);

  const Rng base(cfg.seed);
  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    Rng rep_rng = base.fork(rep);
    Rng gen = rep_rng.fork(0);
    TrialRecord rec = gen_enrichment_trial(spec, cfg.scenario, gen);
    report.strata[rep] = rec.selection[0];

    for (std::size_t t = 0; t < taus; ++t) {
      const Hypothesis hyp = enrichment_hypothesis(rec, cfg.tau_grid[t]);
      for (int m = 0; m < kNumMethods; ++m) {
        PValueRow& row = report.pvalues[(rep * taus + t) * kNumMethods + m];
        row.rep = static_cast<int>(rep);
        row.tau = cfg.tau_grid[t];
        row.method = kMethods[m];
        row.stratum = report.strata[rep];
        Rng prng = rep_rng.fork(1 + t * kNumMethods + static_cast<std::size_t>(m));
        auto t0 = std::chrono::steady_clock::now();
        try {
          fill_row(row, compute_pvalue(spec, rec, hyp, stat, study_options(cfg, m), prng));
        } catch (const BudgetExhausted& e) {
          row.failed = true;
          row.error = error_tag(e.code());
          row.p = 0.0;
          row.attempts = cfg.max_attempts;
          row.accepted = e.accepted();
        } catch (const Error& e) {
          row.failed = true;
          row.error = error_tag(e.code());
        }
        row.seconds = seconds_since(t0);
      }
    }
  });
  return report;
}

StudyReport run_coverage_study(const StudyConfig& cfg) {
  StudyReport report;
  report.config = cfg;
  const TrialSpec spec = make_enrichment_spec(cfg.scenario);
  const StatisticSpec stat = enrichment_statistic();
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);

  report.strata.resize(reps);
  report.bounds.resize(reps * kNumMethods);

  const Rng base(cfg.seed);
  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    Rng rep_rng = base.fork(rep);
    Rng gen = rep_rng.fork(0);
    TrialRecord rec = gen_enrichment_trial(spec, cfg.scenario, gen);
    report.strata[rep] = rec.selection[0];
    const double truth = true_effect(cfg.scenario, report.strata[rep]);

    for (int m = 0; m < kNumMethods; ++m) {
      BoundRow& row = report.bounds[rep * kNumMethods + static_cast<std::size_t>(m)];
      row.rep = static_cast<int>(rep);
      row.method = kMethods[m];
      row.stratum = report.strata[rep];
      const InferenceOptions opt = study_options(cfg, m);
      Rng mrng = rep_rng.fork(1 + static_cast<std::size_t>(m));
      std::size_t probe = 0;
      auto pvalue_at = [&](double tau) {
        Rng prng = mrng.fork(probe++);
        try {
          return compute_pvalue(spec, rec, enrichment_hypothesis(rec, tau), stat, opt, prng)
              .estimate;
        } catch (const BudgetExhausted&) {
          return 0.0;
        }
      };
      auto t0 = std::chrono::steady_clock::now();
      try {
        row.lower_bound = lower_bound_bisect(pvalue_at, cfg.bracket_lo, cfg.bracket_hi, cfg.alpha,
                                             cfg.bracket_tol, false);
        row.covered = !std::isnan(truth) && row.lower_bound <= truth;
      } catch (const Error& e) {
        row.failed = true;
        row.error = error_tag(e.code());
      }
      row.seconds = seconds_since(t0);
    }
  });
  return report;
}

// --- Report aggregation ------------------------------------------------------

double rejection_rate(const StudyReport& r, const std::string& method, double tau,
                      const std::string& stratum, double alpha, std::size_t* count) {
  std::size_t n = 0, hits = 0;
  for (const PValueRow& row : r.pvalues) {
    if (row.failed || row.method != method || row.tau != tau) continue;
    if (!stratum.empty() && row.stratum != stratum) continue;
    ++n;
    if (row.p <= alpha) ++hits;
  }
  if (count) *count = n;
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(hits) / static_cast<double>(n);
}

double coverage_rate(const StudyReport& r, const std::string& method, const std::string& stratum,
                     std::size_t* count) {
  std::size_t n = 0, hits = 0;
  for (const BoundRow& row : r.bounds) {
    if (row.failed || row.method != method) continue;
    if (!stratum.empty() && row.stratum != stratum) continue;
    ++n;
    if (row.covered) ++hits;
  }
  if (count) *count = n;
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(hits) / static_cast<double>(n);
}

double mean_lower_bound(const StudyReport& r, const std::string& method,
                        const std::string& stratum) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const BoundRow& row : r.bounds) {
    if (row.failed || row.method != method) continue;
    if (!stratum.empty() && row.stratum != stratum) continue;
    ++n;
    sum += row.lower_bound;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

double aggregate_acceptance(const StudyReport& r, const std::vector<std::string>& strata) {
  double attempts = 0.0, accepted = 0.0;
  for (const PValueRow& row : r.pvalues) {
    if (row.method != "selective_rejection") continue;
    if (!strata.empty() && std::find(strata.begin(), strata.end(), row.stratum) == strata.end())
      continue;
    attempts += static_cast<double>(row.attempts);
    accepted += static_cast<double>(row.accepted);
  }
  return attempts == 0.0 ? std::numeric_limits<double>::quiet_NaN() : accepted / attempts;
}

double total_seconds(const StudyReport& r, const std::string& method,
                     const std::vector<std::string>& strata) {
  double sum = 0.0;
  for (const PValueRow& row : r.pvalues) {
    if (row.method != method) continue;
    if (!strata.empty() && std::find(strata.begin(), strata.end(), row.stratum) == strata.end())
      continue;
    sum += row.seconds;
  }
  return sum;
}

std::string pvalue_rows_csv(const StudyReport& r) {
  std::string out = "rep,tau,method,stratum,p,se,attempts,accepted,failed,error\n";
  for (const PValueRow& row : r.pvalues) append_pvalue_row(out, row);
  return out;
}

std::string bound_rows_csv(const StudyReport& r) {
  std::string out = "rep,method,stratum,lower_bound,covered,failed,error\n";
  for (const BoundRow& row : r.bounds) {
    out += std::to_string(row.rep);
    out += ',';
    out += row.method;
    out += ',';
    out += row.stratum;
    out += ',';
    out += format_double(row.lower_bound);
    out += ',';
    out += row.covered ? '1' : '0';
    out += ',';
    out += row.failed ? '1' : '0';
    out += ',';
    out += row.error;
    out += '\n';
  }
  return out;
}

std::string timings_csv(const StudyReport& r) {
  // method x stratum wall-clock totals; kept out of the deterministic outputs.
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, double>> agg;
  for (const PValueRow& row : r.pvalues) {
    auto& cell = agg[{row.method, row.stratum}];
    ++cell.first;
    cell.second += row.seconds;
  }
  for (const BoundRow& row : r.bounds) {
    auto& cell = agg[{row.method + "_bound", row.stratum}];
    ++cell.first;
    cell.second += row.seconds;
  }
  std::string out = "method,stratum,count,total_seconds\n";
  for (const auto& [key, cell] : agg) {
    out += key.first;
    out += ',';
    out += key.second;
    out += ',';
    out += std::to_string(cell.first);
    out += ',';
    out += format_double(cell.second);
    out += '\n';
  }
  return out;
}

std::string study_summary_json(const StudyReport& r) {
  json j;
  j["replications"] = r.config.replications;
  j["alpha"] = r.config.alpha;
  j["samples"] = r.config.samples;
  j["seed"] = r.config.seed;

  json strata = json::object();
  for (const std::string& label : r.strata) {
    strata[label] = strata.contains(label) ? strata[label].get<int>() + 1 : 1;
  }
  j["strata"] = strata;

  std::vector<std::string> labels = strata_present(r.strata);
  labels.insert(labels.begin(), "");  // "" = unconditional

  if (!r.pvalues.empty()) {
    json rej = json::object();
    for (int m = 0; m < kNumMethods; ++m) {
      json per_tau = json::object();
      for (double tau : r.config.tau_grid) {
        json cell = json::object();
        for (const std::string& label : labels) {
          std::size_t n = 0;
          double rate = rejection_rate(r, kMethods[m], tau, label, r.config.alpha, &n);
          if (n > 0) cell[label.empty() ? "all" : label] = rate;
        }
        per_tau[format_double(tau)] = cell;
      }
      rej[kMethods[m]] = per_tau;
    }
    j["rejection"] = rej;
    double acc = aggregate_acceptance(r, {"only_low", "only_high"});
    if (!std::isnan(acc)) j["one_group_acceptance"] = acc;
  }

  if (!r.bounds.empty()) {
    json cov = json::object(), mlb = json::object();
    for (int m = 0; m < kNumMethods; ++m) {
      json cell = json::object(), mcell = json::object();
      for (const std::string& label : labels) {
        std::size_t n = 0;
        double rate = coverage_rate(r, kMethods[m], label, &n);
        if (n == 0) continue;
        cell[label.empty() ? "all" : label] = rate;
        mcell[label.empty() ? "all" : label] = mean_lower_bound(r, kMethods[m], label);
      }
      cov[kMethods[m]] = cell;
      mlb[kMethods[m]] = mcell;
    }
    j["coverage"] = cov;
    j["mean_lower_bound"] = mlb;
  }
  return j.dump(2) + "\n";
}

// --- Hold-out smoothing study --------------------------------------------------

namespace {

GridPointResult exact_point(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                            const StatisticSpec& stat, double tau, std::uint64_t cap) {
  GridPointResult pt;
  pt.tau = tau;
  try {
    pt.p = selective_pvalue_exact(spec, rec, hyp, stat, cap).estimate;
  } catch (const Error& e) {
    pt.failed = true;
    pt.error = error_tag(e.code());
  }
  return pt;
}

}  // namespace

HoldoutReport run_holdout_study(const HoldoutConfig& cfg) {
  HoldoutReport report;
  report.config = cfg;

  EnrichmentScenario sc = cfg.scenario;
  sc.select_on_stage2 = false;
  EnrichmentScenario sc_both = sc;
  sc_both.select_on_stage2 = true;

  const TrialSpec spec_holdout = make_enrichment_spec(sc);
  const TrialSpec spec_both = make_enrichment_spec(sc_both);
  TrialSpec spec_split = spec_holdout;
  spec_split.rule = SelectionRuleSpec{};
  spec_split.rule.id = "stage1_identity";
  spec_split.recruitment.clear();  // labels are assignment strings, not plan keys

  StatisticSpec stat_full = enrichment_statistic();
  StatisticSpec stat_second = stat_full;
  stat_second.stage_min = 2;

  const std::vector<double> grid = cfg.grid.values();
  report.curves.resize(static_cast<std::size_t>(cfg.datasets));
  const Rng base(cfg.seed);

  parallel_for(report.curves.size(), cfg.threads, [&](std::size_t i) {
    HoldoutCurves& c = report.curves[i];
    c.dataset = static_cast<int>(i);
    Rng gen = base.fork(i).fork(0);
    TrialRecord rec = gen_enrichment_trial(spec_holdout, sc, gen);

    TrialRecord rec_both = rec;
    rec_both.selection = observed_selection(spec_both, rec_both);
    c.matched = rec.selection[0] == "only_high" && rec_both.selection[1] == "only_high";
    if (!c.matched) return;

    TrialRecord rec_split = rec;
    rec_split.selection = observed_selection(spec_split, rec_split);

    NullSpec high;
    high.groups = {"high"};
    for (double tau : grid) {
      high.tau = tau;
      const Hypothesis hyp{high};  // partially sharp: low-risk entries frozen
      c.with_stage2.push_back(exact_point(spec_both, rec_both, hyp, stat_full, tau, cfg.enum_cap));
      c.holdout.push_back(exact_point(spec_holdout, rec, hyp, stat_full, tau, cfg.enum_cap));
      c.split.push_back(exact_point(spec_split, rec_split, hyp, stat_second, tau, cfg.enum_cap));
    }
  });
  return report;
}

int level_crossings(const std::vector<GridPointResult>& curve, double level) {
  int crossings = 0;
  int prev = 0;
  for (const GridPointResult& pt : curve) {
    if (pt.failed) continue;
    int sign = pt.p > level ? 1 : (pt.p < level ? -1 : 0);
    if (sign == 0) continue;
    if (prev != 0 && sign != prev) ++crossings;
    prev = sign;
  }
  return crossings;
}

std::string holdout_curves_csv(const HoldoutReport& r) {
  std::string out = "dataset,design,tau,p\n";
  auto emit = [&out](int dataset, const char* design, const std::vector<GridPointResult>& curve) {
    for (const GridPointResult& pt : curve) {
      if (pt.failed) continue;
      out += std::to_string(dataset);
      out += ',';
      out += design;
      out += ',';
      out += format_double(pt.tau);
      out += ',';
      out += format_double(pt.p);
      out += '\n';
    }
  };
  for (const HoldoutCurves& c : r.curves) {
    if (!c.matched) continue;
    emit(c.dataset, "with_stage2", c.with_stage2);
    emit(c.dataset, "holdout", c.holdout);
    emit(c.dataset, "split", c.split);
  }
  return out;
}

std::string holdout_summary_json(const HoldoutReport& r) {
  json j;
  j["datasets"] = r.config.datasets;
  json matched = json::array();
  json crossings = json::object();
  json with_stage2 = json::array(), holdout = json::array(), split = json::array();
  for (const HoldoutCurves& c : r.curves) {
    if (!c.matched) continue;
    matched.push_back(c.dataset);
    with_stage2.push_back(level_crossings(c.with_stage2, 0.5));
    holdout.push_back(level_crossings(c.holdout, 0.5));
    split.push_back(level_crossings(c.split, 0.5));
  }
  crossings["with_stage2"] = with_stage2;
  crossings["holdout"] = holdout;
  crossings["split"] = split;
  j["matched"] = matched;
  j["level_half_crossings"] = crossings;
  return j.dump(2) + "\n";
}

// --- Subsampled two-stage trials ------------------------------------------------

std::vector<PoolRow> make_surrogate_pool() {
  // Reference stage-1 contingency table (events / non-events per group and
  // arm), scaled 5x. Relative risks per group are preserved exactly.
  struct Block {
    const char* group;
    Arm arm;
    double outcome;
    int count;
  };
  static const Block blocks[] = {
      {"le59", 0, 1.0, 8},    {"le59", 0, 0.0, 187},   {"le59", 1, 1.0, 12},
      {"le59", 1, 0.0, 201},  {"60to69", 0, 1.0, 17},  {"60to69", 0, 0.0, 349},
      {"60to69", 1, 1.0, 13}, {"60to69", 1, 0.0, 331}, {"70to79", 0, 1.0, 22},
      {"70to79", 0, 0.0, 275}, {"70to79", 1, 1.0, 22}, {"70to79", 1, 0.0, 289},
      {"ge80", 0, 1.0, 19},   {"ge80", 0, 0.0, 123},   {"ge80", 1, 1.0, 7},
      {"ge80", 1, 0.0, 125},
  };
  std::vector<PoolRow> rows;
  rows.reserve(10000);
  for (const Block& b : blocks) {
    for (int i = 0; i < b.count * 5; ++i) {
      PoolRow row;
      row.id = "p" + std::to_string(rows.size() + 1);
      row.group = b.group;
      row.treatment = b.arm;
      row.outcome = b.outcome;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

TrialSpec make_subsample_spec() {
  TrialSpec spec;
  spec.num_arms = 2;
  spec.stages.resize(2);
  for (StageSpec& st : spec.stages) {
    st.mechanism.kind = MechanismKind::Bernoulli;
    st.mechanism.probs["*"]["*"] = 0.5;
  }
  spec.stages[1].holdout = true;
  spec.rule.id = "min_relative_risk_group";
  return spec;
}

TrialRecord subsample_two_stage(const std::vector<PoolRow>& pool, int n1, int n2,
                                const TrialSpec& spec, bool fabricate_arms, Rng& rng) {
  if (static_cast<std::size_t>(n1) > pool.size())
    throw Error(ErrorCode::InsufficientUnits,
                "stage 1 needs " + std::to_string(n1) + " units, pool has " +
                    std::to_string(pool.size()));

  TrialRecord rec;
  auto push_row = [&](const PoolRow& pr, StageData& sd) {
    Unit u;
    u.id = pr.id;
    u.group = pr.group;
    rec.units.push_back(std::move(u));
    sd.units.push_back(static_cast<int>(rec.units.size()) - 1);
    sd.treatments.push_back(fabricate_arms ? (rng.bernoulli(0.5) ? 1 : 0) : pr.treatment);
    sd.outcomes.push_back(pr.outcome);
  };

  const auto idx1 = rng.sample_without_replacement(static_cast<std::uint32_t>(pool.size()),
                                                   static_cast<std::uint32_t>(n1));
  rec.stages.emplace_back();
  for (std::uint32_t i : idx1) push_row(pool[i], rec.stages[0]);

  const std::string s1 = observed_selection(spec, rec)[0];

  std::vector<unsigned char> used(pool.size(), 0);
  for (std::uint32_t i : idx1) used[i] = 1;
  std::vector<std::uint32_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!used[i] && pool[i].group == s1) eligible.push_back(static_cast<std::uint32_t>(i));
  if (eligible.size() < static_cast<std::size_t>(n2))
    throw Error(ErrorCode::InsufficientUnits,
                "stage 2 needs " + std::to_string(n2) + " unused units of group '" + s1 +
                    "', pool has " + std::to_string(eligible.size()));

  const auto idx2 = rng.sample_without_replacement(static_cast<std::uint32_t>(eligible.size()),
                                                   static_cast<std::uint32_t>(n2));
  rec.stages.emplace_back();
  for (std::uint32_t i : idx2) push_row(pool[eligible[i]], rec.stages[1]);

  rec.selection = observed_selection(spec, rec);
  return rec;
}

PlaceboReport run_placebo_study(const std::vector<PoolRow>& pool, const PlaceboConfig& cfg) {
  PlaceboReport report;
  report.config = cfg;
  report.generated = cfg.max_trials;

  const TrialSpec spec = make_subsample_spec();
  StatisticSpec stat;
  stat.id = "relative_risk";
  stat.direction = Direction::Le;
  const Hypothesis sharp{NullSpec{}};

  const Rng base(cfg.seed);
  const std::size_t total = static_cast<std::size_t>(cfg.max_trials);

  // Pass 1: selection labels only (cheap), so the expensive p-values run on
  // exactly the trials that hit the target selection.
  std::vector<std::string> labels(total);
  parallel_for(total, cfg.threads, [&](std::size_t i) {
    Rng gen = base.fork(i).fork(0);
    try {
      labels[i] = subsample_two_stage(pool, cfg.n1, cfg.n2, spec, cfg.fabricate_arms, gen)
                      .selection[0];
    } catch (const Error& e) {
      labels[i] = error_tag(e.code());
    }
  });

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < total; ++i) {
    report.selection_counts[labels[i]] += 1;
    if (labels[i] == cfg.target_group && keep.size() < static_cast<std::size_t>(cfg.target_trials))
      keep.push_back(i);
  }
  report.kept = static_cast<int>(keep.size());
  report.rows.resize(keep.size() * 3);

  static const char* kPlaceboMethods[] = {"selective_rejection", "split", "naive"};
  parallel_for(keep.size(), cfg.threads, [&](std::size_t j) {
    const std::size_t i = keep[j];
    Rng trial_rng = base.fork(i);
    Rng gen = trial_rng.fork(0);
    TrialRecord rec = subsample_two_stage(pool, cfg.n1, cfg.n2, spec, cfg.fabricate_arms, gen);

    for (int m = 0; m < 3; ++m) {
      PValueRow& row = report.rows[j * 3 + static_cast<std::size_t>(m)];
      row.rep = static_cast<int>(i);
      row.method = kPlaceboMethods[m];
      row.stratum = rec.selection[0];
      InferenceOptions opt;
      opt.method = method_from_name(kPlaceboMethods[m]);
      opt.samples = cfg.samples;
      Rng prng = trial_rng.fork(1 + static_cast<std::size_t>(m));
      auto t0 = std::chrono::steady_clock::now();
      try {
        fill_row(row, compute_pvalue(spec, rec, sharp, stat, opt, prng));
      } catch (const Error& e) {
        row.failed = true;
        row.error = error_tag(e.code());
      }
      row.seconds = seconds_since(t0);
    }
  });
  return report;
}

double pvalue_cdf(const PlaceboReport& r, const std::string& method, double alpha,
                  std::size_t* count) {
  std::size_t n = 0, hits = 0;
  for (const PValueRow& row : r.rows) {
    if (row.failed || row.method != method) continue;
    ++n;
    if (row.p <= alpha) ++hits;
  }
  if (count) *count = n;
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(hits) / static_cast<double>(n);
}

std::string placebo_rows_csv(const PlaceboReport& r) {
  std::string out = "rep,tau,method,stratum,p,se,attempts,accepted,failed,error\n";
  for (const PValueRow& row : r.rows) append_pvalue_row(out, row);
  return out;
}

std::string placebo_summary_json(const PlaceboReport& r) {
  json j;
  j["protocol"] = r.config.fabricate_arms ? "placebo" : "power";
  j["target_group"] = r.config.target_group;
  j["generated"] = r.generated;
  j["kept"] = r.kept;
  j["selection_counts"] = r.selection_counts;
  json cdf = json::object();
  for (const char* method : {"selective_rejection", "split", "naive"}) {
    json cell = json::object();
    for (double alpha : {0.05, 0.1}) {
      std::size_t n = 0;
      double f = pvalue_cdf(r, method, alpha, &n);
      if (n > 0) cell[format_double(alpha)] = f;
    }
    if (!cell.empty()) cdf[method] = cell;
  }
  j["cdf"] = cdf;
  return j.dump(2) + "\n";
}

}  // namespace sri
