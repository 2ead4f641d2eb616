#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sri/error.hpp"
#include "sri/normal.hpp"
#include "sri/selection.hpp"
#include "sri/simharness.hpp"
#include "sri/trial.hpp"

using namespace sri;

namespace {

bool throws_code(ErrorCode want, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == want;
  }
  return false;
}

EnrichmentScenario desk_scenario() {
  EnrichmentScenario sc;
  sc.n1_low = 4;
  sc.n1_high = 4;
  sc.n2 = 8;
  sc.tau_high = 1.0;
  return sc;
}

}  // namespace

TEST_CASE("enrichment spec layout") {
  EnrichmentScenario sc;
  TrialSpec spec = make_enrichment_spec(sc);

  REQUIRE(spec.num_stages() == 2);
  CHECK(spec.stages[0].mechanism.kind == MechanismKind::CompletelyRandomized);
  CHECK(*spec.stages[0].mechanism.counts_for("*") == std::vector<int>{50, 50});
  CHECK(*spec.stages[1].mechanism.counts_for("only_high") == std::vector<int>{20, 20});
  CHECK_FALSE(spec.stages[0].holdout);
  CHECK(spec.stages[1].holdout);

  CHECK(spec.rule.id == "enrichment_delta_threshold");
  CHECK(spec.rule.num("lower", 9.0) == normal_quantile(0.2));
  CHECK(spec.rule.num("upper", 9.0) == normal_quantile(0.8));
  CHECK(spec.rule.str("low_group", "") == "low");
  CHECK(spec.rule.str("high_group", "") == "high");

  REQUIRE(spec.recruitment.size() == 2);
  CHECK(spec.recruitment[0].at("*") == std::map<std::string, int>{{"high", 50}, {"low", 50}});
  CHECK(spec.recruitment[1].at("only_low") == std::map<std::string, int>{{"low", 40}});
  CHECK(spec.recruitment[1].at("only_high") == std::map<std::string, int>{{"high", 40}});
  CHECK(spec.recruitment[1].at("both") == std::map<std::string, int>{{"high", 20}, {"low", 20}});
  CHECK(spec.recruitment[1].at("undefined") == spec.recruitment[1].at("both"));

  // io round trip, so the CLI can dump and reload generated designs
  CHECK(serialize_trial_spec(parse_trial_spec(serialize_trial_spec(spec))) ==
        serialize_trial_spec(spec));

  EnrichmentScenario odd;
  odd.n1_low = 3;
  odd.n1_high = 4;
  odd.n2 = 5;
  odd.select_on_stage2 = true;
  TrialSpec ospec = make_enrichment_spec(odd);
  CHECK(*ospec.stages[0].mechanism.counts_for("*") == std::vector<int>{4, 3});
  CHECK(*ospec.stages[1].mechanism.counts_for("*") == std::vector<int>{3, 2});
  CHECK_FALSE(ospec.stages[1].holdout);
  CHECK(ospec.recruitment[1].at("both") == std::map<std::string, int>{{"high", 3}, {"low", 2}});
}

TEST_CASE("generated trials are valid and reproducible") {
  EnrichmentScenario sc;
  sc.tau_high = 1.0;
  TrialSpec spec = make_enrichment_spec(sc);

  Rng rng(77);
  TrialRecord rec = gen_enrichment_trial(spec, sc, rng);

  CHECK(validate_record(spec, rec).empty());
  CHECK(validate_selection_consistency(spec, rec).empty());
  REQUIRE(rec.num_stages() == 2);
  CHECK(rec.stages[0].units.size() == 100);
  CHECK(rec.stages[1].units.size() == 40);
  CHECK(rec.units.size() == 140);
  REQUIRE(rec.has_potential());
  CHECK(rec.potential.size() == 2 * rec.units.size());

  // effect profile per group: high +1, low +0, stored as y0 + tau bit for bit
  for (std::size_t u = 0; u < rec.units.size(); ++u) {
    double tau = rec.units[u].group == "high" ? 1.0 : 0.0;
    CHECK(rec.potential[2 * u + 1] == rec.potential[2 * u] + tau);
  }
  // observed outcome reads the potential table at the assigned arm
  for (const StageData& st : rec.stages)
    for (std::size_t i = 0; i < st.units.size(); ++i)
      CHECK(st.outcomes[i] ==
            rec.potential[2 * static_cast<std::size_t>(st.units[i]) + st.treatments[i]]);

  // stage-2 recruitment follows the plan of the realized stage-1 label
  std::map<std::string, int> got;
  for (int u : rec.stages[1].units) ++got[rec.units[u].group];
  CHECK(got == spec.recruitment[1].at(rec.selection[0]));

  Rng rng2(77);
  TrialRecord again = gen_enrichment_trial(spec, sc, rng2);
  CHECK(again.selection == rec.selection);
  CHECK(again.potential == rec.potential);
  for (int k = 0; k < 2; ++k) {
    CHECK(again.stages[k].treatments == rec.stages[k].treatments);
    CHECK(again.stages[k].outcomes == rec.stages[k].outcomes);
  }

  Rng rng3(78);
  TrialRecord other = gen_enrichment_trial(spec, sc, rng3);
  CHECK(other.potential != rec.potential);
}

TEST_CASE("selection strata hit the design frequencies under the null") {
  EnrichmentScenario sc;  // tau = (0, 0)
  TrialSpec spec = make_enrichment_spec(sc);
  const int reps = 600;
  std::map<std::string, int> counts;
  Rng base(2024);
  for (int r = 0; r < reps; ++r) {
    Rng rng = base.fork(static_cast<std::uint64_t>(r));
    TrialRecord rec = gen_enrichment_trial(spec, sc, rng);
    ++counts[rec.selection[0]];
    // sharp null holds: every potential contrast is zero
    for (std::size_t u = 0; u < rec.units.size(); ++u)
      REQUIRE(rec.potential[2 * u + 1] == rec.potential[2 * u]);
  }
  auto freq = [&](const std::string& label) {
    return static_cast<double>(counts[label]) / reps;
  };
  // design targets (0.2, 0.2, 0.6), three binomial SEs at 600 reps
  CHECK(std::abs(freq("only_low") - 0.2) < 3 * std::sqrt(0.2 * 0.8 / reps));
  CHECK(std::abs(freq("only_high") - 0.2) < 3 * std::sqrt(0.2 * 0.8 / reps));
  CHECK(std::abs(freq("both") - 0.6) < 3 * std::sqrt(0.6 * 0.4 / reps));
}

TEST_CASE("study hypothesis and statistic") {
  CHECK(selected_groups("only_low") == std::vector<std::string>{"low"});
  CHECK(selected_groups("only_high") == std::vector<std::string>{"high"});
  CHECK(selected_groups("both") == std::vector<std::string>{"high", "low"});
  CHECK(selected_groups("undefined") == std::vector<std::string>{"high", "low"});

  TrialRecord rec;
  rec.selection = {"only_high", "only_high"};
  Hypothesis hyp = enrichment_hypothesis(rec, 0.3);
  CHECK(hyp.primary.groups == std::vector<std::string>{"high"});
  CHECK(hyp.primary.tau == 0.3);
  REQUIRE(hyp.background.has_value());
  CHECK(hyp.background->groups.empty());
  CHECK(hyp.background->tau == 0.0);
  Unit low_unit{"x", "low", {}};
  CHECK(hyp.covers(low_unit));
  CHECK(hyp.null_for(low_unit) == &*hyp.background);

  StatisticSpec stat = enrichment_statistic();
  CHECK(stat.id == "standardized_ate");
  CHECK(stat.direction == Direction::Ge);
  CHECK(stat.stage_min == 1);
}

TEST_CASE("rejection study rows, aggregation and determinism") {
  StudyConfig cfg;
  cfg.replications = 6;
  cfg.tau_grid = {-0.2, 0.0, 0.2};
  cfg.samples = 200;
  cfg.max_attempts = 20000;
  cfg.seed = 11;
  cfg.threads = 1;

  StudyReport rep = run_rejection_study(cfg);
  REQUIRE(rep.strata.size() == 6);
  REQUIRE(rep.pvalues.size() == 6 * 3 * 4);

  std::set<std::string> methods;
  for (const PValueRow& row : rep.pvalues) {
    methods.insert(row.method);
    CHECK(row.stratum == rep.strata[static_cast<std::size_t>(row.rep)]);
    CHECK(row.seconds >= 0.0);
    if (row.failed) {
      CHECK_FALSE(row.error.empty());
      continue;
    }
    CHECK(row.p >= 0.0);
    CHECK(row.p <= 1.0);
    CHECK(row.se >= 0.0);
    if (row.method == "selective_rejection") {
      CHECK(row.accepted == cfg.samples);
      CHECK(row.attempts >= row.accepted);
    }
  }
  CHECK(methods == std::set<std::string>{"naive", "split", "selective_rejection",
                                         "selective_rwm"});

  std::size_t n = 0;
  double rate = rejection_rate(rep, "naive", 0.0, "", cfg.alpha, &n);
  CHECK(n > 0);
  CHECK(rate >= 0.0);
  CHECK(rate <= 1.0);
  CHECK(std::isnan(rejection_rate(rep, "naive", 0.55, "", cfg.alpha, &n)));
  CHECK(n == 0);

  double acc = aggregate_acceptance(rep, {});
  CHECK(acc > 0.0);
  CHECK(acc <= 1.0);
  CHECK(total_seconds(rep, "selective_rejection", {}) > 0.0);

  // identical rows no matter how many workers ran the study
  StudyConfig threaded = cfg;
  threaded.threads = 3;
  StudyReport rep3 = run_rejection_study(threaded);
  CHECK(pvalue_rows_csv(rep3) == pvalue_rows_csv(rep));
  CHECK(rep3.strata == rep.strata);
  CHECK(study_summary_json(rep3) == study_summary_json(rep));

  std::string csv = pvalue_rows_csv(rep);
  CHECK(csv.rfind("rep,tau,method,stratum,p,se,attempts,accepted,failed,error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * 3 * 4);

  auto parsed = nlohmann::json::parse(study_summary_json(rep));
  CHECK(parsed.contains("rejection"));
  CHECK(parsed.contains("strata"));
  CHECK(parsed["replications"] == 6);
  CHECK_FALSE(parsed.contains("coverage"));

  std::string timings = timings_csv(rep);
  CHECK(timings.rfind("method,stratum,count,total_seconds\n", 0) == 0);
}

TEST_CASE("rejection study flags exhausted sampling budgets") {
  StudyConfig cfg;
  cfg.replications = 2;
  cfg.tau_grid = {0.0};
  cfg.samples = 100;
  cfg.max_attempts = 50;  // cannot possibly collect 100 draws
  cfg.seed = 5;

  StudyReport rep = run_rejection_study(cfg);
  for (const PValueRow& row : rep.pvalues) {
    if (row.method != "selective_rejection") {
      CHECK_FALSE(row.failed);
      continue;
    }
    CHECK(row.failed);
    CHECK(row.error == "budget_exhausted");
    CHECK(row.p == 0.0);
    CHECK(row.attempts == 50);
    CHECK(row.accepted < 100);
  }
  CHECK(std::isnan(rejection_rate(rep, "selective_rejection", 0.0, "", cfg.alpha)));
  // capped rows still contribute their attempts to the acceptance aggregate
  CHECK(aggregate_acceptance(rep, {}) < 1.0);
}

TEST_CASE("coverage study bounds and determinism") {
  StudyConfig cfg;
  cfg.replications = 4;
  cfg.samples = 200;
  cfg.max_attempts = 20000;
  cfg.seed = 21;

  StudyReport rep = run_coverage_study(cfg);
  REQUIRE(rep.bounds.size() == 4 * 4);
  CHECK(rep.pvalues.empty());
  for (const BoundRow& row : rep.bounds) {
    REQUIRE_FALSE(row.failed);
    CHECK(row.lower_bound >= cfg.bracket_lo);
    CHECK(row.lower_bound <= cfg.bracket_hi);
    // the true effect is zero everywhere, so covered == bound below zero
    CHECK(row.covered == (row.lower_bound <= 0.0));
    CHECK(row.stratum == rep.strata[static_cast<std::size_t>(row.rep)]);
  }
  std::size_t n = 0;
  double cov = coverage_rate(rep, "selective_rwm", "", &n);
  CHECK(n == 4);
  CHECK(cov >= 0.0);
  CHECK(cov <= 1.0);
  CHECK(std::isfinite(mean_lower_bound(rep, "split", "")));

  StudyConfig threaded = cfg;
  threaded.threads = 2;
  StudyReport rep2 = run_coverage_study(threaded);
  CHECK(bound_rows_csv(rep2) == bound_rows_csv(rep));

  std::string csv = bound_rows_csv(rep);
  CHECK(csv.rfind("rep,method,stratum,lower_bound,covered,failed,error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 4);

  auto parsed = nlohmann::json::parse(study_summary_json(rep));
  CHECK(parsed.contains("coverage"));
  CHECK(parsed.contains("mean_lower_bound"));
  CHECK_FALSE(parsed.contains("rejection"));
}

TEST_CASE("level crossing counter") {
  auto curve = [](std::initializer_list<double> ps) {
    std::vector<GridPointResult> out;
    double tau = 0.0;
    for (double p : ps) out.push_back({tau += 1.0, p, 0.0, false, ""});
    return out;
  };
  CHECK(level_crossings(curve({0.1, 0.2, 0.3}), 0.5) == 0);
  CHECK(level_crossings(curve({0.1, 0.9}), 0.5) == 1);
  CHECK(level_crossings(curve({0.1, 0.9, 0.2, 0.8}), 0.5) == 3);
  CHECK(level_crossings(curve({0.1, 0.5, 0.9}), 0.5) == 1);  // exact hits carry no sign
  CHECK(level_crossings({}, 0.5) == 0);

  auto broken = curve({0.1, 0.9, 0.2});
  broken[1].failed = true;  // failed points drop out of the count
  CHECK(level_crossings(broken, 0.5) == 0);
}

TEST_CASE("holdout study produces matched exact curves") {
  HoldoutConfig cfg;
  cfg.datasets = 8;
  cfg.seed = 3;

  HoldoutReport rep = run_holdout_study(cfg);
  REQUIRE(rep.curves.size() == 8);

  const std::vector<double> grid = cfg.grid.values();
  REQUIRE(grid.size() == 21);

  EnrichmentScenario sc = cfg.scenario;
  TrialSpec spec_holdout = make_enrichment_spec(sc);
  EnrichmentScenario sc_both = sc;
  sc_both.select_on_stage2 = true;
  TrialSpec spec_both = make_enrichment_spec(sc_both);

  int matched = 0;
  for (const HoldoutCurves& c : rep.curves) {
    // recompute the matched flag from the generated data
    Rng gen = Rng(cfg.seed).fork(static_cast<std::uint64_t>(c.dataset)).fork(0);
    TrialRecord rec = gen_enrichment_trial(spec_holdout, sc, gen);
    bool expect = rec.selection[0] == "only_high" &&
                  observed_selection(spec_both, rec)[1] == "only_high";
    CHECK(c.matched == expect);

    if (!c.matched) {
      CHECK(c.holdout.empty());
      continue;
    }
    ++matched;
    for (const auto* curve : {&c.with_stage2, &c.holdout, &c.split}) {
      REQUIRE(curve->size() == grid.size());
      for (std::size_t t = 0; t < grid.size(); ++t) {
        const GridPointResult& pt = (*curve)[t];
        REQUIRE_FALSE(pt.failed);
        CHECK(pt.tau == grid[t]);
        CHECK(pt.p > 0.0);
        CHECK(pt.p <= 1.0);
        CHECK(pt.se == 0.0);
      }
    }
  }
  REQUIRE(matched > 0);

  HoldoutReport again = run_holdout_study(cfg);
  CHECK(holdout_curves_csv(again) == holdout_curves_csv(rep));
  HoldoutConfig threaded = cfg;
  threaded.threads = 2;
  CHECK(holdout_curves_csv(run_holdout_study(threaded)) == holdout_curves_csv(rep));

  std::string csv = holdout_curves_csv(rep);
  CHECK(csv.rfind("dataset,design,tau,p\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        1 + static_cast<long>(3 * grid.size()) * matched);

  auto parsed = nlohmann::json::parse(holdout_summary_json(rep));
  REQUIRE(parsed["matched"].size() == static_cast<std::size_t>(matched));
  CHECK(parsed["level_half_crossings"]["holdout"].size() ==
        static_cast<std::size_t>(matched));
}

TEST_CASE("surrogate pool reproduces the reference margins") {
  std::vector<PoolRow> pool = make_surrogate_pool();
  REQUIRE(pool.size() == 10000);

  std::map<std::pair<std::string, Arm>, std::pair<int, int>> table;  // (total, events)
  std::set<std::string> ids;
  for (const PoolRow& r : pool) {
    ids.insert(r.id);
    auto& cell = table[{r.group, r.treatment}];
    ++cell.first;
    if (r.outcome == 1.0) ++cell.second;
  }
  CHECK(ids.size() == pool.size());

  auto check_cell = [&](const std::string& g, Arm a, int total, int events) {
    CHECK(table[{g, a}] == std::make_pair(total * 5, events * 5));
  };
  check_cell("le59", 0, 195, 8);
  check_cell("le59", 1, 213, 12);
  check_cell("60to69", 0, 366, 17);
  check_cell("60to69", 1, 344, 13);
  check_cell("70to79", 0, 297, 22);
  check_cell("70to79", 1, 311, 22);
  check_cell("ge80", 0, 142, 19);
  check_cell("ge80", 1, 132, 7);

  // io round trip keeps the pool loadable from disk
  CHECK(parse_pool(serialize_pool(pool)).size() == pool.size());
}

TEST_CASE("subsampled two-stage trials") {
  const std::vector<PoolRow> pool = make_surrogate_pool();
  const TrialSpec spec = make_subsample_spec();

  CHECK(spec.stages[0].mechanism.kind == MechanismKind::Bernoulli);
  CHECK(spec.stages[0].mechanism.prob_for("*", "ge80") == 0.5);
  CHECK(spec.stages[1].holdout);
  CHECK(spec.rule.id == "min_relative_risk_group");
  CHECK(serialize_trial_spec(parse_trial_spec(serialize_trial_spec(spec))) ==
        serialize_trial_spec(spec));

  std::map<std::string, const PoolRow*> by_id;
  for (const PoolRow& r : pool) by_id[r.id] = &r;

  Rng rng(91);
  TrialRecord rec = subsample_two_stage(pool, 400, 60, spec, false, rng);
  REQUIRE(rec.num_stages() == 2);
  CHECK(rec.stages[0].units.size() == 400);
  CHECK(rec.stages[1].units.size() == 60);
  CHECK(rec.units.size() == 460);
  CHECK(validate_record(spec, rec).empty());
  CHECK(validate_selection_consistency(spec, rec).empty());
  CHECK_FALSE(rec.has_potential());

  std::set<std::string> seen;
  for (int k = 0; k < 2; ++k) {
    const StageData& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      const Unit& u = rec.units[static_cast<std::size_t>(st.units[i])];
      REQUIRE(seen.insert(u.id).second);  // no unit sampled twice
      const PoolRow* src = by_id.at(u.id);
      CHECK(u.group == src->group);
      CHECK(st.outcomes[i] == src->outcome);
      CHECK(st.treatments[i] == src->treatment);  // real arms kept
    }
  }
  // stage 2 recruits only from the selected group
  for (int u : rec.stages[1].units) CHECK(rec.units[static_cast<std::size_t>(u)].group == rec.selection[0]);
  CHECK(rec.selection[1] == rec.selection[0]);  // stage-2 hold-out repeats the label

  Rng rng_a(91);
  TrialRecord same = subsample_two_stage(pool, 400, 60, spec, false, rng_a);
  CHECK(same.selection == rec.selection);
  CHECK(same.stages[0].units == rec.stages[0].units);
  CHECK(same.stages[1].units == rec.stages[1].units);

  // fabricated arms overwrite the recorded ones but keep everything else
  Rng rng_f(91);
  TrialRecord fab = subsample_two_stage(pool, 400, 60, spec, true, rng_f);
  CHECK(validate_record(spec, fab).empty());
  int diff = 0;
  for (std::size_t i = 0; i < fab.stages[0].units.size(); ++i) {
    const PoolRow* src = by_id.at(fab.units[static_cast<std::size_t>(fab.stages[0].units[i])].id);
    if (fab.stages[0].treatments[i] != src->treatment) ++diff;
  }
  CHECK(diff > 0);

  CHECK(throws_code(ErrorCode::InsufficientUnits, [&] {
    Rng r(1);
    subsample_two_stage(pool, static_cast<int>(pool.size()) + 1, 10, spec, false, r);
  }));
  CHECK(throws_code(ErrorCode::InsufficientUnits, [&] {
    Rng r(1);
    subsample_two_stage(pool, static_cast<int>(pool.size()), 10, spec, false, r);
  }));
}

TEST_CASE("placebo study keeps target-selection trials") {
  const std::vector<PoolRow> pool = make_surrogate_pool();
  PlaceboConfig cfg;
  cfg.target_trials = 4;
  cfg.max_trials = 60;
  cfg.n1 = 400;
  cfg.n2 = 60;
  cfg.samples = 100;
  cfg.seed = 17;

  PlaceboReport rep = run_placebo_study(pool, cfg);
  CHECK(rep.generated == 60);
  REQUIRE(rep.kept == 4);
  REQUIRE(rep.rows.size() == 12);

  int total = 0;
  for (const auto& [label, count] : rep.selection_counts) total += count;
  CHECK(total == rep.generated);
  CHECK(rep.selection_counts.at(cfg.target_group) >= rep.kept);

  std::set<std::string> methods;
  for (const PValueRow& row : rep.rows) {
    methods.insert(row.method);
    CHECK(row.stratum == cfg.target_group);
    REQUIRE_FALSE(row.failed);
    CHECK(row.p > 0.0);
    CHECK(row.p <= 1.0);
  }
  CHECK(methods == std::set<std::string>{"naive", "split", "selective_rejection"});

  std::size_t n = 0;
  double f = pvalue_cdf(rep, "naive", 1.0, &n);
  CHECK(n == 4);
  CHECK(f == 1.0);
  CHECK(pvalue_cdf(rep, "naive", 0.0) == 0.0);

  PlaceboConfig threaded = cfg;
  threaded.threads = 2;
  PlaceboReport rep2 = run_placebo_study(pool, threaded);
  CHECK(placebo_rows_csv(rep2) == placebo_rows_csv(rep));
  CHECK(placebo_summary_json(rep2) == placebo_summary_json(rep));

  std::string csv = placebo_rows_csv(rep);
  CHECK(csv.rfind("rep,tau,method,stratum,p,se,attempts,accepted,failed,error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);

  auto parsed = nlohmann::json::parse(placebo_summary_json(rep));
  CHECK(parsed["protocol"] == "placebo");
  CHECK(parsed["kept"] == 4);
  CHECK(parsed["cdf"].contains("selective_rejection"));
}
