#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "sri/assignment_space.hpp"
#include "sri/error.hpp"
#include "sri/selection.hpp"
#include "sri/statistics.hpp"
#include "toys.hpp"

using namespace sri;

namespace {

// One-stage trial with a low and a high subgroup for the enrichment rule.
TrialSpec enrichment_spec(double lower, double upper) {
  TrialSpec spec;
  spec.num_arms = 2;
  spec.stages.resize(1);
  spec.stages[0].mechanism = toys::crd({{"*", {4, 4}}});
  spec.rule.id = "enrichment_delta_threshold";
  spec.rule.num_params = {{"lower", lower}, {"upper", upper}};
  return spec;
}

TrialRecord enrichment_record() {
  TrialRecord rec;
  for (int i = 0; i < 4; ++i) rec.units.push_back(toys::unit("l" + std::to_string(i), "low"));
  for (int i = 0; i < 4; ++i) rec.units.push_back(toys::unit("h" + std::to_string(i), "high"));
  rec.stages.resize(1);
  rec.stages[0].units = {0, 1, 2, 3, 4, 5, 6, 7};
  rec.stages[0].treatments = {1, 1, 0, 0, 1, 1, 0, 0};
  rec.stages[0].outcomes = {1.0, 2.0, 0.0, 1.0, 3.0, 1.0, 0.5, 0.5};
  return rec;
}

}  // namespace

TEST_CASE("enrichment_select applies the two thresholds") {
  CHECK(enrichment_select(-1.0, -0.5, 0.5) == "only_low");
  CHECK(enrichment_select(1.0, -0.5, 0.5) == "only_high");
  CHECK(enrichment_select(0.0, -0.5, 0.5) == "both");
  CHECK(enrichment_select(-0.5, -0.5, 0.5) == "both");  // boundaries stay inside
  CHECK(enrichment_select(0.5, -0.5, 0.5) == "both");
}

TEST_CASE("selection_rule_known lists the supported rules") {
  for (const char* id : {"none", "enrichment_delta_threshold", "min_relative_risk_group",
                         "mean_diff_threshold", "stage1_identity"})
    CHECK(selection_rule_known(id));
  CHECK(!selection_rule_known("majority_vote"));
}

TEST_CASE("mean-difference labels match the hand enumeration") {
  TrialSpec spec = toys::f1_spec();
  TrialRecord rec = toys::f1_record();
  RuleEngine engine(spec, rec);
  ImputedOutcomes imp = impute(rec, 2, toys::sharp(0.0));

  auto label = [&](std::vector<Arm> z1) {
    return engine.eval(imp, toys::assignment({std::move(z1)}))[0];
  };
  CHECK(label({1, 1, 0, 0}) == "mid");
  CHECK(label({1, 0, 1, 0}) == "mid");
  CHECK(label({1, 0, 0, 1}) == "high");
  CHECK(label({0, 1, 1, 0}) == "low");
  CHECK(label({0, 1, 0, 1}) == "mid");
  CHECK(label({0, 0, 1, 1}) == "mid");
  CHECK(observed_selection(spec, rec) == SelectionValue({"mid"}));
}

TEST_CASE("hold-out stages repeat the last non-hold-out label") {
  TrialSpec spec = toys::f2_spec();
  TrialRecord rec = toys::f2_record();
  RuleEngine engine(spec, rec);
  ImputedOutcomes imp = impute(rec, 2, toys::sharp(0.0));

  CHECK(observed_selection(spec, rec) == SelectionValue({"high", "high"}));
  // Stage 2 never enters the rule: its label tracks stage 1 whatever z2 is.
  for (const auto& z2 : stage_assignment_space(spec, rec, 1)) {
    SelectionValue s = engine.eval(imp, toys::assignment({{1, 0, 0, 1}, z2}));
    CHECK(s == SelectionValue({"high", "high"}));
    s = engine.eval(imp, toys::assignment({{0, 1, 1, 0}, z2}));
    CHECK(s == SelectionValue({"low", "low"}));
  }

  SelectionValue prefix;
  engine.prefix(imp, observed_assignment(rec), 1, prefix);
  CHECK(prefix == SelectionValue({"high"}));
}

TEST_CASE("without hold-out the stage-2 label pools both stages") {
  TrialSpec spec = toys::f2_spec();
  spec.stages[1].holdout = false;
  TrialRecord rec = toys::f2_record();
  rec.selection.clear();
  RuleEngine engine(spec, rec);
  ImputedOutcomes imp = impute(rec, 2, toys::sharp(0.0));

  Assignment z = observed_assignment(rec);
  SelectionValue s = engine.eval(imp, z);
  // Pooled means: treated (3.0, 2.5, 2.0, 3.5), control (0.5, 1.0, 1.0, 0.0),
  // difference 2.125 > 0.4.
  CHECK(s == SelectionValue({"high", "high"}));
  // A stage-2 flip now changes S_2 but not S_1.
  Assignment alt = z;
  alt.stages[1] = {0, 1, 1, 0};
  // Pooled: treated (3.0, 2.5, 1.0, 0.0) = 1.625, control (0.5, 1.0, 2.0, 3.5)
  // = 1.75, difference -0.125, inside the (-0.4, 0.4) band.
  SelectionValue s2 = engine.eval(imp, alt);
  CHECK(s2[0] == "high");
  CHECK(s2[1] == "mid");
}

TEST_CASE("stage1_identity encodes the stage-1 arms") {
  TrialSpec spec = toys::f4_spec();
  TrialRecord rec = toys::f4_record();
  CHECK(observed_selection(spec, rec) == SelectionValue({"10", "10"}));
  RuleEngine engine(spec, rec);
  ImputedOutcomes imp = impute(rec, 2, toys::sharp(0.0));
  SelectionValue s = engine.eval(imp, toys::assignment({{0, 1}, {1, 1, 0, 0}}));
  CHECK(s == SelectionValue({"01", "01"}));
}

TEST_CASE("enrichment labels agree with the welch contrasts") {
  TrialRecord rec = enrichment_record();
  ImputedOutcomes imp = impute(rec, 2, toys::sharp(0.0));
  std::vector<double> lt = {1.0, 2.0}, lc = {0.0, 1.0};
  std::vector<double> ht = {3.0, 1.0}, hc = {0.5, 0.5};
  double delta = scaled_delta(welch_z(ht, hc), welch_z(lt, lc));

  auto label_with = [&](double lower, double upper) {
    RuleEngine engine_local(enrichment_spec(lower, upper), rec);
    return engine_local.eval(imp, observed_assignment(rec))[0];
  };
  CHECK(label_with(-0.5, 0.5) == enrichment_select(delta, -0.5, 0.5));
  CHECK(label_with(-0.5, 0.5) == "both");
  CHECK(label_with(-0.5, delta - 0.01) == "only_high");
  CHECK(label_with(delta + 0.01, delta + 0.02) == "only_low");

  // An arm left empty on one side makes the contrast unavailable.
  RuleEngine engine(enrichment_spec(-0.5, 0.5), rec);
  SelectionValue s = engine.eval(imp, toys::assignment({{0, 0, 0, 0, 1, 1, 1, 1}}));
  CHECK(s == SelectionValue({"undefined"}));

  TrialSpec bad = enrichment_spec(-0.5, 0.5);
  bad.rule.str_params = {{"low_group", "missing"}};
  CHECK_THROWS_AS(RuleEngine(bad, rec), Error);
}

TEST_CASE("min relative risk rule skips groups without a finite ratio") {
  TrialSpec spec;
  spec.num_arms = 2;
  spec.stages.resize(1);
  spec.stages[0].mechanism = toys::bernoulli({{"*", {{"*", 0.5}}}});
  spec.rule.id = "min_relative_risk_group";

  TrialRecord rec;
  auto add = [&](const std::string& id, const std::string& g, Arm t, double y) {
    rec.units.push_back(toys::unit(id, g));
    rec.stages[0].units.push_back(static_cast<int>(rec.units.size()) - 1);
    rec.stages[0].treatments.push_back(t);
    rec.stages[0].outcomes.push_back(y);
  };
  rec.stages.resize(1);
  // Group a: RR = (1/2) / (2/2) = 0.5.
  add("a1", "a", 1, 1.0);
  add("a2", "a", 1, 0.0);
  add("a3", "a", 0, 1.0);
  add("a4", "a", 0, 1.0);
  // Group b: RR = (2/2) / (1/2) = 2.
  add("b1", "b", 1, 1.0);
  add("b2", "b", 1, 1.0);
  add("b3", "b", 0, 1.0);
  add("b4", "b", 0, 0.0);
  // Group c: no control events, skipped.
  add("c1", "c", 1, 1.0);
  add("c2", "c", 0, 0.0);

  CHECK(observed_selection(spec, rec) == SelectionValue({"a"}));

  // Every group unusable: label "undefined".
  TrialRecord none = rec;
  for (auto& y : none.stages[0].outcomes) y = 0.0;
  CHECK(observed_selection(spec, none) == SelectionValue({"undefined"}));
}

TEST_CASE("recorded labels are checked against recomputation") {
  TrialSpec spec = toys::f1_spec();
  TrialRecord rec = toys::f1_record();
  CHECK(validate_selection_consistency(spec, rec).empty());
  rec.selection = {"high"};
  auto issues = validate_selection_consistency(spec, rec);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].code == "selection_mismatch");
  rec.selection.clear();  // absent labels are fine
  CHECK(validate_selection_consistency(spec, rec).empty());
}

TEST_CASE("conditioning statistic frees covered in-pair entries only") {
  TrialSpec spec = toys::f2_spec();
  TrialRecord rec = toys::f2_record();
  Assignment z = observed_assignment(rec);

  ConditioningValue g_sharp = conditioning_statistic(spec, rec, toys::sharp(0.0), z);
  CHECK(g_sharp == ConditioningValue(8, kFreeEntry));

  NullSpec high_only;
  high_only.groups = {"high"};
  ConditioningValue g_part = conditioning_statistic(spec, rec, Hypothesis(high_only), z);
  // Stage-major: low units frozen at their arms, high units free.
  CHECK(g_part == ConditioningValue({1, 0, kFreeEntry, kFreeEntry, 1, 0, kFreeEntry, kFreeEntry}));
}

TEST_CASE("covered units observed outside the tested pair are frozen") {
  TrialSpec spec;
  spec.num_arms = 3;
  spec.stages.resize(1);
  spec.stages[0].mechanism = toys::crd({{"*", {1, 1, 1}}});
  TrialRecord rec;
  rec.units = {toys::unit("u1", "g"), toys::unit("u2", "g"), toys::unit("u3", "g")};
  rec.stages.resize(1);
  rec.stages[0].units = {0, 1, 2};
  rec.stages[0].treatments = {0, 1, 2};
  rec.stages[0].outcomes = {1.0, 2.0, 3.0};
  ConditioningValue g = conditioning_statistic(spec, rec, toys::sharp(0.0),
                                               observed_assignment(rec));
  CHECK(g == ConditioningValue({kFreeEntry, kFreeEntry, 2}));
}

TEST_CASE("workspace membership matches a hand enumeration") {
  TrialSpec spec = toys::f2_spec();
  TrialRecord rec = toys::f2_record();
  Workspace ws(spec, rec, toys::sharp(0.0));

  CHECK(ws.observed_s() == SelectionValue({"high", "high"}));
  CHECK(ws.observed_g() == ConditioningValue(8, kFreeEntry));
  CHECK(ws.mechanisms_label_invariant());
  CHECK(ws.matches(ws.observed()));

  std::set<std::vector<Arm>> accepted_stage1;
  int n_match = 0;
  for (const Assignment& z : enumerate_assignments(spec, rec, 100)) {
    if (ws.matches(z)) {
      ++n_match;
      accepted_stage1.insert(z.stages[0]);
    }
  }
  CHECK(n_match == 12);
  CHECK(accepted_stage1 ==
        std::set<std::vector<Arm>>({{1, 0, 1, 0}, {1, 0, 0, 1}}));
}

TEST_CASE("per-stage conditioning agreement gates partial nulls") {
  TrialSpec spec = toys::f2_spec();
  TrialRecord rec = toys::f2_record();
  NullSpec high_only;
  high_only.groups = {"high"};
  Workspace ws(spec, rec, Hypothesis(high_only));

  Assignment z = ws.observed();
  CHECK(ws.stage_respects_conditioning(z, 0));
  Assignment high_flip = z;
  high_flip.stages[0] = {1, 0, 0, 1};  // swap arms of the two high units
  CHECK(ws.stage_respects_conditioning(high_flip, 0));
  Assignment low_flip = z;
  low_flip.stages[0] = {0, 1, 1, 0};  // low units moved off their observed arms
  CHECK(!ws.stage_respects_conditioning(low_flip, 0));

  TrialSpec label_dep = toys::f3_spec();
  TrialRecord rec3 = toys::f3_record();
  Workspace ws3(label_dep, rec3, toys::sharp(0.0));
  CHECK(!ws3.mechanisms_label_invariant());
}

TEST_CASE("compiled statistic agrees with direct evaluation") {
  TrialSpec spec = toys::f2_spec();
  TrialRecord rec = toys::f2_record();
  Workspace ws(spec, rec, toys::sharp(0.0));
  CompiledStatistic cs(ws, toys::f2_statistic());
  CHECK(cs.observed_value() == doctest::Approx(2.125).epsilon(1e-15));
  for (const Assignment& z : enumerate_assignments(spec, rec, 100)) {
    CHECK(cs.eval(z) ==
          doctest::Approx(eval_test_statistic(toys::f2_statistic(), rec, ws.imputed(),
                                              ws.hypothesis(), z))
              .epsilon(1e-14));
  }
}
