#pragma once

#include <string>
#include <vector>

#include "sri/statistics.hpp"
#include "sri/trial.hpp"

namespace sri {

// Observed-cells-only outcome table (no imputation).
ImputedOutcomes observed_outcomes(const TrialRecord& rec, int num_arms);

// Threshold step of the enrichment rule: delta below `lower` -> "only_low",
// above `upper` -> "only_high", otherwise "both".
std::string enrichment_select(double delta, double lower, double upper);

bool selection_rule_known(const std::string& id);

// Compiled selection rule for one (spec, record) pair. Stage k's label is a
// function of the data of non-hold-out stages up to k; hold-out stages repeat
// the previous scope's label. Rules that cannot be evaluated (empty arm, zero
// variance, no finite relative risk) return the label "undefined".
class RuleEngine {
 public:
  RuleEngine(const TrialSpec& spec, const TrialRecord& rec);

  // Labels S_1..S_K under the candidate assignment, outcomes read from imp.
  // Throws NotImputable when a required cell is unknown.
  SelectionValue eval(const ImputedOutcomes& imp, const Assignment& z) const;

  // Labels S_1..S_k for a stage prefix (z stages beyond `upto` are ignored).
  void prefix(const ImputedOutcomes& imp, const Assignment& z, int upto,
              SelectionValue& out) const;

 private:
  struct Entry {
    int stage;
    int pos;
    std::size_t row;  // unit * num_arms
    int gid;
  };
  struct Rule {
    enum Kind { None, Enrichment, MinRR, MeanDiff, Stage1Identity } kind = None;
    double lower = 0.0, upper = 0.0;
    int gid_low = -1, gid_high = -1;
    std::vector<int> rr_gids;
    std::vector<std::string> rr_names;
    Arm t_arm = 1, c_arm = 0;
  };

  std::string scope_label(const ImputedOutcomes& imp, const Assignment& z, int scope_id) const;

  const TrialSpec* spec_;
  const TrialRecord* rec_;
  std::vector<std::string> group_names_;
  std::vector<Entry> entries_;
  Rule rule_;
  std::vector<int> stage_scope_;                        // stage -> scope id (-1: no data yet)
  std::vector<std::vector<unsigned char>> scope_mask_;  // scope id -> per-stage membership
};

SelectionValue selection_statistic(const TrialSpec& spec, const TrialRecord& rec,
                                   const ImputedOutcomes& imp, const Assignment& z);

// Labels of the realized trial (always computable from observed data).
SelectionValue observed_selection(const TrialSpec& spec, const TrialRecord& rec);

// Canonical conditioning value induced by the hypothesis: entries of units it
// does not cover are frozen at their treatment; covered entries are free while
// they stay inside that unit's tested arm pair (kFreeEntry), otherwise they
// record the arm.
ConditioningValue conditioning_statistic(const TrialSpec& spec, const TrialRecord& rec,
                                         const Hypothesis& hyp, const Assignment& z);

// Compares recorded selection labels against recomputation from observed data.
std::vector<ValidationIssue> validate_selection_consistency(const TrialSpec& spec,
                                                            const TrialRecord& rec);

// Evaluation context for one (spec, record, hypothesis) triple: imputed table,
// compiled rule, observed selection/conditioning values, fast matching.
class Workspace {
 public:
  Workspace(const TrialSpec& spec, const TrialRecord& rec, Hypothesis hyp);

  const TrialSpec& spec() const { return *spec_; }
  const TrialRecord& rec() const { return *rec_; }
  const Hypothesis& hypothesis() const { return hyp_; }
  const ImputedOutcomes& imputed() const { return imp_; }
  const Assignment& observed() const { return observed_; }
  const SelectionValue& observed_s() const { return observed_s_; }
  const ConditioningValue& observed_g() const { return observed_g_; }
  const RuleEngine& rule() const { return engine_; }

  SelectionValue selection_of(const Assignment& z) const { return engine_.eval(imp_, z); }
  ConditioningValue conditioning_of(const Assignment& z) const;

  // Membership in the conditioning set: G agreement first (cheap, pure
  // function of the treatments), then selection-label agreement.
  bool matches(const Assignment& z) const;

  // G agreement restricted to one stage; samplers reject draws early on it.
  bool stage_respects_conditioning(const Assignment& z, int k) const;

  double statistic(const StatisticSpec& stat, const Assignment& z) const;

  // True when every stage mechanism is identical across selection labels, so
  // unconditional draws need no interim label evaluation.
  bool mechanisms_label_invariant() const { return label_invariant_; }

  void prefix_labels(const Assignment& z, int upto, SelectionValue& out) const {
    engine_.prefix(imp_, z, upto, out);
  }

 private:
  struct GEntry {
    bool free;  // covered unit whose observed arm is inside the tested pair
    Arm hi, lo;
    Arm obs;
  };

  const TrialSpec* spec_;
  const TrialRecord* rec_;
  Hypothesis hyp_;
  ImputedOutcomes imp_;
  RuleEngine engine_;
  Assignment observed_;
  SelectionValue observed_s_;
  ConditioningValue observed_g_;
  std::vector<std::vector<GEntry>> g_;  // per stage, per position
  bool label_invariant_ = true;
};

// Statistic evaluation with the unit walk precompiled (hot loops).
class CompiledStatistic {
 public:
  CompiledStatistic(const Workspace& ws, StatisticSpec stat);
  double eval(const Assignment& z) const;
  double observed_value() const { return observed_value_; }
  const StatisticSpec& stat() const { return stat_; }

 private:
  const ImputedOutcomes* imp_;
  StatisticSpec stat_;
  struct Ref {
    int stage;
    int pos;
    std::size_t row;
  };
  std::vector<Ref> refs_;
  Arm hi_, lo_;
  int kind_;  // 0 standardized_ate, 1 mean_difference, 2 relative_risk
  double observed_value_ = 0.0;
};

}  // namespace sri
