#include "sri/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "sri/error.hpp"
#include "sri/normal.hpp"

namespace sri {

ImputedOutcomes observed_outcomes(const TrialRecord& rec, int num_arms) {
  ImputedOutcomes out;
  out.num_arms = num_arms;
  out.value.assign(rec.units.size() * static_cast<std::size_t>(num_arms), 0.0);
  out.known.assign(out.value.size(), 0);
  for (const auto& st : rec.stages) {
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      std::size_t cell = static_cast<std::size_t>(st.units[i]) * num_arms + st.treatments[i];
      out.value[cell] = st.outcomes[i];
      out.known[cell] = 1;
    }
  }
  return out;
}

std::string enrichment_select(double delta, double lower, double upper) {
  if (delta < lower) return "only_low";
  if (delta > upper) return "only_high";
  return "both";
}

bool selection_rule_known(const std::string& id) {
  return id == "none" || id == "enrichment_delta_threshold" || id == "min_relative_risk_group" ||
         id == "mean_diff_threshold" || id == "stage1_identity";
}

namespace {

// Welford accumulator for one arm of one group.
struct Acc {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double y) {
    n += 1;
    double d = y - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (y - mean);
  }
};

// Welch z from two accumulators; empty string on success, else reason.
bool welch_from(const Acc& t, const Acc& c, double* out) {
  if (t.n == 0 || c.n == 0) return false;
  double denom = t.m2 / static_cast<double>(t.n) / static_cast<double>(t.n) +
                 c.m2 / static_cast<double>(c.n) / static_cast<double>(c.n);
  if (denom <= 0.0) return false;
  *out = (t.mean - c.mean) / std::sqrt(denom);
  return true;
}

double cell_or_throw(const ImputedOutcomes& imp, std::size_t row, Arm a, const TrialRecord& rec,
                     std::size_t row_units) {
  if (!imp.known[row + a])
    throw Error(ErrorCode::NotImputable,
                "selection rule reads unknown cell " + rec.units[row_units].id + ":arm" +
                    std::to_string(a));
  return imp.value[row + a];
}

}  // namespace

RuleEngine::RuleEngine(const TrialSpec& spec, const TrialRecord& rec)
    : spec_(&spec), rec_(&rec) {
  // Group table over recruited units, sorted for determinism.
  std::set<std::string> groups;
  for (const auto& st : rec.stages)
    for (int u : st.units) groups.insert(rec.units[u].group);
  group_names_.assign(groups.begin(), groups.end());
  auto gid_of = [&](const std::string& g) {
    auto it = std::lower_bound(group_names_.begin(), group_names_.end(), g);
    return (it != group_names_.end() && *it == g)
               ? static_cast<int>(it - group_names_.begin())
               : -1;
  };

  for (int k = 0; k < rec.num_stages(); ++k) {
    const auto& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      entries_.push_back({k, static_cast<int>(i),
                          static_cast<std::size_t>(st.units[i]) * spec.num_arms,
                          gid_of(rec.units[st.units[i]].group)});
    }
  }

  // Scope of stage k: non-hold-out stages up to k.
  std::map<std::vector<unsigned char>, int> scope_ids;
  std::vector<unsigned char> mask(rec.num_stages(), 0);
  stage_scope_.resize(rec.num_stages(), -1);
  for (int k = 0; k < rec.num_stages(); ++k) {
    if (!spec.stages[k].holdout) mask[k] = 1;
    if (std::count(mask.begin(), mask.end(), 1) == 0) {
      stage_scope_[k] = -1;
      continue;
    }
    auto [it, inserted] = scope_ids.try_emplace(mask, static_cast<int>(scope_mask_.size()));
    if (inserted) scope_mask_.push_back(mask);
    stage_scope_[k] = it->second;
  }

  const SelectionRuleSpec& r = spec.rule;
  if (r.id == "none") {
    rule_.kind = Rule::None;
  } else if (r.id == "enrichment_delta_threshold") {
    rule_.kind = Rule::Enrichment;
    rule_.lower = r.num("lower", normal_quantile(0.2));
    rule_.upper = r.num("upper", normal_quantile(0.8));
    rule_.gid_low = gid_of(r.str("low_group", "low"));
    rule_.gid_high = gid_of(r.str("high_group", "high"));
    if (rule_.gid_low < 0 || rule_.gid_high < 0)
      throw Error(ErrorCode::InvalidConfig,
                  "enrichment rule groups not present among recruited units");
  } else if (r.id == "min_relative_risk_group") {
    rule_.kind = Rule::MinRR;
    for (int g = 0; g < static_cast<int>(group_names_.size()); ++g) {
      rule_.rr_gids.push_back(g);
      rule_.rr_names.push_back(group_names_[g]);
    }
  } else if (r.id == "mean_diff_threshold") {
    rule_.kind = Rule::MeanDiff;
    rule_.lower = r.num("lower", 0.0);
    rule_.upper = r.num("upper", 0.0);
  } else if (r.id == "stage1_identity") {
    rule_.kind = Rule::Stage1Identity;
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown selection rule '" + r.id + "'");
  }
  rule_.t_arm = static_cast<Arm>(r.num("treated_arm", 1));
  rule_.c_arm = static_cast<Arm>(r.num("control_arm", 0));
}

std::string RuleEngine::scope_label(const ImputedOutcomes& imp, const Assignment& z,
                                    int scope_id) const {
  const auto& mask = scope_mask_[scope_id];

  switch (rule_.kind) {
    case Rule::None:
      return "-";

    case Rule::Stage1Identity: {
      std::string label;
      label.reserve(z.stages[0].size());
      for (Arm a : z.stages[0]) label += static_cast<char>('0' + a);
      return label;
    }

    case Rule::Enrichment: {
      Acc acc[2][2];  // [low=0, high=1][control=0, treated=1]
      for (const Entry& e : entries_) {
        if (!mask[e.stage]) continue;
        int side;
        if (e.gid == rule_.gid_low)
          side = 0;
        else if (e.gid == rule_.gid_high)
          side = 1;
        else
          continue;
        Arm a = z.stages[e.stage][e.pos];
        int arm_side;
        if (a == rule_.t_arm)
          arm_side = 1;
        else if (a == rule_.c_arm)
          arm_side = 0;
        else
          continue;
        acc[side][arm_side].add(cell_or_throw(imp, e.row, a, *rec_, e.row / imp.num_arms));
      }
      double d_low, d_high;
      if (!welch_from(acc[0][1], acc[0][0], &d_low) || !welch_from(acc[1][1], acc[1][0], &d_high))
        return "undefined";
      return enrichment_select(scaled_delta(d_high, d_low), rule_.lower, rule_.upper);
    }

    case Rule::MeanDiff: {
      Acc t, c;
      for (const Entry& e : entries_) {
        if (!mask[e.stage]) continue;
        Arm a = z.stages[e.stage][e.pos];
        if (a == rule_.t_arm)
          t.add(cell_or_throw(imp, e.row, a, *rec_, e.row / imp.num_arms));
        else if (a == rule_.c_arm)
          c.add(cell_or_throw(imp, e.row, a, *rec_, e.row / imp.num_arms));
      }
      if (t.n == 0 || c.n == 0) return "undefined";
      double diff = t.mean - c.mean;
      if (diff < rule_.lower) return "low";
      if (diff > rule_.upper) return "high";
      return "mid";
    }

    case Rule::MinRR: {
      const std::size_t n_groups = rule_.rr_gids.size();
      std::vector<double> events(2 * n_groups, 0.0), totals(2 * n_groups, 0.0);
      for (const Entry& e : entries_) {
        if (!mask[e.stage] || e.gid < 0) continue;
        Arm a = z.stages[e.stage][e.pos];
        int arm_side;
        if (a == rule_.t_arm)
          arm_side = 1;
        else if (a == rule_.c_arm)
          arm_side = 0;
        else
          continue;
        double y = cell_or_throw(imp, e.row, a, *rec_, e.row / imp.num_arms);
        std::size_t slot = static_cast<std::size_t>(e.gid) * 2 + arm_side;
        totals[slot] += 1.0;
        if (y >= 0.5) events[slot] += 1.0;
      }
      int best = -1;
      double best_rr = 0.0;
      for (std::size_t g = 0; g < n_groups; ++g) {
        double tt = totals[2 * g + 1], tc = totals[2 * g];
        double et = events[2 * g + 1], ec = events[2 * g];
        if (tt <= 0.0 || tc <= 0.0 || ec <= 0.0) continue;  // no finite relative risk
        double rr = (et / tt) / (ec / tc);
        if (best < 0 || rr < best_rr) {
          best = static_cast<int>(g);
          best_rr = rr;
        }
      }
      return best < 0 ? "undefined" : rule_.rr_names[best];
    }
  }
  return "undefined";
}

SelectionValue RuleEngine::eval(const ImputedOutcomes& imp, const Assignment& z) const {
  SelectionValue out;
  prefix(imp, z, rec_->num_stages(), out);
  return out;
}

void RuleEngine::prefix(const ImputedOutcomes& imp, const Assignment& z, int upto,
                        SelectionValue& out) const {
  out.assign(upto, "-");
  std::vector<std::string> cache(scope_mask_.size());
  std::vector<unsigned char> have(scope_mask_.size(), 0);
  for (int k = 0; k < upto; ++k) {
    int sid = stage_scope_[k];
    if (sid < 0) continue;
    if (!have[sid]) {
      cache[sid] = scope_label(imp, z, sid);
      have[sid] = 1;
    }
    out[k] = cache[sid];
  }
}

SelectionValue selection_statistic(const TrialSpec& spec, const TrialRecord& rec,
                                   const ImputedOutcomes& imp, const Assignment& z) {
  return RuleEngine(spec, rec).eval(imp, z);
}

SelectionValue observed_selection(const TrialSpec& spec, const TrialRecord& rec) {
  ImputedOutcomes imp = observed_outcomes(rec, spec.num_arms);
  return RuleEngine(spec, rec).eval(imp, observed_assignment(rec));
}

ConditioningValue conditioning_statistic(const TrialSpec&, const TrialRecord& rec,
                                         const Hypothesis& hyp, const Assignment& z) {
  ConditioningValue out;
  out.reserve(observed_assignment(rec).total_entries());
  for (int k = 0; k < rec.num_stages(); ++k) {
    const auto& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      const NullSpec* null = hyp.null_for(rec.units[st.units[i]]);
      Arm a = z.stages[k][i];
      if (null != nullptr && (a == null->arm_hi || a == null->arm_lo))
        out.push_back(kFreeEntry);
      else
        out.push_back(a);
    }
  }
  return out;
}

std::vector<ValidationIssue> validate_selection_consistency(const TrialSpec& spec,
                                                            const TrialRecord& rec) {
  std::vector<ValidationIssue> out;
  SelectionValue computed;
  try {
    computed = observed_selection(spec, rec);
  } catch (const Error& e) {
    out.push_back({"selection_eval", std::string("selection rule failed on observed data: ") +
                                         e.what()});
    return out;
  }
  if (!rec.selection.empty() && rec.selection != computed) {
    std::string msg = "recorded selection labels differ from recomputation:";
    for (std::size_t k = 0; k < computed.size(); ++k) {
      msg += " stage" + std::to_string(k + 1) + "=" + computed[k];
      if (k < rec.selection.size() && rec.selection[k] != computed[k])
        msg += "(recorded " + rec.selection[k] + ")";
    }
    out.push_back({"selection_mismatch", msg});
  }
  return out;
}

Workspace::Workspace(const TrialSpec& spec, const TrialRecord& rec, Hypothesis hyp)
    : spec_(&spec),
      rec_(&rec),
      hyp_(std::move(hyp)),
      imp_(impute(rec, spec.num_arms, hyp_)),
      engine_(spec, rec),
      observed_(observed_assignment(rec)) {
  observed_s_ = engine_.eval(imp_, observed_);
  observed_g_ = conditioning_statistic(spec, rec, hyp_, observed_);

  g_.resize(rec.num_stages());
  for (int k = 0; k < rec.num_stages(); ++k) {
    const auto& st = rec.stages[k];
    g_[k].resize(st.units.size());
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      const NullSpec* null = hyp_.null_for(rec.units[st.units[i]]);
      Arm obs = st.treatments[i];
      GEntry ge;
      ge.obs = obs;
      if (null != nullptr && (obs == null->arm_hi || obs == null->arm_lo)) {
        ge.free = true;
        ge.hi = null->arm_hi;
        ge.lo = null->arm_lo;
      } else {
        ge.free = false;
        ge.hi = ge.lo = obs;
      }
      g_[k][i] = ge;
    }
  }

  for (const auto& sp : spec.stages)
    if (!sp.mechanism.label_invariant()) label_invariant_ = false;
}

ConditioningValue Workspace::conditioning_of(const Assignment& z) const {
  return conditioning_statistic(*spec_, *rec_, hyp_, z);
}

bool Workspace::stage_respects_conditioning(const Assignment& z, int k) const {
  const auto& zs = z.stages[k];
  const auto& ges = g_[k];
  for (std::size_t i = 0; i < ges.size(); ++i) {
    const GEntry& ge = ges[i];
    if (ge.free) {
      if (zs[i] != ge.hi && zs[i] != ge.lo) return false;
    } else if (zs[i] != ge.obs) {
      return false;
    }
  }
  return true;
}

bool Workspace::matches(const Assignment& z) const {
  for (int k = 0; k < rec_->num_stages(); ++k)
    if (!stage_respects_conditioning(z, k)) return false;
  return selection_of(z) == observed_s_;
}

double Workspace::statistic(const StatisticSpec& stat, const Assignment& z) const {
  return eval_test_statistic(stat, *rec_, imp_, hyp_, z);
}

CompiledStatistic::CompiledStatistic(const Workspace& ws, StatisticSpec stat)
    : imp_(&ws.imputed()), stat_(std::move(stat)) {
  const TrialRecord& rec = ws.rec();
  hi_ = ws.hypothesis().primary.arm_hi;
  lo_ = ws.hypothesis().primary.arm_lo;
  if (stat_.id == "standardized_ate")
    kind_ = 0;
  else if (stat_.id == "mean_difference")
    kind_ = 1;
  else if (stat_.id == "relative_risk")
    kind_ = 2;
  else
    throw Error(ErrorCode::InvalidConfig, "unknown test statistic '" + stat_.id + "'");

  for (int k = 0; k < rec.num_stages(); ++k) {
    if (k + 1 < stat_.stage_min || k + 1 > stat_.stage_max) continue;
    const auto& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      if (!ws.hypothesis().primary.covers(rec.units[st.units[i]])) continue;
      refs_.push_back(
          {k, static_cast<int>(i), static_cast<std::size_t>(st.units[i]) * imp_->num_arms});
    }
  }
  observed_value_ = eval(ws.observed());
}

double CompiledStatistic::eval(const Assignment& z) const {
  Acc t, c;
  double et = 0.0, ec = 0.0;
  for (const Ref& r : refs_) {
    Arm a = z.stages[r.stage][r.pos];
    int side;
    if (a == hi_)
      side = 1;
    else if (a == lo_)
      side = 0;
    else
      continue;
    if (!imp_->known[r.row + a])
      throw Error(ErrorCode::NotImputable, "statistic reads an unknown outcome cell");
    double y = imp_->value[r.row + a];
    if (kind_ == 2) {
      if (side == 1) {
        t.n += 1;
        if (y >= 0.5) et += 1.0;
      } else {
        c.n += 1;
        if (y >= 0.5) ec += 1.0;
      }
    } else {
      (side == 1 ? t : c).add(y);
    }
  }
  if (t.n == 0 || c.n == 0) {
    throw Error(kind_ == 2 ? ErrorCode::ZeroDenominator : ErrorCode::EmptyArm,
                "statistic: an arm has no units");
  }
  switch (kind_) {
    case 0: {
      double denom = t.m2 / static_cast<double>(t.n) + c.m2 / static_cast<double>(c.n);
      if (denom <= 0.0)
        throw Error(ErrorCode::DegenerateVariance, "statistic: both arms are constant");
      return (t.mean - c.mean) / std::sqrt(denom);
    }
    case 1:
      return t.mean - c.mean;
    default: {
      // mirror relative_risk(): total in the event counts, throwing only for
      // an empty arm
      if (ec <= 0.0) return et <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      return (et / static_cast<double>(t.n)) / (ec / static_cast<double>(c.n));
    }
  }
}

}  // namespace sri
