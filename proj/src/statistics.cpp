#include "sri/statistics.hpp"

#include <cmath>
#include <limits>

#include "sri/error.hpp"

namespace sri {

namespace {

void impute_with(const TrialRecord& rec, int num_arms, const NullSpec& null,
                 ImputedOutcomes& out) {
  for (const auto& st : rec.stages) {
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      int u = st.units[i];
      Arm a = st.treatments[i];
      if (!null.covers(rec.units[u])) continue;
      std::size_t base = static_cast<std::size_t>(u) * num_arms;
      if (a == null.arm_hi && !out.known[base + null.arm_lo]) {
        out.value[base + null.arm_lo] = st.outcomes[i] - null.tau;
        out.known[base + null.arm_lo] = 1;
      } else if (a == null.arm_lo && !out.known[base + null.arm_hi]) {
        out.value[base + null.arm_hi] = st.outcomes[i] + null.tau;
        out.known[base + null.arm_hi] = 1;
      }
    }
  }
}

ImputedOutcomes observed_table(const TrialRecord& rec, int num_arms) {
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

}  // namespace

ImputedOutcomes impute(const TrialRecord& rec, int num_arms, const NullSpec& null) {
  ImputedOutcomes out = observed_table(rec, num_arms);
  impute_with(rec, num_arms, null, out);
  return out;
}

ImputedOutcomes impute(const TrialRecord& rec, int num_arms, const Hypothesis& hyp) {
  ImputedOutcomes out = observed_table(rec, num_arms);
  impute_with(rec, num_arms, hyp.primary, out);
  if (hyp.background) {
    // Primary takes precedence where subsets overlap.
    NullSpec bg = *hyp.background;
    for (const auto& st : rec.stages) {
      for (std::size_t i = 0; i < st.units.size(); ++i) {
        const Unit& u = rec.units[st.units[i]];
        if (!bg.covers(u) || hyp.primary.covers(u)) continue;
        Arm a = st.treatments[i];
        std::size_t base = static_cast<std::size_t>(st.units[i]) * num_arms;
        if (a == bg.arm_hi && !out.known[base + bg.arm_lo]) {
          out.value[base + bg.arm_lo] = st.outcomes[i] - bg.tau;
          out.known[base + bg.arm_lo] = 1;
        } else if (a == bg.arm_lo && !out.known[base + bg.arm_hi]) {
          out.value[base + bg.arm_hi] = st.outcomes[i] + bg.tau;
          out.known[base + bg.arm_hi] = 1;
        }
      }
    }
  }
  return out;
}

namespace {

struct ArmSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations (Welford)

  void add(double y) {
    n += 1;
    double d = y - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (y - mean);
  }
  double var_mle() const { return m2 / static_cast<double>(n); }
};

ArmSummary summarize(std::span<const double> ys) {
  ArmSummary s;
  for (double y : ys) s.add(y);
  return s;
}

}  // namespace

double standardized_ate(std::span<const double> treated, std::span<const double> control) {
  if (treated.empty() || control.empty())
    throw Error(ErrorCode::EmptyArm, "standardized_ate: an arm has no units");
  ArmSummary t = summarize(treated);
  ArmSummary c = summarize(control);
  double denom = t.var_mle() + c.var_mle();
  if (denom <= 0.0)
    throw Error(ErrorCode::DegenerateVariance, "standardized_ate: both arms are constant");
  return (t.mean - c.mean) / std::sqrt(denom);
}

double welch_z(std::span<const double> treated, std::span<const double> control) {
  if (treated.empty() || control.empty())
    throw Error(ErrorCode::EmptyArm, "welch_z: an arm has no units");
  ArmSummary t = summarize(treated);
  ArmSummary c = summarize(control);
  double denom = t.var_mle() / static_cast<double>(t.n) + c.var_mle() / static_cast<double>(c.n);
  if (denom <= 0.0) throw Error(ErrorCode::DegenerateVariance, "welch_z: both arms are constant");
  return (t.mean - c.mean) / std::sqrt(denom);
}

double scaled_delta(double delta_high, double delta_low) {
  return (delta_high - delta_low) / std::sqrt(2.0);
}

double relative_risk(double events_treated, double total_treated, double events_control,
                     double total_control) {
  if (total_treated <= 0.0 || total_control <= 0.0)
    throw Error(ErrorCode::ZeroDenominator, "relative_risk: an arm has no units");
  // Total on the rest of the support so a resampled assignment can't abort a
  // Monte Carlo run: all events on the treated side is the least extreme
  // outcome under the small-is-significant reading, no events at all carries
  // no signal.
  if (events_control <= 0.0)
    return events_treated <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return (events_treated / total_treated) / (events_control / total_control);
}

double eval_test_statistic(const StatisticSpec& stat, const TrialRecord& rec,
                           const ImputedOutcomes& imp, const Hypothesis& hyp,
                           const Assignment& z) {
  const Arm hi = hyp.primary.arm_hi;
  const Arm lo = hyp.primary.arm_lo;
  std::vector<double> treated, control;
  std::string missing;
  int missing_count = 0;

  for (int k = 0; k < rec.num_stages(); ++k) {
    int stage_1based = k + 1;
    if (stage_1based < stat.stage_min || stage_1based > stat.stage_max) continue;
    const auto& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      const Unit& u = rec.units[st.units[i]];
      if (!hyp.primary.covers(u)) continue;
      Arm a = z.stages[k][i];
      if (a != hi && a != lo) continue;  // outside the tested contrast
      if (!imp.is_known(st.units[i], a)) {
        if (missing_count < 8) {
          if (!missing.empty()) missing += ", ";
          missing += u.id + ":arm" + std::to_string(a);
        }
        ++missing_count;
        continue;
      }
      double y = imp.get(st.units[i], a);
      (a == hi ? treated : control).push_back(y);
    }
  }
  if (missing_count > 0)
    throw Error(ErrorCode::NotImputable,
                "statistic reads " + std::to_string(missing_count) + " unknown cells: " + missing);

  if (stat.id == "standardized_ate") return standardized_ate(treated, control);
  if (stat.id == "mean_difference") {
    if (treated.empty() || control.empty())
      throw Error(ErrorCode::EmptyArm, "mean_difference: an arm has no units");
    double mt = 0.0, mc = 0.0;
    for (double y : treated) mt += y;
    for (double y : control) mc += y;
    return mt / static_cast<double>(treated.size()) - mc / static_cast<double>(control.size());
  }
  if (stat.id == "relative_risk") {
    double et = 0.0, ec = 0.0;
    for (double y : treated) et += (y >= 0.5) ? 1.0 : 0.0;
    for (double y : control) ec += (y >= 0.5) ? 1.0 : 0.0;
    return relative_risk(et, static_cast<double>(treated.size()), ec,
                         static_cast<double>(control.size()));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown test statistic '" + stat.id + "'");
}

}  // namespace sri
