#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sri/trial.hpp"

namespace sri {

// Comparison direction for p-values: Le counts T(z*) <= T(z) (the default),
// Ge counts T(z*) >= T(z). Statistics where larger values indicate a stronger
// effect (standardized ATE) pair with Ge in one-sided designs; statistics
// where smaller values do (relative risk) pair with Le.
enum class Direction { Le, Ge };

inline bool direction_counts(Direction d, double t_star, double t_obs) {
  return d == Direction::Le ? (t_star <= t_obs) : (t_star >= t_obs);
}

// H0: Y_i(arm_hi) - Y_i(arm_lo) = tau for every recruited unit whose group is
// in `groups` (empty = all recruited units).
struct NullSpec {
  std::vector<std::string> groups;
  Arm arm_hi = 1;
  Arm arm_lo = 0;
  double tau = 0.0;

  bool covers(const Unit& u) const {
    if (groups.empty()) return true;
    for (const auto& g : groups)
      if (g == u.group) return true;
    return false;
  }
};

// A tested hypothesis: the primary null plus an optional background null that
// pins the effect for the remaining units (commonly tau = 0). Without a
// background, units outside the primary subset stay non-imputable and the
// conditioning statistic freezes their treatments.
struct Hypothesis {
  NullSpec primary;
  std::optional<NullSpec> background;

  Hypothesis() = default;
  Hypothesis(NullSpec n) : primary(std::move(n)) {}  // NOLINT: implicit by design
  Hypothesis(NullSpec n, NullSpec bg) : primary(std::move(n)), background(std::move(bg)) {}

  bool covers(const Unit& u) const {
    return primary.covers(u) || (background && background->covers(u));
  }
  // The null governing a unit (primary wins when both apply).
  const NullSpec* null_for(const Unit& u) const {
    if (primary.covers(u)) return &primary;
    if (background && background->covers(u)) return &*background;
    return nullptr;
  }
  Hypothesis with_tau(double tau) const {
    Hypothesis h = *this;
    h.primary.tau = tau;
    return h;
  }
};

// Unit-by-arm outcome table with a known mask. Entries are filled from
// observed data plus the null's imputation rule.
struct ImputedOutcomes {
  int num_arms = 0;
  std::vector<double> value;          // [unit * num_arms + arm]
  std::vector<unsigned char> known;

  bool is_known(int unit, Arm a) const {
    return known[static_cast<std::size_t>(unit) * num_arms + a] != 0;
  }
  double get(int unit, Arm a) const { return value[static_cast<std::size_t>(unit) * num_arms + a]; }
};

// Observed cells plus, for units covered by the null that received arm_hi or
// arm_lo, the opposite cell shifted by tau. Cells of uncovered units stay
// unknown unless directly observed.
ImputedOutcomes impute(const TrialRecord& rec, int num_arms, const NullSpec& null);
ImputedOutcomes impute(const TrialRecord& rec, int num_arms, const Hypothesis& hyp);

// (mean_t - mean_c) / sqrt(s2_t + s2_c) with maximum-likelihood variances
// (divide by the per-arm count). Throws EmptyArm / DegenerateVariance.
double standardized_ate(std::span<const double> treated, std::span<const double> control);

// Same contrast scaled by the standard error of the mean difference,
// sqrt(s2_t/n_t + s2_c/n_c); approximately N(0,1) under no effect. This is
// the scaling selection rules use.
double welch_z(std::span<const double> treated, std::span<const double> control);

// (delta_high - delta_low) / sqrt(2).
double scaled_delta(double delta_high, double delta_low);

// (events_t / total_t) / (events_c / total_c). Throws ZeroDenominator when an
// arm has no units; zero control events yields +inf (or 1 with zero treated
// events) so rerandomized draws always evaluate.
double relative_risk(double events_treated, double total_treated, double events_control,
                     double total_control);

// Test statistic selection. Stage scope is 1-based and inclusive.
struct StatisticSpec {
  std::string id = "standardized_ate";  // standardized_ate | relative_risk | mean_difference
  int stage_min = 1;
  int stage_max = std::numeric_limits<int>::max();
  Direction direction = Direction::Le;
};

// Evaluates the statistic on the units covered by the primary null within the
// stage scope, reading outcomes from the imputed table at the candidate
// assignment. Throws NotImputable listing unknown cells.
double eval_test_statistic(const StatisticSpec& stat, const TrialRecord& rec,
                           const ImputedOutcomes& imp, const Hypothesis& hyp, const Assignment& z);

}  // namespace sri
