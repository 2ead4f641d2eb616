#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sri/inference.hpp"
#include "sri/io.hpp"
#include "sri/rng.hpp"
#include "sri/trial.hpp"

namespace sri {

// --- Two-stage enrichment trial, synthetic data ------------------------------

struct EnrichmentScenario {
  int n1_low = 50;   // stage-1 recruitment per group
  int n1_high = 50;
  int n2 = 40;       // stage-2 recruitment, taken from the selected group(s)
  double tau_low = 0.0;  // true unit-level effect per group
  double tau_high = 0.0;
  bool select_on_stage2 = false;  // true drops the stage-2 hold-out
};

// Stage-1 CRD half/half over the pooled groups; threshold rule on the scaled
// contrast of per-group standardized ATEs, with the 20%/80% normal quantiles
// cached as rule parameters so selection is bit-reproducible; stage-2
// recruitment of n2 units from the selected group(s) (an even split when both
// or neither) followed by another half/half CRD.
TrialSpec make_enrichment_spec(const EnrichmentScenario& sc);

// Draws potential outcomes Y(0) ~ N(0,1), Y(1) = Y(0) + tau(group), runs
// stage 1, applies the selection rule, recruits and runs stage 2. The record
// carries the full potential table and recomputed selection labels.
TrialRecord gen_enrichment_trial(const TrialSpec& spec, const EnrichmentScenario& sc, Rng& rng);

// Groups named by the stage-1 selection label ("only_high" -> {high}, ...;
// fallback: both groups).
std::vector<std::string> selected_groups(const std::string& label);

// Null tested in the studies: the selected group(s) at tau, everyone else
// pinned at zero effect, so every draw is imputable and no entry is frozen.
Hypothesis enrichment_hypothesis(const TrialRecord& rec, double tau);

// Standardized ATE on the selected group(s), both stages, larger = stronger.
StatisticSpec enrichment_statistic();

// --- Study drivers (rejection probabilities, coverage) -----------------------

struct StudyConfig {
  int replications = 400;
  EnrichmentScenario scenario;
  std::vector<double> tau_grid = GridSpec{-1.0, 1.0, 0.2}.values();  // tested nulls
  double alpha = 0.1;
  std::size_t samples = 1000;           // Monte Carlo draws per p-value
  std::uint64_t max_attempts = 100000;  // rejection-sampling budget per p-value
  std::vector<int> window = {5, 5};     // random-walk proposal window per stage
  double bracket_lo = -1.25;            // lower-confidence-bound search bracket
  double bracket_hi = 2.0;
  double bracket_tol = 0.0125;
  std::uint64_t seed = 1;
  int threads = 1;
};

// One computed p-value. `seconds` is wall clock and never enters the
// deterministic CSV/JSON artifacts.
struct PValueRow {
  int rep = 0;
  double tau = 0.0;
  std::string method;   // naive | split | selective_rejection | selective_rwm
  std::string stratum;  // selection label of the replication
  double p = 1.0;
  double se = 0.0;
  std::uint64_t attempts = 0;  // proposals consumed (sampler methods)
  std::uint64_t accepted = 0;  // draws kept
  bool failed = false;
  std::string error;
  double seconds = 0.0;
};

// One lower confidence bound from test inversion.
struct BoundRow {
  int rep = 0;
  std::string method;
  std::string stratum;
  double lower_bound = 0.0;
  bool covered = false;  // lower_bound <= true effect of the selected group(s)
  bool failed = false;
  std::string error;
  double seconds = 0.0;
};

struct StudyReport {
  StudyConfig config;
  std::vector<std::string> strata;  // per replication: observed selection label
  std::vector<PValueRow> pvalues;   // replication x tau x method
  std::vector<BoundRow> bounds;     // replication x method
};

// For every replication and tau on the grid, computes the naive, split,
// rejection-sampling and random-walk p-values for the selected group(s).
// Per-row failures (exhausted budgets) are flagged and the study continues.
StudyReport run_rejection_study(const StudyConfig& cfg);

// For every replication and method, inverts the one-sided test over
// [bracket_lo, bracket_hi] by bisection at level alpha. A probe that
// exhausts its sampling budget counts as a rejection (the class got too
// atypical to even sample from; its p-value is far below any level).
StudyReport run_coverage_study(const StudyConfig& cfg);

// --- Report aggregation -------------------------------------------------------

// Fraction of matching non-failed rows with p <= alpha; empty stratum = all.
double rejection_rate(const StudyReport& r, const std::string& method, double tau,
                      const std::string& stratum, double alpha, std::size_t* count = nullptr);
double coverage_rate(const StudyReport& r, const std::string& method, const std::string& stratum,
                     std::size_t* count = nullptr);
double mean_lower_bound(const StudyReport& r, const std::string& method,
                        const std::string& stratum);
// Pooled accepted/attempts of rejection-sampling rows in the given strata
// (failed rows included: a capped run still spent its attempts).
double aggregate_acceptance(const StudyReport& r, const std::vector<std::string>& strata);
double total_seconds(const StudyReport& r, const std::string& method,
                     const std::vector<std::string>& strata);

std::string pvalue_rows_csv(const StudyReport& r);
std::string bound_rows_csv(const StudyReport& r);
std::string timings_csv(const StudyReport& r);  // separate artifact: not deterministic
std::string study_summary_json(const StudyReport& r);

// --- Hold-out smoothing study -------------------------------------------------

struct HoldoutConfig {
  int datasets = 20;
  // Desk scale with a real effect in the high-risk group so the two rules
  // usually agree on it.
  EnrichmentScenario scenario{4, 4, 8, 0.0, 1.0, false};
  GridSpec grid{-2.0, 3.0, 0.25};
  std::uint64_t enum_cap = std::uint64_t{1} << 22;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct HoldoutCurves {
  int dataset = 0;
  bool matched = false;  // both rules selected the high-risk group
  std::vector<GridPointResult> with_stage2;  // selection reads both stages
  std::vector<GridPointResult> holdout;      // selection reads stage 1 only
  std::vector<GridPointResult> split;        // stage-2 randomization only
};

struct HoldoutReport {
  HoldoutConfig config;
  std::vector<HoldoutCurves> curves;
};

// Generates one dataset per index; on the matched ones computes three exact
// p-value curves over the grid: selection on both stages, hold-out selection,
// and the stage-2-only test (stage 1 frozen via an identity selection rule).
// The tested null is the partially sharp one for the high-risk group.
HoldoutReport run_holdout_study(const HoldoutConfig& cfg);

// Sign changes of p - level over consecutive non-failed curve points.
int level_crossings(const std::vector<GridPointResult>& curve, double level);

std::string holdout_curves_csv(const HoldoutReport& r);
std::string holdout_summary_json(const HoldoutReport& r);

// --- Subsampled two-stage trials from a completed experiment ------------------

// Synthetic stand-in for the blood-pressure dataset: per age group and arm,
// the event/non-event counts of the reference two-stage table scaled 5x
// (10000 rows), so the pool supports disjoint 2000 + 200 subsamples and every
// group keeps exactly the reference relative risk.
std::vector<PoolRow> make_surrogate_pool();

// Bernoulli(1/2) assignment in both stages, minimal-relative-risk group
// selection on stage 1, stage-2 hold-out.
TrialSpec make_subsample_spec();

// Hypothetical two-stage trial: n1 pool rows, selection by the spec's rule on
// stage 1, then n2 rows of the selected group from the remainder. With
// fabricate_arms the recorded arms are replaced by fresh Bernoulli(1/2)
// draws (placebo protocol). Throws InsufficientUnits when the pool cannot
// supply the sizes.
TrialRecord subsample_two_stage(const std::vector<PoolRow>& pool, int n1, int n2,
                                const TrialSpec& spec, bool fabricate_arms, Rng& rng);

struct PlaceboConfig {
  int target_trials = 200;  // kept trials with the target selection
  int max_trials = 1600;    // generation cap
  std::string target_group = "ge80";
  int n1 = 2000;
  int n2 = 200;
  std::size_t samples = 1000;
  bool fabricate_arms = true;  // false = treated-data (power) protocol
  std::uint64_t seed = 1;
  int threads = 1;
};

struct PlaceboReport {
  PlaceboConfig config;
  int generated = 0;  // subsampled trials drawn
  int kept = 0;       // trials whose selection hit the target group
  std::map<std::string, int> selection_counts;
  std::vector<PValueRow> rows;  // rep = generation index of the kept trial
};

// Draws subsampled trials until target_trials hit the target selection (or
// max_trials is reached), then computes the sharp-null relative-risk p-values
// (rejection sampling, stage-2-only, naive) on every kept trial.
PlaceboReport run_placebo_study(const std::vector<PoolRow>& pool, const PlaceboConfig& cfg);

// Empirical CDF of the method's non-failed p-values at the given level.
double pvalue_cdf(const PlaceboReport& r, const std::string& method, double alpha,
                  std::size_t* count = nullptr);

std::string placebo_rows_csv(const PlaceboReport& r);
std::string placebo_summary_json(const PlaceboReport& r);

}  // namespace sri
