#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sri/samplers.hpp"

namespace sri {

enum class PValueMethod { Naive, Split, SelectiveExact, SelectiveRejection, SelectiveRwm };

// Canonical tags: naive, split, selective_exact, selective_rejection,
// selective_rwm. method_from_name also accepts the sampler-style aliases
// exact, rejection and rwm; unknown names raise UsageError.
std::string method_name(PValueMethod m);
PValueMethod method_from_name(const std::string& name);

struct PValueResult {
  double estimate = 1.0;
  PValueMethod method = PValueMethod::SelectiveExact;
  double mc_standard_error = 0.0;  // 0 in exact mode
  std::size_t num_samples = 0;     // MC draws kept; exact mode: support size
  ChainDiagnostics diagnostics;
};

// Monte Carlo p-value (1 + hits)/(1 + m); ties count as hits.
double mc_pvalue(std::uint64_t hits, std::size_t m);
double mc_pvalue(std::span<const double> stat_values, double observed, Direction direction);

// sqrt(p(1-p)/m), the independent-draws standard error.
double binomial_se(double p, std::size_t m);

// Batch-means standard error of the mean of an autocorrelated sequence
// (sqrt(n) batches). Returns 0 below four observations.
double batch_means_se(std::span<const double> x);

PValueResult selective_pvalue_exact(const TrialSpec& spec, const TrialRecord& rec,
                                    const Hypothesis& hyp, const StatisticSpec& stat,
                                    std::uint64_t cap);

PValueResult selective_pvalue_rejection(const TrialSpec& spec, const TrialRecord& rec,
                                        const Hypothesis& hyp, const StatisticSpec& stat,
                                        std::size_t m, std::uint64_t max_attempts, Rng rng);

// Estimates the class-conditional p-value (the chain cannot leave the
// communication class of the observed assignment).
PValueResult selective_pvalue_rwm(const TrialSpec& spec, const TrialRecord& rec,
                                  const Hypothesis& hyp, const StatisticSpec& stat,
                                  const RwmConfig& cfg, Rng rng);

// Unconditional re-randomization of every stage, no selection matching. Under
// a partially sharp null a draw may hit non-imputable cells; that propagates
// as NotImputable.
PValueResult naive_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                          const StatisticSpec& stat, std::size_t m, Rng rng);

// Stage 1 frozen at its observed value, later stages re-randomized at the
// realized labels, statistic restricted to stages >= 2. Degenerates to 1.0 on
// single-stage trials.
PValueResult split_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                          const StatisticSpec& stat, std::size_t m, Rng rng);

struct InferenceOptions {
  PValueMethod method = PValueMethod::SelectiveRwm;
  std::size_t samples = 1000;      // MC draws / retained chain states
  std::uint64_t max_attempts = 0;  // rejection budget; 0 selects 1000 * samples
  std::vector<int> window;         // RWM; empty selects max(2, |R_k|/10) per stage
  std::size_t burn_in = 0;         // 0 selects samples/10 rounded up
  std::size_t thin = 1;
  std::uint64_t enum_cap = std::uint64_t{1} << 22;  // exact-mode cap
};

RwmConfig make_rwm_config(const TrialRecord& rec, const InferenceOptions& opt);

PValueResult compute_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                            const StatisticSpec& stat, const InferenceOptions& opt, Rng rng);

struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  std::vector<double> values() const;  // lo, lo+step, ... up to hi
};

struct GridPointResult {
  double tau = 0.0;
  double p = 0.0;
  double se = 0.0;
  bool failed = false;
  std::string error;
};

struct ConfidenceSet {
  double alpha = 0.1;
  GridSpec grid;
  std::vector<GridPointResult> p_curve;
  std::vector<std::pair<double, double>> intervals;  // closed, grid resolution
};

// Maximal runs of grid points with p > alpha; failed points break runs.
std::vector<std::pair<double, double>> intervals_above(const std::vector<GridPointResult>& curve,
                                                       double alpha);

// Test inversion over the tau grid, parallel across grid points (threads <= 0
// uses the default worker count). Per-point failures are flagged on the curve
// and excluded from the intervals.
ConfidenceSet confidence_set(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& base,
                             const StatisticSpec& stat, const GridSpec& grid, double alpha,
                             const InferenceOptions& opt, Rng rng, int threads = 1);

// Binary search for the lower confidence bound, assuming p crosses alpha
// upward once inside [lo, hi]. With check_endpoints the bracket is verified
// first (NoBracket when p(lo) > alpha or p(hi) <= alpha); studies that know
// their bracket skip the two extra evaluations.
double lower_bound_bisect(const std::function<double(double)>& pvalue_at, double lo, double hi,
                          double alpha, double tol, bool check_endpoints = true);

// Midpoint of sup{tau: p < 1/2} and inf{tau: p > 1/2} on an evaluated curve.
// Throws Undefined naming the empty side.
double hl_estimate(const std::vector<GridPointResult>& curve);

}  // namespace sri
