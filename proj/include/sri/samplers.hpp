#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sri/rng.hpp"
#include "sri/selection.hpp"

namespace sri {

// Random-walk proposal: pick a stage uniformly, then a uniform subset of
// window[k] of its entries; completely randomized stages shuffle the
// treatments at the chosen positions (counts preserved), Bernoulli stages
// redraw them from the stage's mechanism at the realized labels. Both kernels
// make the Metropolis-Hastings acceptance collapse to the indicator that the
// proposal stays in the conditioning set.
struct RwmConfig {
  std::vector<int> window;    // per stage, clamped to the stage size
  std::size_t length = 1000;  // retained states after burn-in
  std::size_t burn_in = 0;    // 0 selects length/10 rounded up
  std::size_t thin = 1;       // keep every thin-th post-burn-in state

  std::size_t effective_burn_in() const { return burn_in > 0 ? burn_in : (length + 9) / 10; }
};

struct ChainDiagnostics {
  double acceptance_rate = 0.0;  // accepted / proposals, burn-in included
  double msejd = 0.0;            // mean squared jump distance of retained states
  std::uint64_t proposals = 0;
  std::uint64_t attempts = 0;  // rejection sampling: mechanism draws tried
};

// One fresh draw of the full treatment vector from the sequential mechanisms,
// interim labels recomputed from the candidate's own prefix. Labels are only
// evaluated when some mechanism's parameters depend on them; that evaluation
// can throw NotImputable under a partially sharp null.
Assignment draw_unconditional(const Workspace& ws, Rng& rng);

// Independent draws from the conditional law: redraw from the mechanisms
// until selection and conditioning values match the observed ones, rejecting
// attempts stage by stage as soon as a prefix rules them out. Calls
// on_accepted once per accepted draw. Throws BudgetExhausted (carrying the
// number accepted so far) when max_attempts draws yield fewer than m.
void rejection_run(const Workspace& ws, std::size_t m, std::uint64_t max_attempts, Rng& rng,
                   const std::function<void(const Assignment&)>& on_accepted,
                   ChainDiagnostics* diag = nullptr);

std::vector<Assignment> rejection_sample(const Workspace& ws, std::size_t m,
                                         std::uint64_t max_attempts, Rng& rng,
                                         ChainDiagnostics* diag = nullptr);

// Applies one random-walk proposal to z in place (no acceptance test).
void propose(const Workspace& ws, const RwmConfig& cfg, Rng& rng, Assignment& z);

// Metropolis-Hastings chain over the conditioning set, started at the
// observed assignment. Calls on_state once per retained state. The returned
// diagnostics cover the whole run; msejd is computed over retained states, so
// tune with thin = 1.
void rwm_run(const Workspace& ws, const RwmConfig& cfg, Rng& rng,
             const std::function<void(const Assignment&)>& on_state,
             ChainDiagnostics* diag = nullptr);

std::vector<Assignment> rwm_chain(const Workspace& ws, const RwmConfig& cfg, Rng& rng,
                                  ChainDiagnostics* diag = nullptr);

// Mean squared jump distance along a path; throws ChainTooShort below two
// states.
double msejd(const std::vector<Assignment>& path);

struct WindowScore {
  std::vector<int> window;
  double msejd = 0.0;
  double acceptance_rate = 0.0;
};

// Pilot-run window selection: one short chain per candidate (independent
// substream each, so the list can grow without disturbing earlier scores),
// keeping the candidate with the largest mean squared jump distance. Ties
// keep the earlier candidate; list candidates smallest first.
std::vector<int> tune_window(const Workspace& ws, const std::vector<std::vector<int>>& candidates,
                             std::size_t pilot_length, Rng& rng,
                             std::vector<WindowScore>* scores = nullptr);

// The conditional law by full enumeration (throws SpaceTooLarge past cap).
// Probabilities are mechanism weights restricted to the conditioning set and
// normalized.
struct ExactSupport {
  std::vector<Assignment> states;
  std::vector<double> prob;
  std::size_t observed_index = 0;
};

ExactSupport exact_conditional_support(const Workspace& ws, std::uint64_t cap);

// States reachable from the observed assignment under the proposal kernel
// without leaving the conditioning set. Quadratic in the support size; meant
// for small spaces (irreducibility checks).
std::vector<Assignment> communication_class(const Workspace& ws, const RwmConfig& cfg,
                                            std::uint64_t cap);

}  // namespace sri
