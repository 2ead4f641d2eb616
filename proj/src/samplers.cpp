#include "sri/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "sri/assignment_space.hpp"
#include "sri/error.hpp"

namespace sri {

namespace {

Assignment empty_like(const TrialRecord& rec) {
  Assignment z;
  z.stages.resize(rec.num_stages());
  for (int k = 0; k < rec.num_stages(); ++k) z.stages[k].resize(rec.stages[k].units.size());
  return z;
}

void check_window(const RwmConfig& cfg, const TrialRecord& rec) {
  if (cfg.window.size() != static_cast<std::size_t>(rec.num_stages()))
    throw Error(ErrorCode::InvalidConfig, "window needs one entry per stage");
  for (int h : cfg.window)
    if (h < 1) throw Error(ErrorCode::InvalidConfig, "window entries must be positive");
}

}  // namespace

Assignment draw_unconditional(const Workspace& ws, Rng& rng) {
  const TrialSpec& spec = ws.spec();
  const TrialRecord& rec = ws.rec();
  Assignment z = empty_like(rec);
  SelectionValue labels;
  const bool invariant = ws.mechanisms_label_invariant();
  for (int k = 0; k < rec.num_stages(); ++k) {
    std::string prev = "*";
    if (k > 0) prev = invariant ? ws.observed_s()[k - 1] : labels[k - 1];
    draw_stage(spec, rec, k, prev, rng, z.stages[k]);
    if (!invariant && k + 1 < rec.num_stages()) ws.prefix_labels(z, k + 1, labels);
  }
  return z;
}

void rejection_run(const Workspace& ws, std::size_t m, std::uint64_t max_attempts, Rng& rng,
                   const std::function<void(const Assignment&)>& on_accepted,
                   ChainDiagnostics* diag) {
  const TrialSpec& spec = ws.spec();
  const TrialRecord& rec = ws.rec();
  const SelectionValue& s_obs = ws.observed_s();
  const bool invariant = ws.mechanisms_label_invariant();
  const int k_stages = rec.num_stages();

  Assignment z = empty_like(rec);
  SelectionValue labels;
  std::uint64_t attempts = 0;
  std::size_t accepted = 0;
  while (accepted < m) {
    if (attempts >= max_attempts) {
      if (diag != nullptr) {
        diag->attempts = attempts;
        diag->acceptance_rate =
            attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
      }
      throw BudgetExhausted(accepted, "rejection sampling: " + std::to_string(max_attempts) +
                                          " draws yielded " + std::to_string(accepted) + " of " +
                                          std::to_string(m) + " requested samples");
    }
    ++attempts;

    // Draw stage by stage, dropping the attempt at the first prefix that
    // leaves the conditioning set. Later stages may then take the observed
    // labels as given.
    bool ok = true;
    for (int k = 0; k < k_stages; ++k) {
      draw_stage(spec, rec, k, k == 0 ? "*" : s_obs[k - 1], rng, z.stages[k]);
      if (!ws.stage_respects_conditioning(z, k)) {
        ok = false;
        break;
      }
      if (!invariant) {
        ws.prefix_labels(z, k + 1, labels);
        if (labels[k] != s_obs[k]) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    if (invariant) {
      ws.prefix_labels(z, k_stages, labels);
      if (labels != s_obs) continue;
    }
    ++accepted;
    on_accepted(z);
  }
  if (diag != nullptr) {
    diag->attempts = attempts;
    diag->acceptance_rate =
        attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
}

std::vector<Assignment> rejection_sample(const Workspace& ws, std::size_t m,
                                         std::uint64_t max_attempts, Rng& rng,
                                         ChainDiagnostics* diag) {
  std::vector<Assignment> out;
  out.reserve(m);
  rejection_run(
      ws, m, max_attempts, rng, [&](const Assignment& z) { out.push_back(z); }, diag);
  return out;
}

void propose(const Workspace& ws, const RwmConfig& cfg, Rng& rng, Assignment& z) {
  const TrialSpec& spec = ws.spec();
  const TrialRecord& rec = ws.rec();
  int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(rec.num_stages())));
  auto& zs = z.stages[k];
  const std::uint32_t n = static_cast<std::uint32_t>(zs.size());
  if (n == 0) return;
  const std::uint32_t h = std::min<std::uint32_t>(static_cast<std::uint32_t>(cfg.window[k]), n);
  std::vector<std::uint32_t> pos = rng.sample_without_replacement(n, h);

  const Mechanism& mech = spec.stages[k].mechanism;
  if (mech.kind == MechanismKind::CompletelyRandomized) {
    std::vector<Arm> vals(h);
    for (std::uint32_t i = 0; i < h; ++i) vals[i] = zs[pos[i]];
    rng.shuffle(vals);
    for (std::uint32_t i = 0; i < h; ++i) zs[pos[i]] = vals[i];
    return;
  }

  const std::string& prev = k == 0 ? std::string("*") : ws.observed_s()[k - 1];
  const auto& st = rec.stages[k];
  for (std::uint32_t i = 0; i < h; ++i) {
    double p = mech.prob_for(prev, rec.units[st.units[pos[i]]].group);
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(k + 1) + ": no probability for group '" +
                      rec.units[st.units[pos[i]]].group + "'");
    zs[pos[i]] = rng.bernoulli(p) ? 1 : 0;
  }
}

void rwm_run(const Workspace& ws, const RwmConfig& cfg, Rng& rng,
             const std::function<void(const Assignment&)>& on_state, ChainDiagnostics* diag) {
  check_window(cfg, ws.rec());
  if (cfg.length == 0) throw Error(ErrorCode::InvalidConfig, "chain length must be positive");
  const std::size_t thin = std::max<std::size_t>(1, cfg.thin);
  const std::size_t burn = cfg.effective_burn_in();
  const std::uint64_t total =
      static_cast<std::uint64_t>(burn) + static_cast<std::uint64_t>(thin) * cfg.length;

  Assignment cur = ws.observed();
  Assignment prop = cur;
  Assignment prev_kept;
  std::uint64_t accepted = 0;
  std::size_t kept = 0;
  double jump_sum = 0.0;
  for (std::uint64_t t = 1; t <= total; ++t) {
    prop = cur;
    propose(ws, cfg, rng, prop);
    if (ws.matches(prop)) {
      std::swap(cur, prop);
      ++accepted;
    }
    if (t > burn && (t - burn) % thin == 0) {
      if (kept > 0) jump_sum += squared_jump_distance(prev_kept, cur);
      prev_kept = cur;
      ++kept;
      on_state(cur);
    }
  }
  if (diag != nullptr) {
    diag->proposals = total;
    diag->acceptance_rate =
        total == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(total);
    diag->msejd = kept > 1 ? jump_sum / static_cast<double>(kept - 1) : 0.0;
  }
}

std::vector<Assignment> rwm_chain(const Workspace& ws, const RwmConfig& cfg, Rng& rng,
                                  ChainDiagnostics* diag) {
  std::vector<Assignment> out;
  out.reserve(cfg.length);
  rwm_run(
      ws, cfg, rng, [&](const Assignment& z) { out.push_back(z); }, diag);
  return out;
}

double msejd(const std::vector<Assignment>& path) {
  if (path.size() < 2)
    throw Error(ErrorCode::ChainTooShort, "mean squared jump distance needs at least two states");
  double sum = 0.0;
  for (std::size_t t = 1; t < path.size(); ++t)
    sum += squared_jump_distance(path[t - 1], path[t]);
  return sum / static_cast<double>(path.size() - 1);
}

std::vector<int> tune_window(const Workspace& ws, const std::vector<std::vector<int>>& candidates,
                             std::size_t pilot_length, Rng& rng,
                             std::vector<WindowScore>* scores) {
  if (candidates.empty())
    throw Error(ErrorCode::InvalidConfig, "window tuning needs at least one candidate");
  std::size_t best = 0;
  double best_msejd = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    RwmConfig cfg;
    cfg.window = candidates[i];
    cfg.length = pilot_length;
    Rng sub = rng.fork(i);
    ChainDiagnostics diag;
    rwm_run(
        ws, cfg, sub, [](const Assignment&) {}, &diag);
    if (scores != nullptr) scores->push_back({candidates[i], diag.msejd, diag.acceptance_rate});
    if (diag.msejd > best_msejd) {
      best_msejd = diag.msejd;
      best = i;
    }
  }
  return candidates[best];
}

ExactSupport exact_conditional_support(const Workspace& ws, std::uint64_t cap) {
  const TrialSpec& spec = ws.spec();
  const TrialRecord& rec = ws.rec();
  std::vector<std::string> prev(rec.num_stages(), "*");
  for (int k = 1; k < rec.num_stages(); ++k) prev[k] = ws.observed_s()[k - 1];

  ExactSupport out;
  std::vector<double> lw;
  for_each_assignment(spec, rec, cap, [&](const Assignment& z) {
    if (!ws.matches(z)) return;
    double w;
    try {
      w = assignment_log_weight(spec, rec, z, prev);
    } catch (const Error& e) {
      // Label-dependent mechanisms enumerate the union space over labels;
      // states with probability zero under the realized labels drop out here.
      if (e.code() == ErrorCode::InfeasibleAssignment) return;
      throw;
    }
    out.states.push_back(z);
    lw.push_back(w);
  });
  if (out.states.empty())
    throw Error(ErrorCode::InfeasibleAssignment,
                "conditioning set is empty (observed assignment not in the enumerated space)");

  double hi = *std::max_element(lw.begin(), lw.end());
  double total = 0.0;
  for (double v : lw) total += std::exp(v - hi);
  out.prob.resize(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) out.prob[i] = std::exp(lw[i] - hi) / total;

  for (std::size_t i = 0; i < out.states.size(); ++i)
    if (out.states[i] == ws.observed()) {
      out.observed_index = i;
      break;
    }
  return out;
}

std::vector<Assignment> communication_class(const Workspace& ws, const RwmConfig& cfg,
                                            std::uint64_t cap) {
  check_window(cfg, ws.rec());
  ExactSupport sup = exact_conditional_support(ws, cap);
  const std::size_t n = sup.states.size();

  // One proposal can turn a into b when they differ inside a single stage at
  // no more than that stage's window size positions (the shuffled or redrawn
  // subset can then cover the difference).
  auto adjacent = [&](const Assignment& a, const Assignment& b) {
    int touched = -1;
    for (std::size_t k = 0; k < a.stages.size(); ++k) {
      int d = 0;
      for (std::size_t i = 0; i < a.stages[k].size(); ++i)
        if (a.stages[k][i] != b.stages[k][i]) ++d;
      if (d == 0) continue;
      if (touched >= 0) return false;
      touched = static_cast<int>(k);
      std::uint32_t h = std::min<std::uint32_t>(static_cast<std::uint32_t>(cfg.window[k]),
                                                static_cast<std::uint32_t>(a.stages[k].size()));
      if (d > static_cast<int>(h)) return false;
    }
    return true;
  };

  std::vector<unsigned char> seen(n, 0);
  std::queue<std::size_t> frontier;
  seen[sup.observed_index] = 1;
  frontier.push(sup.observed_index);
  while (!frontier.empty()) {
    std::size_t i = frontier.front();
    frontier.pop();
    for (std::size_t j = 0; j < n; ++j) {
      if (seen[j] || !adjacent(sup.states[i], sup.states[j])) continue;
      seen[j] = 1;
      frontier.push(j);
    }
  }

  std::vector<Assignment> out;
  for (std::size_t i = 0; i < n; ++i)
    if (seen[i]) out.push_back(sup.states[i]);
  return out;
}

}  // namespace sri
