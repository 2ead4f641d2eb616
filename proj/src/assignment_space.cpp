#include "sri/assignment_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sri/error.hpp"

namespace sri {

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t mul_sat(std::uint64_t a, std::uint64_t b) {
  if (a == 0 || b == 0) return 0;
  if (a > kSaturated / b) return kSaturated;
  return a * b;
}

std::uint64_t add_sat(std::uint64_t a, std::uint64_t b) {
  return (a > kSaturated - b) ? kSaturated : a + b;
}

// Number of distinct arrangements of the count multiset, saturating.
std::uint64_t multinomial_sat(const std::vector<int>& counts) {
  std::uint64_t total = 0;
  std::uint64_t result = 1;
  for (int c : counts) {
    for (int j = 1; j <= c; ++j) {
      total += 1;
      // result *= total / j, kept exact by multiplying first (binomial rows
      // are integers); guard the multiply.
      if (result > kSaturated / total) return kSaturated;
      result = result * total / static_cast<std::uint64_t>(j);
    }
  }
  return result;
}

std::vector<std::vector<int>> distinct_feasible_counts(const Mechanism& mech, int n, int num_arms) {
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> out;
  for (const auto& [_, c] : mech.counts) {
    std::vector<int> counts = c;
    counts.resize(num_arms, 0);
    int sum = 0;
    for (int v : counts) sum += v;
    if (sum != n) continue;  // infeasible for the realized recruitment size
    if (seen.insert(counts).second) out.push_back(counts);
  }
  return out;
}

// Per-unit feasible arms for a Bernoulli stage (union over declared labels).
std::vector<std::vector<Arm>> bernoulli_unit_arms(const TrialRecord& rec, const Mechanism& mech,
                                                  int stage) {
  const auto& st = rec.stages[stage];
  std::vector<std::vector<Arm>> arms(st.units.size());
  std::set<std::string> labels;
  for (const auto& [label, _] : mech.probs) labels.insert(label);
  if (labels.empty()) labels.insert("*");
  for (std::size_t i = 0; i < st.units.size(); ++i) {
    bool zero_ok = false, one_ok = false;
    for (const auto& label : labels) {
      double p = mech.prob_for(label, rec.units[st.units[i]].group);
      if (p < 0.0) continue;
      if (p < 1.0) zero_ok = true;
      if (p > 0.0) one_ok = true;
    }
    if (zero_ok) arms[i].push_back(0);
    if (one_ok) arms[i].push_back(1);
    if (arms[i].empty())
      throw Error(ErrorCode::InfeasibleAssignment,
                  "no feasible arm for unit " + rec.units[st.units[i]].id);
  }
  return arms;
}

std::uint64_t stage_count(const TrialSpec& spec, const TrialRecord& rec, int stage) {
  const Mechanism& mech = spec.stages[stage].mechanism;
  const int n = static_cast<int>(rec.stages[stage].units.size());
  if (mech.kind == MechanismKind::CompletelyRandomized) {
    std::uint64_t total = 0;
    for (const auto& counts : distinct_feasible_counts(mech, n, spec.num_arms))
      total = add_sat(total, multinomial_sat(counts));
    return total;
  }
  std::uint64_t total = 1;
  for (const auto& arms : bernoulli_unit_arms(rec, mech, stage))
    total = mul_sat(total, arms.size());
  return total;
}

}  // namespace

double stage_log_weight(const TrialSpec& spec, const TrialRecord& rec, int stage,
                        const std::string& prev_label, const std::vector<Arm>& z_stage) {
  const Mechanism& mech = spec.stages[stage].mechanism;
  const auto& st = rec.stages[stage];
  if (z_stage.size() != st.units.size())
    throw Error(ErrorCode::InfeasibleAssignment,
                "stage " + std::to_string(stage + 1) + ": treatment vector has wrong length");

  if (mech.kind == MechanismKind::CompletelyRandomized) {
    const std::vector<int>* counts = mech.counts_for(prev_label);
    if (counts == nullptr)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": no arm counts for label '" +
                      prev_label + "'");
    std::vector<int> realized(spec.num_arms, 0);
    for (Arm a : z_stage) {
      if (a < 0 || a >= spec.num_arms)
        throw Error(ErrorCode::InfeasibleAssignment, "treatment arm out of range");
      realized[a]++;
    }
    std::vector<int> declared = *counts;
    declared.resize(spec.num_arms, 0);
    if (realized != declared)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": arm counts infeasible under label '" +
                      prev_label + "'");
    // Uniform over multiset arrangements: log(prod c_l! / n!).
    double lw = -std::lgamma(static_cast<double>(z_stage.size()) + 1.0);
    for (int c : declared) lw += std::lgamma(static_cast<double>(c) + 1.0);
    return lw;
  }

  double lw = 0.0;
  for (std::size_t i = 0; i < z_stage.size(); ++i) {
    double p = mech.prob_for(prev_label, rec.units[st.units[i]].group);
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": no probability for group '" +
                      rec.units[st.units[i]].group + "'");
    Arm a = z_stage[i];
    if (a != 0 && a != 1)
      throw Error(ErrorCode::InfeasibleAssignment, "Bernoulli mechanism is binary");
    double pa = (a == 1) ? p : 1.0 - p;
    if (pa <= 0.0)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": arm has probability zero");
    lw += std::log(pa);
  }
  return lw;
}

double assignment_log_weight(const TrialSpec& spec, const TrialRecord& rec, const Assignment& z,
                             const std::vector<std::string>& prev_labels) {
  if (z.stages.size() != rec.stages.size())
    throw Error(ErrorCode::InfeasibleAssignment, "assignment has wrong number of stages");
  double lw = 0.0;
  for (int k = 0; k < rec.num_stages(); ++k) {
    std::string prev = "*";
    if (k > 0 && static_cast<std::size_t>(k) < prev_labels.size()) prev = prev_labels[k];
    lw += stage_log_weight(spec, rec, k, prev, z.stages[k]);
  }
  return lw;
}

double assignment_log_weight(const TrialSpec& spec, const TrialRecord& rec, const Assignment& z) {
  std::vector<std::string> prev(rec.num_stages(), "*");
  for (int k = 1; k < rec.num_stages(); ++k)
    if (rec.selection.size() >= static_cast<std::size_t>(k)) prev[k] = rec.selection[k - 1];
  return assignment_log_weight(spec, rec, z, prev);
}

std::vector<std::vector<Arm>> stage_assignment_space(const TrialSpec& spec, const TrialRecord& rec,
                                                     int stage) {
  const Mechanism& mech = spec.stages[stage].mechanism;
  const int n = static_cast<int>(rec.stages[stage].units.size());
  std::vector<std::vector<Arm>> out;

  if (mech.kind == MechanismKind::CompletelyRandomized) {
    for (const auto& counts : distinct_feasible_counts(mech, n, spec.num_arms)) {
      std::vector<Arm> v;
      v.reserve(n);
      for (int arm = 0; arm < static_cast<int>(counts.size()); ++arm)
        v.insert(v.end(), counts[arm], arm);
      // v starts sorted ascending; next_permutation walks lexicographically.
      do {
        out.push_back(v);
      } while (std::next_permutation(v.begin(), v.end()));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  auto arms = bernoulli_unit_arms(rec, mech, stage);
  std::vector<std::size_t> idx(arms.size(), 0);
  for (;;) {
    std::vector<Arm> v(arms.size());
    for (std::size_t i = 0; i < arms.size(); ++i) v[i] = arms[i][idx[i]];
    out.push_back(std::move(v));
    std::size_t i = arms.size();
    while (i > 0) {
      --i;
      if (++idx[i] < arms[i].size()) break;
      idx[i] = 0;
      if (i == 0) return out;
    }
    if (arms.empty()) break;
  }
  return out;
}

std::uint64_t count_assignments(const TrialSpec& spec, const TrialRecord& rec) {
  std::uint64_t total = 1;
  for (int k = 0; k < rec.num_stages(); ++k) total = mul_sat(total, stage_count(spec, rec, k));
  return total;
}

void for_each_assignment(const TrialSpec& spec, const TrialRecord& rec, std::uint64_t cap,
                         const std::function<void(const Assignment&)>& fn) {
  std::uint64_t n = count_assignments(spec, rec);
  if (n > cap)
    throw SpaceTooLarge(n, "assignment space has " +
                               (n == kSaturated ? std::string("more than 2^64-1")
                                                : std::to_string(n)) +
                               " elements, cap is " + std::to_string(cap));
  const int k_stages = rec.num_stages();
  std::vector<std::vector<std::vector<Arm>>> spaces(k_stages);
  for (int k = 0; k < k_stages; ++k) spaces[k] = stage_assignment_space(spec, rec, k);

  Assignment z;
  z.stages.resize(k_stages);
  std::vector<std::size_t> idx(k_stages, 0);
  for (int k = 0; k < k_stages; ++k) {
    if (spaces[k].empty()) return;  // empty product
    z.stages[k] = spaces[k][0];
  }
  for (;;) {
    fn(z);
    int k = k_stages;
    while (k > 0) {
      --k;
      if (++idx[k] < spaces[k].size()) {
        z.stages[k] = spaces[k][idx[k]];
        break;
      }
      idx[k] = 0;
      z.stages[k] = spaces[k][0];
      if (k == 0) return;
    }
    if (k_stages == 0) return;
  }
}

std::vector<Assignment> enumerate_assignments(const TrialSpec& spec, const TrialRecord& rec,
                                              std::uint64_t cap) {
  std::vector<Assignment> out;
  for_each_assignment(spec, rec, cap, [&](const Assignment& z) { out.push_back(z); });
  return out;
}

void draw_stage(const TrialSpec& spec, const TrialRecord& rec, int stage,
                const std::string& prev_label, Rng& rng, std::vector<Arm>& out) {
  const Mechanism& mech = spec.stages[stage].mechanism;
  const auto& st = rec.stages[stage];
  out.resize(st.units.size());

  if (mech.kind == MechanismKind::CompletelyRandomized) {
    const std::vector<int>* counts = mech.counts_for(prev_label);
    if (counts == nullptr)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": no arm counts for label '" +
                      prev_label + "'");
    std::size_t pos = 0;
    for (int arm = 0; arm < static_cast<int>(counts->size()); ++arm)
      for (int j = 0; j < (*counts)[arm]; ++j) out[pos++] = arm;
    if (pos != out.size())
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": arm counts do not sum to stage size");
    rng.shuffle(out);
    return;
  }

  for (std::size_t i = 0; i < st.units.size(); ++i) {
    double p = mech.prob_for(prev_label, rec.units[st.units[i]].group);
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::InfeasibleAssignment,
                  "stage " + std::to_string(stage + 1) + ": no probability for group '" +
                      rec.units[st.units[i]].group + "'");
    out[i] = rng.bernoulli(p) ? 1 : 0;
  }
}

}  // namespace sri
