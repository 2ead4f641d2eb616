#include "sri/trial.hpp"

#include <cmath>
#include <set>

#include "sri/error.hpp"

namespace sri {

Assignment observed_assignment(const TrialRecord& rec) {
  Assignment z;
  z.stages.reserve(rec.stages.size());
  for (const auto& st : rec.stages) z.stages.push_back(st.treatments);
  return z;
}

double squared_jump_distance(const Assignment& a, const Assignment& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.stages.size(); ++k) {
    const auto& x = a.stages[k];
    const auto& y = b.stages[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double diff = static_cast<double>(x[i] - y[i]);
      d += diff * diff;
    }
  }
  return d;
}

const std::vector<int>* Mechanism::counts_for(const std::string& label) const {
  auto it = counts.find(label);
  if (it != counts.end()) return &it->second;
  it = counts.find("*");
  if (it != counts.end()) return &it->second;
  return nullptr;
}

double Mechanism::prob_for(const std::string& label, const std::string& group) const {
  auto it = probs.find(label);
  if (it == probs.end()) it = probs.find("*");
  if (it == probs.end()) return -1.0;
  auto jt = it->second.find(group);
  if (jt == it->second.end()) jt = it->second.find("*");
  if (jt == it->second.end()) return -1.0;
  return jt->second;
}

bool Mechanism::label_invariant() const {
  if (kind == MechanismKind::CompletelyRandomized) {
    if (counts.size() <= 1) return true;
    const auto& first = counts.begin()->second;
    for (const auto& [_, c] : counts)
      if (c != first) return false;
    return true;
  }
  if (probs.size() <= 1) return true;
  const auto& first = probs.begin()->second;
  for (const auto& [_, p] : probs)
    if (p != first) return false;
  return true;
}

namespace {

void push(std::vector<ValidationIssue>& out, std::string code, std::string msg) {
  out.push_back({std::move(code), std::move(msg)});
}

}  // namespace

std::vector<ValidationIssue> validate_record(const TrialSpec& spec, const TrialRecord& rec) {
  std::vector<ValidationIssue> out;
  const int k_stages = spec.num_stages();
  if (rec.num_stages() != k_stages) {
    push(out, "stage_count",
         "record has " + std::to_string(rec.num_stages()) + " stages, spec declares " +
             std::to_string(k_stages));
    return out;  // shapes disagree; further checks would misindex
  }

  std::set<int> seen_units;
  for (int k = 0; k < k_stages; ++k) {
    const auto& st = rec.stages[k];
    const std::string where = "stage " + std::to_string(k + 1);
    if (st.units.size() != st.treatments.size() || st.units.size() != st.outcomes.size())
      push(out, "stage_shape", where + ": units/treatments/outcomes lengths differ");
    for (int u : st.units) {
      if (u < 0 || u >= static_cast<int>(rec.units.size()))
        push(out, "unit_range", where + ": unit index " + std::to_string(u) + " out of range");
      else if (!seen_units.insert(u).second)
        push(out, "recruitment_overlap",
             where + ": unit " + rec.units[u].id + " recruited more than once");
    }
    for (Arm a : st.treatments)
      if (a < 0 || a >= spec.num_arms)
        push(out, "arm_range", where + ": treatment " + std::to_string(a) + " out of range");
    for (double y : st.outcomes)
      if (!std::isfinite(y)) push(out, "outcome_not_finite", where + ": non-finite outcome");

    // Mechanism feasibility of the observed treatments, under the realized
    // previous-stage label where one is recorded. Without labels a
    // label-dependent lookup cannot be resolved; those checks are skipped, not
    // failed (callers that fill the selection re-validate with labels).
    const bool has_label = k == 0 || rec.selection.size() >= static_cast<std::size_t>(k);
    const std::string prev = (has_label && k > 0) ? rec.selection[k - 1] : "*";
    const Mechanism& mech = spec.stages[k].mechanism;
    if (mech.kind == MechanismKind::CompletelyRandomized) {
      const std::vector<int>* counts = mech.counts_for(prev);
      if (counts == nullptr) {
        if (has_label)
          push(out, "mechanism_label", where + ": no arm counts declared for label '" + prev + "'");
      } else {
        std::vector<int> realized(spec.num_arms, 0);
        for (Arm a : st.treatments)
          if (a >= 0 && a < spec.num_arms) realized[a]++;
        std::vector<int> declared = *counts;
        declared.resize(spec.num_arms, 0);
        if (realized != declared)
          push(out, "mechanism_counts", where + ": observed arm counts differ from declared");
      }
    } else {
      for (std::size_t i = 0; i < st.units.size(); ++i) {
        int u = st.units[i];
        if (u < 0 || u >= static_cast<int>(rec.units.size())) continue;
        double p = mech.prob_for(prev, rec.units[u].group);
        if (p < 0.0 || p > 1.0) {
          if (has_label)
            push(out, "mechanism_prob",
                 where + ": no valid probability for group '" + rec.units[u].group + "'");
        } else if ((p == 0.0 && st.treatments[i] == 1) || (p == 1.0 && st.treatments[i] == 0)) {
          push(out, "mechanism_prob", where + ": observed arm has probability zero");
        }
      }
    }

    // Recruitment plan sizes, when a plan is declared for this stage.
    if (static_cast<std::size_t>(k) < spec.recruitment.size() && !spec.recruitment[k].empty()) {
      const auto& plan = spec.recruitment[k];
      std::string label = (k == 0) ? "*" : prev;
      auto it = plan.find(label);
      if (it == plan.end()) it = plan.find("*");
      if (it == plan.end()) {
        if (has_label)
          push(out, "recruitment_label",
               where + ": no recruitment sizes for label '" + label + "'");
      } else {
        std::map<std::string, int> realized;
        for (int u : st.units)
          if (u >= 0 && u < static_cast<int>(rec.units.size())) realized[rec.units[u].group]++;
        if (realized != it->second)
          push(out, "recruitment_sizes", where + ": recruited group sizes differ from plan");
      }
    }
  }

  if (!rec.selection.empty() && rec.selection.size() != static_cast<std::size_t>(k_stages))
    push(out, "selection_length", "selection labels must cover every stage");

  if (rec.has_potential()) {
    if (rec.potential_arms != spec.num_arms ||
        rec.potential.size() != rec.units.size() * static_cast<std::size_t>(spec.num_arms)) {
      push(out, "potential_shape", "potential-outcome table has wrong shape");
    } else {
      for (const auto& st : rec.stages) {
        for (std::size_t i = 0; i < st.units.size(); ++i) {
          int u = st.units[i];
          Arm a = st.treatments[i];
          if (u < 0 || u >= static_cast<int>(rec.units.size()) || a < 0 || a >= spec.num_arms)
            continue;
          double expect = rec.potential[static_cast<std::size_t>(u) * spec.num_arms + a];
          if (expect != st.outcomes[i]) {
            push(out, "potential_mismatch",
                 "observed outcome of unit " + rec.units[u].id +
                     " differs from its potential outcome");
          }
        }
      }
    }
  }
  return out;
}

}  // namespace sri
