#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sri {

using Arm = int;

struct Unit {
  std::string id;
  std::string group;
  std::map<std::string, double> covariates;  // extra numeric columns from ingest
};

// One stage of a trial: who was recruited (indices into TrialRecord::units),
// the treatments they received and the outcomes that were observed. The three
// vectors are parallel.
struct StageData {
  std::vector<int> units;
  std::vector<Arm> treatments;
  std::vector<double> outcomes;
};

struct TrialRecord {
  std::vector<Unit> units;
  std::vector<StageData> stages;
  // Realized selection labels S_1..S_K (one per stage).
  std::vector<std::string> selection;
  // Simulation mode only: full potential-outcome table, unit-major
  // [unit * num_arms + arm]. Empty when unavailable.
  std::vector<double> potential;
  int potential_arms = 0;

  bool has_potential() const { return !potential.empty(); }
  int num_stages() const { return static_cast<int>(stages.size()); }
};

// A candidate treatment vector for every stage, same shape as the record's
// per-stage treatment vectors.
struct Assignment {
  std::vector<std::vector<Arm>> stages;

  bool operator==(const Assignment& o) const { return stages == o.stages; }
  std::size_t total_entries() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.size();
    return n;
  }
};

Assignment observed_assignment(const TrialRecord& rec);

// Squared Euclidean distance between assignments (equals Hamming distance for
// binary treatments).
double squared_jump_distance(const Assignment& a, const Assignment& b);

enum class MechanismKind { CompletelyRandomized, Bernoulli };

// Per-stage randomization mechanism. Parameters may depend on the previous
// stage's selection label; the key "*" is the any-label default.
struct Mechanism {
  MechanismKind kind = MechanismKind::CompletelyRandomized;
  // CompletelyRandomized: label -> number of units per arm (sums to |R_k|).
  std::map<std::string, std::vector<int>> counts;
  // Bernoulli: label -> (group -> probability of arm 1); group "*" = default.
  std::map<std::string, std::map<std::string, double>> probs;

  const std::vector<int>* counts_for(const std::string& label) const;
  // Negative when no probability is declared for the label/group.
  double prob_for(const std::string& label, const std::string& group) const;
  // True when parameters are identical across declared labels.
  bool label_invariant() const;
};

struct SelectionRuleSpec {
  std::string id = "none";
  std::map<std::string, double> num_params;
  std::map<std::string, std::string> str_params;

  double num(const std::string& key, double fallback) const {
    auto it = num_params.find(key);
    return it == num_params.end() ? fallback : it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = str_params.find(key);
    return it == str_params.end() ? fallback : it->second;
  }
};

struct StageSpec {
  Mechanism mechanism;
  // When true this stage's data never enters the selection rule (its label
  // repeats the last non-hold-out value).
  bool holdout = false;
};

struct TrialSpec {
  int num_arms = 2;
  std::vector<StageSpec> stages;
  SelectionRuleSpec rule;
  // Optional recruitment plan per stage: label of S_{k-1} -> group -> size.
  // Stage 1 uses the "*" label. Used by generators and validation.
  std::vector<std::map<std::string, std::map<std::string, int>>> recruitment;

  int num_stages() const { return static_cast<int>(stages.size()); }
};

struct ValidationIssue {
  std::string code;
  std::string message;
};

// Structural validation of a record against its spec: stage shapes, disjoint
// recruitment, arm ranges, finite outcomes, mechanism feasibility of the
// observed treatments, recruitment plan sizes, potential-outcome consistency.
// Label-dependent lookups (per-label mechanisms, recruitment plans) are only
// checked when rec.selection carries labels; fill it first for the full
// check. Selection-label consistency needs the rule machinery and lives in
// selection.hpp (validate_selection_consistency).
std::vector<ValidationIssue> validate_record(const TrialSpec& spec, const TrialRecord& rec);

// Selection and conditioning values. Logic lives in selection.hpp; the plain
// types sit here next to the record they describe.
using SelectionValue = std::vector<std::string>;  // one label per stage

// Flattened stage-major entry vector; kFreeEntry marks entries the
// conditioning statistic leaves free, every other value freezes that arm.
using ConditioningValue = std::vector<int>;
inline constexpr int kFreeEntry = -1;

enum class SampleSource { Observed, Rejection, Rwm, Enumeration };

struct AssignmentSample {
  Assignment z;
  SelectionValue s;
  ConditioningValue g;
  double log_weight = 0.0;
  SampleSource source = SampleSource::Observed;
};

}  // namespace sri
