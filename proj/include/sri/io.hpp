#pragma once

#include <string>
#include <vector>

#include "sri/inference.hpp"
#include "sri/trial.hpp"

namespace sri {

// Shortest decimal string that round-trips the value (std::to_chars). Used for
// every number we write so outputs are byte-stable across platforms/threads.
std::string format_double(double v);

// --- Trial specification, JSON ---------------------------------------------
//
// {
//   "num_arms": 2,
//   "stages": [
//     {"mechanism": {"kind": "crd", "counts": {"*": [50, 50]}}},
//     {"mechanism": {"kind": "bernoulli", "probs": {"*": {"*": 0.5}}}, "holdout": true}
//   ],
//   "rule": {"id": "enrichment_delta_threshold", "num_params": {...}, "str_params": {...}},
//   "recruitment": [{"*": {"high": 50, "low": 50}}, {"only_high": {"high": 40}, ...}]
// }
//
// Unknown keys are rejected. Defaults (holdout=false, rule "none", empty
// params, empty recruitment) are omitted when serializing, so
// parse(serialize(spec)) == spec and serialize(parse(text)) is canonical.

TrialSpec parse_trial_spec(const std::string& text);
TrialSpec load_trial_spec(const std::string& path);
std::string serialize_trial_spec(const TrialSpec& spec);

// --- Trial record, CSV ------------------------------------------------------
//
// Header: unit_id,stage,group,treatment,outcome[,<covariate>...]
// One row per unit. stage >= 1 marks the recruiting stage and requires
// treatment (arm index) and outcome; stage 0 lists a known-but-unrecruited
// unit and requires both cells empty. Extra columns are numeric covariates
// (empty cell = absent). Stages must be contiguous 1..K. Errors carry the
// 1-based row (header = 1) and the column name.

TrialRecord parse_trial_record(const std::string& text);
TrialRecord load_trial_record(const std::string& path);
std::string serialize_trial_record(const TrialRecord& rec);

// --- Subsampling pool, CSV --------------------------------------------------
//
// Header: unit_id,group,treatment,outcome — a completed single-stage dataset
// used as the sampling pool for hypothetical two-stage trials.

struct PoolRow {
  std::string id;
  std::string group;
  Arm treatment = 0;
  double outcome = 0.0;
};

std::vector<PoolRow> parse_pool(const std::string& text);
std::vector<PoolRow> load_pool(const std::string& path);
std::string serialize_pool(const std::vector<PoolRow>& rows);

// --- Result serialization ---------------------------------------------------

// {"estimate": ..., "method": "...", "mc_standard_error": ..., "num_samples": ...,
//  "diagnostics": {...}}  (diagnostics only for sampler-based methods)
std::string pvalue_json(const PValueResult& r);

// {"alpha": ..., "intervals": [[lo, hi], ...], "method": "...", ...}
std::string confidence_set_json(const ConfidenceSet& cs, PValueMethod method);

// tau,p,se,method rows; failed grid points are skipped.
std::string p_curve_csv(const ConfidenceSet& cs, PValueMethod method);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace sri
