#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sri/rng.hpp"
#include "sri/trial.hpp"

namespace sri {

// Log probability of one stage's treatment vector under its mechanism, with
// the previous stage's selection label resolving label-dependent parameters.
// Throws Error(InfeasibleAssignment) when the vector has probability zero.
double stage_log_weight(const TrialSpec& spec, const TrialRecord& rec, int stage,
                        const std::string& prev_label, const std::vector<Arm>& z_stage);

// Sum of per-stage log probabilities. prev_labels[k] is the selection label
// conditioning stage k's mechanism (entry 0 is ignored; stage 1 has no
// predecessor). Indicator terms for selection/conditioning matches are NOT
// folded in; callers restrict the support themselves.
double assignment_log_weight(const TrialSpec& spec, const TrialRecord& rec, const Assignment& z,
                             const std::vector<std::string>& prev_labels);

// Overload using the record's realized selection labels.
double assignment_log_weight(const TrialSpec& spec, const TrialRecord& rec, const Assignment& z);

// All feasible treatment vectors for one stage, lexicographically sorted.
// For label-dependent mechanisms this is the union over declared labels.
std::vector<std::vector<Arm>> stage_assignment_space(const TrialSpec& spec, const TrialRecord& rec,
                                                     int stage);

// Number of assignments in the full product space, saturating at 2^64-1.
std::uint64_t count_assignments(const TrialSpec& spec, const TrialRecord& rec);

// Visits every assignment in deterministic lexicographic order (stage 1 is
// the most significant position). Throws SpaceTooLarge(count) when the space
// exceeds cap.
void for_each_assignment(const TrialSpec& spec, const TrialRecord& rec, std::uint64_t cap,
                         const std::function<void(const Assignment&)>& fn);

std::vector<Assignment> enumerate_assignments(const TrialSpec& spec, const TrialRecord& rec,
                                              std::uint64_t cap);

// Draws one stage from its mechanism (fresh randomization, not conditional).
void draw_stage(const TrialSpec& spec, const TrialRecord& rec, int stage,
                const std::string& prev_label, Rng& rng, std::vector<Arm>& out);

}  // namespace sri
