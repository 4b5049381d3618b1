#pragma once

// Inference rules. All ties resolve toward the lowest class id; distances
// are ranked by squared Euclidean norm.

#include <span>
#include <vector>

#include "streamcl/embedding_store.hpp"
#include "streamcl/error.hpp"
#include "streamcl/mean_tracker.hpp"

namespace streamcl {

// One class id per learned task, in task order.
using CandidateSet = std::vector<ClassId>;

// logits[r] scores row_classes[r]; rows come in consecutive blocks of
// step_size, one block per task. Returns the per-block argmax class.
template <class Real>
CandidateSet select_candidates(std::span<const Real> logits, std::span<const ClassId> row_classes,
                               std::size_t step_size);

// Same, with rows laid out in the schedule's class order.
template <class Real>
CandidateSet select_candidates(std::span<const Real> logits, const TaskSchedule& schedule);

// Nearest class mean among the candidates.
template <class Q>
ClassId ncm_predict(const ClassMeanTable& table, std::span<const ClassId> candidates,
                    std::span<const Q> query);

// Nearest class mean among every class in the table.
template <class Q>
ClassId full_ncm_predict(const ClassMeanTable& table, std::span<const Q> query);

// Index of the largest logit.
template <class Real>
ClassId argmax_predict(std::span<const Real> logits);

// Class of the largest logit, rows mapped through row_classes.
template <class Real>
ClassId argmax_predict(std::span<const Real> logits, std::span<const ClassId> row_classes);

}  // namespace streamcl
