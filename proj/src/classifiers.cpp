#include "streamcl/classifiers.hpp"

#include <string>

namespace streamcl {
namespace {

// True when (value, id) ranks strictly ahead of (best, best_id) for a max search.
template <class Real>
bool beats_max(Real value, ClassId id, Real best, ClassId best_id) {
  return value > best || (value == best && id < best_id);
}

bool beats_min(double value, ClassId id, double best, ClassId best_id) {
  return value < best || (value == best && id < best_id);
}

}  // namespace

template <class Real>
CandidateSet select_candidates(std::span<const Real> logits, std::span<const ClassId> row_classes,
                               std::size_t step_size) {
  if (step_size == 0) throw Error(ErrorCode::invalid_argument, "step size must be >= 1");
  if (logits.size() > row_classes.size()) {
    throw Error(ErrorCode::invalid_argument, "more logits than known classes");
  }
  if (logits.empty() || logits.size() % step_size != 0) {
    throw Error(ErrorCode::invalid_argument,
                "length mismatch: " + std::to_string(logits.size()) +
                    " logits is not a positive multiple of step size " +
                    std::to_string(step_size));
  }
  CandidateSet out;
  out.reserve(logits.size() / step_size);
  for (std::size_t lo = 0; lo < logits.size(); lo += step_size) {
    std::size_t best = lo;
    for (std::size_t r = lo + 1; r < lo + step_size; ++r) {
      if (beats_max(logits[r], row_classes[r], logits[best], row_classes[best])) best = r;
    }
    out.push_back(row_classes[best]);
  }
  return out;
}

template <class Real>
CandidateSet select_candidates(std::span<const Real> logits, const TaskSchedule& schedule) {
  return select_candidates(logits, std::span<const ClassId>(schedule.class_order),
                           schedule.step_size);
}

template <class Q>
ClassId ncm_predict(const ClassMeanTable& table, std::span<const ClassId> candidates,
                    std::span<const Q> query) {
  if (candidates.empty()) throw Error(ErrorCode::invalid_argument, "empty candidate set");
  ClassId best_id = 0;
  double best = 0.0;
  bool first = true;
  for (auto c : candidates) {
    if (!table.contains(c)) {
      throw Error(ErrorCode::state, "candidate class " + std::to_string(c) +
                                        " has no class mean (no training samples seen)");
    }
    const double d = table.squared_distance(c, query);
    if (first || beats_min(d, c, best, best_id)) {
      best = d;
      best_id = c;
      first = false;
    }
  }
  return best_id;
}

template <class Q>
ClassId full_ncm_predict(const ClassMeanTable& table, std::span<const Q> query) {
  if (table.empty()) throw Error(ErrorCode::state, "empty class mean table");
  ClassId best_id = 0;
  double best = 0.0;
  bool first = true;
  for (const auto& [c, _] : table.entries()) {
    const double d = table.squared_distance(c, query);
    if (first || beats_min(d, c, best, best_id)) {
      best = d;
      best_id = c;
      first = false;
    }
  }
  return best_id;
}

template <class Real>
ClassId argmax_predict(std::span<const Real> logits) {
  if (logits.empty()) throw Error(ErrorCode::invalid_argument, "empty logit vector");
  std::size_t best = 0;
  for (std::size_t r = 1; r < logits.size(); ++r) {
    if (logits[r] > logits[best]) best = r;
  }
  return static_cast<ClassId>(best);
}

template <class Real>
ClassId argmax_predict(std::span<const Real> logits, std::span<const ClassId> row_classes) {
  if (logits.empty()) throw Error(ErrorCode::invalid_argument, "empty logit vector");
  if (logits.size() > row_classes.size()) {
    throw Error(ErrorCode::invalid_argument, "more logits than known classes");
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < logits.size(); ++r) {
    if (beats_max(logits[r], row_classes[r], logits[best], row_classes[best])) best = r;
  }
  return row_classes[best];
}

template CandidateSet select_candidates(std::span<const float>, std::span<const ClassId>,
                                        std::size_t);
template CandidateSet select_candidates(std::span<const double>, std::span<const ClassId>,
                                        std::size_t);
template CandidateSet select_candidates(std::span<const float>, const TaskSchedule&);
template CandidateSet select_candidates(std::span<const double>, const TaskSchedule&);
template ClassId ncm_predict(const ClassMeanTable&, std::span<const ClassId>,
                             std::span<const float>);
template ClassId ncm_predict(const ClassMeanTable&, std::span<const ClassId>,
                             std::span<const double>);
template ClassId full_ncm_predict(const ClassMeanTable&, std::span<const float>);
template ClassId full_ncm_predict(const ClassMeanTable&, std::span<const double>);
template ClassId argmax_predict(std::span<const float>);
template ClassId argmax_predict(std::span<const double>);
template ClassId argmax_predict(std::span<const float>, std::span<const ClassId>);
template ClassId argmax_predict(std::span<const double>, std::span<const ClassId>);

}  // namespace streamcl
