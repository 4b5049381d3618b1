#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "streamcl/error.hpp"

namespace streamcl {

// Per-class running means over every embedding seen so far. Storage is
// O(classes x dim) regardless of stream length.
//
// Each update applies v <- n/(n+1) v + 1/(n+1) x, where v starts at zero for
// an unseen class, so the first update stores x exactly. Means are held in
// double even though embeddings arrive as float.
class ClassMeanTable {
 public:
  struct Entry {
    std::uint64_t count = 0;
    std::vector<double> mean;
  };

  ClassMeanTable() = default;
  // dim = 0 leaves the dimension to be fixed by the first update.
  explicit ClassMeanTable(std::size_t dim) : dim_(dim) {}

  void update(std::span<const float> embedding, ClassId label);
  void update(std::span<const double> embedding, ClassId label);

  double distance(ClassId label, std::span<const float> query) const;
  double distance(ClassId label, std::span<const double> query) const;
  double squared_distance(ClassId label, std::span<const float> query) const;
  double squared_distance(ClassId label, std::span<const double> query) const;

  bool contains(ClassId label) const { return entries_.count(label) != 0; }
  std::uint64_t count(ClassId label) const;
  std::span<const double> mean(ClassId label) const;

  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_count() const;
  const std::map<ClassId, Entry>& entries() const { return entries_; }

  // {"<class id>": {"count": n, "mean": [...]}}; doubles round-trip exactly.
  nlohmann::json to_json() const;
  static ClassMeanTable from_json(const nlohmann::json& j);

 private:
  template <class T>
  void update_impl(std::span<const T> embedding, ClassId label);
  template <class T>
  double squared_distance_impl(ClassId label, std::span<const T> query) const;
  const Entry& entry(ClassId label) const;

  std::size_t dim_ = 0;
  std::map<ClassId, Entry> entries_;
};

}  // namespace streamcl
