#include "streamcl/mean_tracker.hpp"

#include <cmath>
#include <string>

namespace streamcl {

template <class T>
void ClassMeanTable::update_impl(std::span<const T> embedding, ClassId label) {
  if (embedding.empty()) throw Error(ErrorCode::invalid_argument, "empty embedding");
  if (dim_ == 0) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw Error(ErrorCode::invalid_argument,
                "dimension mismatch: embedding has " + std::to_string(embedding.size()) +
                    " components, table dimension is " + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    if (!std::isfinite(embedding[i])) {
      throw Error(ErrorCode::invalid_argument,
                  "non-finite embedding component " + std::to_string(i));
    }
  }
  auto& e = entries_[label];
  if (e.mean.empty()) e.mean.assign(dim_, 0.0);
  const double n = static_cast<double>(e.count);
  const double keep = n / (n + 1.0);
  const double take = 1.0 / (n + 1.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    e.mean[i] = keep * e.mean[i] + take * static_cast<double>(embedding[i]);
  }
  ++e.count;
}

void ClassMeanTable::update(std::span<const float> embedding, ClassId label) {
  update_impl(embedding, label);
}

void ClassMeanTable::update(std::span<const double> embedding, ClassId label) {
  update_impl(embedding, label);
}

const ClassMeanTable::Entry& ClassMeanTable::entry(ClassId label) const {
  const auto it = entries_.find(label);
  if (it == entries_.end()) {
    throw Error(ErrorCode::invalid_argument, "unknown class id " + std::to_string(label));
  }
  return it->second;
}

template <class T>
double ClassMeanTable::squared_distance_impl(ClassId label, std::span<const T> query) const {
  const auto& e = entry(label);
  if (query.size() != dim_) {
    throw Error(ErrorCode::invalid_argument,
                "dimension mismatch: query has " + std::to_string(query.size()) +
                    " components, table dimension is " + std::to_string(dim_));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double d = e.mean[i] - static_cast<double>(query[i]);
    acc += d * d;
  }
  return acc;
}

double ClassMeanTable::squared_distance(ClassId label, std::span<const float> query) const {
  return squared_distance_impl(label, query);
}

double ClassMeanTable::squared_distance(ClassId label, std::span<const double> query) const {
  return squared_distance_impl(label, query);
}

double ClassMeanTable::distance(ClassId label, std::span<const float> query) const {
  return std::sqrt(squared_distance_impl(label, query));
}

double ClassMeanTable::distance(ClassId label, std::span<const double> query) const {
  return std::sqrt(squared_distance_impl(label, query));
}

std::uint64_t ClassMeanTable::count(ClassId label) const {
  const auto it = entries_.find(label);
  return it == entries_.end() ? 0 : it->second.count;
}

std::span<const double> ClassMeanTable::mean(ClassId label) const { return entry(label).mean; }

std::uint64_t ClassMeanTable::total_count() const {
  std::uint64_t total = 0;
  for (const auto& [_, e] : entries_) total += e.count;
  return total;
}

nlohmann::json ClassMeanTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [label, e] : entries_) {
    j[std::to_string(label)] = {{"count", e.count}, {"mean", e.mean}};
  }
  return j;
}

ClassMeanTable ClassMeanTable::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::format, "mean checkpoint must be a JSON object");
  ClassMeanTable t;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const ClassId label = std::stoi(it.key());
      Entry e;
      e.count = it.value().at("count").get<std::uint64_t>();
      e.mean = it.value().at("mean").get<std::vector<double>>();
      if (e.count == 0) {
        throw Error(ErrorCode::format, "class " + it.key() + " has count 0");
      }
      if (t.dim_ == 0) t.dim_ = e.mean.size();
      if (e.mean.size() != t.dim_ || t.dim_ == 0) {
        throw Error(ErrorCode::format, "class " + it.key() + " mean has wrong dimension");
      }
      t.entries_.emplace(label, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("mean checkpoint: ") + e.what());
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::format, "mean checkpoint: class keys must be integers");
  }
  return t;
}

}  // namespace streamcl
