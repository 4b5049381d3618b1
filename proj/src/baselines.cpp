#include "streamcl/baselines.hpp"

#include "streamcl/classifiers.hpp"

namespace streamcl {

ExemplarBuffer::ExemplarBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  records_.reserve(capacity);
}

void ExemplarBuffer::reservoir_update(ClassId label, std::span<const float> vector) {
  ++total_seen_;
  if (capacity_ == 0) return;
  if (records_.size() < capacity_) {
    records_.push_back({label, std::vector<float>(vector.begin(), vector.end())});
    return;
  }
  const std::uint64_t slot = rng_.below(total_seen_);
  if (slot < capacity_) {
    auto& r = records_[static_cast<std::size_t>(slot)];
    r.label = label;
    r.vector.assign(vector.begin(), vector.end());
  }
}

void ExemplarBuffer::reservoir_update(const EmbeddingRecord& record) {
  reservoir_update(record.label, record.vector);
}

nlohmann::json ExemplarBuffer::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records_) recs.push_back({{"label", r.label}, {"vector", r.vector}});
  return {{"capacity", capacity_}, {"total_seen", total_seen_}, {"records", std::move(recs)}};
}

TrainBatch<float> replay_batch(const ExemplarBuffer& buffer, std::size_t size, Rng& rng) {
  if (buffer.empty()) throw Error(ErrorCode::state, "replay from an empty buffer");
  TrainBatch<float> batch;
  batch.dim = buffer.records().front().vector.size();
  batch.inputs.reserve(size * batch.dim);
  batch.labels.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto& r = buffer.records()[static_cast<std::size_t>(rng.below(buffer.size()))];
    batch.push_back(r.vector, r.label);
  }
  return batch;
}

ClassMeanTable exemplar_means(const ExemplarBuffer& buffer) {
  ClassMeanTable table;
  for (const auto& r : buffer.records()) table.update(std::span<const float>(r.vector), r.label);
  return table;
}

ClassId nme_predict(const ExemplarBuffer& buffer, std::span<const float> query) {
  if (buffer.empty()) throw Error(ErrorCode::state, "nearest-mean-of-exemplars on an empty buffer");
  return full_ncm_predict(exemplar_means(buffer), query);
}

float finetune_step(LinearHead<float>& head, const TrainBatch<float>& batch, float lr,
                    SoftmaxScope scope) {
  return train_step(head, batch, lr, scope);
}

float er_step(LinearHead<float>& head, ExemplarBuffer& buffer, const TrainBatch<float>& batch,
              std::size_t replay_size, Rng& replay_rng, float lr, SoftmaxScope scope) {
  float loss;
  if (!buffer.empty() && replay_size > 0) {
    TrainBatch<float> joined = batch;
    const auto replay = replay_batch(buffer, replay_size, replay_rng);
    joined.inputs.insert(joined.inputs.end(), replay.inputs.begin(), replay.inputs.end());
    joined.labels.insert(joined.labels.end(), replay.labels.begin(), replay.labels.end());
    loss = train_step(head, joined, lr, scope);
  } else {
    loss = train_step(head, batch, lr, scope);
  }
  for (std::size_t i = 0; i < batch.size(); ++i) buffer.reservoir_update(batch.labels[i], batch.row(i));
  return loss;
}

}  // namespace streamcl
