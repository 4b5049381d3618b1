#pragma once

// Comparison methods: a reservoir exemplar buffer, replay sampling,
// nearest-mean-of-exemplars classification and the Fine-tune / experience
// replay training policies.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "streamcl/embedding_store.hpp"
#include "streamcl/linear_head.hpp"
#include "streamcl/mean_tracker.hpp"
#include "streamcl/random.hpp"

namespace streamcl {

// Fixed-capacity sample of the stream. `capacity` is a global budget across
// all classes. Contents are always a subset of what was offered.
class ExemplarBuffer {
 public:
  ExemplarBuffer(std::size_t capacity, std::uint64_t seed);

  // Standard reservoir step: the first `capacity` records are stored; after
  // that, the s-th record replaces a uniform slot with probability capacity/s.
  void reservoir_update(const EmbeddingRecord& record);
  void reservoir_update(ClassId label, std::span<const float> vector);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::uint64_t total_seen() const { return total_seen_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  nlohmann::json to_json() const;

 private:
  std::size_t capacity_;
  std::uint64_t total_seen_ = 0;
  Rng rng_;
  std::vector<EmbeddingRecord> records_;
};

// `size` records drawn uniformly with replacement.
TrainBatch<float> replay_batch(const ExemplarBuffer& buffer, std::size_t size, Rng& rng);

// Class means over buffered records only.
ClassMeanTable exemplar_means(const ExemplarBuffer& buffer);

// Nearest mean of exemplars. Classes absent from the buffer are never returned.
ClassId nme_predict(const ExemplarBuffer& buffer, std::span<const float> query);

// Fine-tune: one SGD step on the incoming batch. The head is expected to
// have been expanded without freezing, so every row moves.
float finetune_step(LinearHead<float>& head, const TrainBatch<float>& batch, float lr,
                    SoftmaxScope scope);

// Experience replay: the incoming batch is joined with `replay_size` buffered
// records (when the buffer is non-empty), one SGD step is taken, then every
// incoming record is offered to the buffer.
float er_step(LinearHead<float>& head, ExemplarBuffer& buffer, const TrainBatch<float>& batch,
              std::size_t replay_size, Rng& replay_rng, float lr, SoftmaxScope scope);

}  // namespace streamcl
