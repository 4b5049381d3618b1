#pragma once

// Embedding file format, dataset manifests, task schedules and the synthetic
// Gaussian-cluster generator.
//
// File layout (little-endian):
//   "OCLE" | version u32 = 1 | dim u32 | count u64 | count x (label i32, dim x f32)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamcl/error.hpp"

namespace streamcl {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

struct EmbeddingRecord {
  ClassId label = 0;
  std::vector<float> vector;
};

struct EmbeddingHeader {
  std::uint32_t version = kFormatVersion;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;

  std::size_t record_bytes() const { return 4 + 4 * static_cast<std::size_t>(dim); }
};

// Append-only writer. The record count in the header is patched on close().
class EmbeddingWriter {
 public:
  EmbeddingWriter(const std::filesystem::path& path, std::uint32_t dim);
  ~EmbeddingWriter();
  EmbeddingWriter(const EmbeddingWriter&) = delete;
  EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

  void append(ClassId label, std::span<const float> vector);
  void append(const EmbeddingRecord& record) { append(record.label, record.vector); }

  // Fails with "empty dataset" if nothing was appended.
  void close();

  std::uint64_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint32_t dim_;
  std::uint64_t count_ = 0;
  std::vector<char> scratch_;
  bool closed_ = false;
};

void write_embedding_file(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path);

class EmbeddingCursor;

// An opened, header-validated embedding file. Immutable after construction;
// every cursor() owns an independent file handle, so one EmbeddingFile may be
// shared by concurrent readers.
class EmbeddingFile {
 public:
  explicit EmbeddingFile(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  const EmbeddingHeader& header() const { return header_; }
  std::uint32_t dim() const { return header_.dim; }
  std::uint64_t size() const { return header_.count; }

  EmbeddingCursor cursor() const;

 private:
  std::filesystem::path path_;
  EmbeddingHeader header_;
};

// Single-consumer reader. Holds exactly one record's worth of bytes; decoded
// records go into caller-owned storage.
class EmbeddingCursor {
 public:
  // Reads the next record in file order; false at end of file.
  bool next(EmbeddingRecord& out);
  // Seeks to an arbitrary record and decodes it. Does not move the sequential
  // position used by next().
  void read_at(std::uint64_t index, EmbeddingRecord& out);
  void rewind() { position_ = 0; }

  std::uint64_t position() const { return position_; }
  std::uint64_t records_decoded() const { return decoded_; }
  std::size_t buffer_bytes() const { return scratch_.capacity(); }

 private:
  friend class EmbeddingFile;
  EmbeddingCursor(const std::filesystem::path& path, EmbeddingHeader header);
  void decode(std::uint64_t index, EmbeddingRecord& out);

  std::filesystem::path path_;
  EmbeddingHeader header_;
  std::ifstream in_;
  std::vector<char> scratch_;
  std::uint64_t position_ = 0;
  std::uint64_t stream_offset_ = ~std::uint64_t{0};
  std::uint64_t decoded_ = 0;
};

// Lazily produced record sequence over `path`.
EmbeddingCursor read_embedding_stream(const std::filesystem::path& path);

enum class Split : std::uint8_t { train, test };

struct DatasetManifest {
  std::filesystem::path file;  // resolved against the manifest's directory
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t num_records = 0;
  std::vector<Split> split;  // one entry per record, file order
  std::vector<std::string> class_names;
  nlohmann::json extra = nlohmann::json::object();  // passthrough metadata

  // Loads and resolves a manifest. The "split" key is either a per-record
  // array of "train"/"test" or {"train": n, "test": m} per-class counts,
  // in which case the first n records of each class (file order) are train
  // and the next m are test.
  static DatasetManifest load(const std::filesystem::path& manifest_path);

  // Writes the manifest with `file` stored relative to the manifest directory
  // when possible.
  void save(const std::filesystem::path& manifest_path) const;

  // Checks that declared counts match the embedding file exactly; reads the
  // whole file once.
  void validate_against_file() const;

  std::uint64_t count(Split s) const;
};

struct Task {
  std::vector<ClassId> classes;
  std::vector<std::uint64_t> train;  // record indices, seeded order
  std::vector<std::uint64_t> test;   // record indices, file order
};

struct TaskSchedule {
  std::size_t step_size = 0;
  std::vector<ClassId> class_order;  // permutation of all class ids
  std::vector<Task> tasks;
  std::uint64_t class_seed = 0;
  std::uint64_t shuffle_seed = 0;

  std::size_t num_tasks() const { return tasks.size(); }
  std::size_t num_classes() const { return class_order.size(); }
  std::optional<std::size_t> task_of(ClassId c) const;
};

// Builds the schedule from labels already in memory. `labels` and `split`
// are per record in file order.
TaskSchedule build_task_schedule(std::span<const ClassId> labels,
                                 std::span<const Split> split,
                                 std::uint32_t num_classes, std::size_t step_size,
                                 std::uint64_t class_seed, std::uint64_t shuffle_seed);

// Streams the manifest's embedding file once for labels.
TaskSchedule build_task_schedule(const DatasetManifest& manifest, std::size_t step_size,
                                 std::uint64_t class_seed, std::uint64_t shuffle_seed);

struct SyntheticParams {
  std::uint32_t num_classes = 10;
  std::uint32_t dim = 16;
  std::uint32_t per_class_train = 50;
  std::uint32_t per_class_test = 20;
  double cluster_spread = 0.05;
  double mean_scale = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::vector<std::vector<double>> centers;  // generator centers, per class
};

// Writes <out_dir>/<name>.ocle and <out_dir>/<name>.json. Class c's vectors
// are N(center_c, spread^2 I) with center_c a random direction scaled to
// mean_scale. Records are class-major: train records of class 0, its test
// records, then class 1, and so on.
SyntheticDataset generate_synthetic_tasks(const SyntheticParams& params,
                                          const std::filesystem::path& out_dir,
                                          const std::string& name = "synthetic");

}  // namespace streamcl
