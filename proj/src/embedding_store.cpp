#include "streamcl/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "streamcl/random.hpp"

namespace streamcl {
namespace {

constexpr char kMagic[4] = {'O', 'C', 'L', 'E'};

template <class T>
void store_le(char* dst, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(dst, bytes, sizeof(T));
}

template <class T>
T load_le(const char* src) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string offset_str(std::uint64_t offset) { return std::to_string(offset); }

std::uint64_t record_offset(const EmbeddingHeader& h, std::uint64_t index) {
  return kHeaderBytes + index * h.record_bytes();
}

EmbeddingHeader read_and_check_header(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::io, "cannot stat " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  if (file_size < kHeaderBytes) {
    throw Error(ErrorCode::format, path.string() + ": truncated header (" +
                                       std::to_string(file_size) + " bytes)");
  }
  char buf[kHeaderBytes];
  in.read(buf, kHeaderBytes);
  if (!in) throw Error(ErrorCode::io, "cannot read header of " + path.string());
  if (std::memcmp(buf, kMagic, 4) != 0) {
    throw Error(ErrorCode::format, path.string() + ": bad magic (expected \"OCLE\")");
  }
  EmbeddingHeader h;
  h.version = load_le<std::uint32_t>(buf + 4);
  h.dim = load_le<std::uint32_t>(buf + 8);
  h.count = load_le<std::uint64_t>(buf + 12);
  if (h.version != kFormatVersion) {
    throw Error(ErrorCode::format,
                path.string() + ": unsupported format version " + std::to_string(h.version));
  }
  if (h.dim == 0) throw Error(ErrorCode::format, path.string() + ": dimension is zero");

  const std::uint64_t body = file_size - kHeaderBytes;
  const std::uint64_t rec = h.record_bytes();
  const std::uint64_t complete = body / rec;
  const std::uint64_t partial = body % rec;
  if (complete < h.count) {
    std::string msg = path.string() + ": truncated: expected " + std::to_string(h.count) +
                      " got " + std::to_string(complete);
    if (partial != 0) {
      msg += " (file ends mid-record at byte offset " +
             offset_str(record_offset(h, complete) + partial) + ", record starts at " +
             offset_str(record_offset(h, complete)) + ")";
    }
    throw Error(ErrorCode::format, msg);
  }
  if (complete > h.count || partial != 0) {
    throw Error(ErrorCode::format, path.string() + ": trailing bytes after record " +
                                       std::to_string(h.count) + " at byte offset " +
                                       offset_str(record_offset(h, h.count)));
  }
  return h;
}

Split parse_split(const nlohmann::json& v, std::size_t index) {
  if (v == "train") return Split::train;
  if (v == "test") return Split::test;
  throw Error(ErrorCode::config,
              "manifest split entry " + std::to_string(index) + " must be \"train\" or \"test\"");
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::config, std::string("manifest missing key \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("manifest key \"") + key + "\": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------- writer

EmbeddingWriter::EmbeddingWriter(const std::filesystem::path& path, std::uint32_t dim)
    : path_(path), dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be >= 1");
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  char header[kHeaderBytes];
  std::memcpy(header, kMagic, 4);
  store_le<std::uint32_t>(header + 4, kFormatVersion);
  store_le<std::uint32_t>(header + 8, dim);
  store_le<std::uint64_t>(header + 12, 0);
  out_.write(header, kHeaderBytes);
  scratch_.resize(4 + 4 * static_cast<std::size_t>(dim));
}

EmbeddingWriter::~EmbeddingWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void EmbeddingWriter::append(ClassId label, std::span<const float> vector) {
  if (closed_) throw Error(ErrorCode::state, "writer already closed");
  if (vector.size() != dim_) {
    throw Error(ErrorCode::invalid_argument,
                "dimension mismatch: record " + std::to_string(count_) + " has " +
                    std::to_string(vector.size()) + " components, file dimension is " +
                    std::to_string(dim_));
  }
  for (std::size_t i = 0; i < vector.size(); ++i) {
    if (!std::isfinite(vector[i])) {
      throw Error(ErrorCode::invalid_argument, "record " + std::to_string(count_) +
                                                   ": non-finite component " + std::to_string(i));
    }
  }
  store_le<std::int32_t>(scratch_.data(), label);
  for (std::size_t i = 0; i < vector.size(); ++i) {
    store_le<float>(scratch_.data() + 4 + 4 * i, vector[i]);
  }
  out_.write(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
  if (!out_) throw Error(ErrorCode::io, "write failed on " + path_.string());
  ++count_;
}

void EmbeddingWriter::close() {
  if (closed_) return;
  closed_ = true;
  if (count_ == 0) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(path_, ec);
    throw Error(ErrorCode::invalid_argument, "empty dataset");
  }
  char count[8];
  store_le<std::uint64_t>(count, count_);
  out_.seekp(12);
  out_.write(count, 8);
  out_.close();
  if (!out_) throw Error(ErrorCode::io, "write failed on " + path_.string());
}

void write_embedding_file(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "empty dataset");
  const std::size_t dim = records.front().vector.size();
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be >= 1");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].vector.size() != dim) {
      throw Error(ErrorCode::invalid_argument,
                  "dimension mismatch: record " + std::to_string(i) + " has " +
                      std::to_string(records[i].vector.size()) + " components, record 0 has " +
                      std::to_string(dim));
    }
  }
  EmbeddingWriter writer(path, static_cast<std::uint32_t>(dim));
  for (const auto& r : records) writer.append(r);
  writer.close();
}

// ---------------------------------------------------------------- reader

EmbeddingFile::EmbeddingFile(std::filesystem::path path)
    : path_(std::move(path)), header_(read_and_check_header(path_)) {}

EmbeddingCursor EmbeddingFile::cursor() const { return EmbeddingCursor(path_, header_); }

EmbeddingCursor::EmbeddingCursor(const std::filesystem::path& path, EmbeddingHeader header)
    : path_(path), header_(header), in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorCode::io, "cannot open " + path.string());
  scratch_.resize(header_.record_bytes());
  scratch_.shrink_to_fit();
}

bool EmbeddingCursor::next(EmbeddingRecord& out) {
  if (position_ >= header_.count) return false;
  decode(position_, out);
  ++position_;
  return true;
}

void EmbeddingCursor::read_at(std::uint64_t index, EmbeddingRecord& out) {
  if (index >= header_.count) {
    throw Error(ErrorCode::invalid_argument, "record index " + std::to_string(index) +
                                                 " out of range (" +
                                                 std::to_string(header_.count) + " records)");
  }
  decode(index, out);
}

void EmbeddingCursor::decode(std::uint64_t index, EmbeddingRecord& out) {
  const std::uint64_t offset = record_offset(header_, index);
  // Sequential reads skip the seek so the stream's own buffer stays valid.
  if (offset != stream_offset_) {
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
  }
  in_.read(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
  stream_offset_ = in_ ? offset + scratch_.size() : ~std::uint64_t{0};
  if (!in_) {
    throw Error(ErrorCode::format, path_.string() + ": truncated record " +
                                       std::to_string(index) + " at byte offset " +
                                       offset_str(offset));
  }
  out.label = load_le<std::int32_t>(scratch_.data());
  out.vector.resize(header_.dim);
  for (std::size_t i = 0; i < header_.dim; ++i) {
    const float v = load_le<float>(scratch_.data() + 4 + 4 * i);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::format, path_.string() + ": record " + std::to_string(index) +
                                         " at byte offset " + offset_str(offset) +
                                         ": non-finite component " + std::to_string(i));
    }
    out.vector[i] = v;
  }
  ++decoded_;
}

EmbeddingCursor read_embedding_stream(const std::filesystem::path& path) {
  return EmbeddingFile(path).cursor();
}

// ---------------------------------------------------------------- manifest

DatasetManifest DatasetManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::config, manifest_path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::config, manifest_path.string() + ": not a JSON object");

  DatasetManifest m;
  const auto file = required<std::string>(j, "file");
  m.file = std::filesystem::path(file).is_absolute()
               ? std::filesystem::path(file)
               : manifest_path.parent_path() / file;
  m.dim = required<std::uint32_t>(j, "dim");
  m.num_classes = required<std::uint32_t>(j, "num_classes");
  m.num_records = required<std::uint64_t>(j, "num_records");
  if (m.dim == 0) throw Error(ErrorCode::config, "manifest dim must be >= 1");
  if (m.num_classes == 0) throw Error(ErrorCode::config, "manifest num_classes must be >= 1");
  if (j.contains("class_names")) {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (m.class_names.size() != m.num_classes) {
      throw Error(ErrorCode::config, "manifest class_names has " +
                                         std::to_string(m.class_names.size()) +
                                         " entries, num_classes is " +
                                         std::to_string(m.num_classes));
    }
  }
  if (!j.contains("split")) throw Error(ErrorCode::config, "manifest missing key \"split\"");
  const auto& split = j.at("split");
  if (split.is_array()) {
    if (split.size() != m.num_records) {
      throw Error(ErrorCode::config, "manifest split has " + std::to_string(split.size()) +
                                         " entries, num_records is " +
                                         std::to_string(m.num_records));
    }
    m.split.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) m.split.push_back(parse_split(split[i], i));
  } else if (split.is_object()) {
    const auto n_train = required<std::uint64_t>(split, "train");
    const auto n_test = required<std::uint64_t>(split, "test");
    EmbeddingFile f(m.file);
    if (f.size() != m.num_records) {
      throw Error(ErrorCode::config, "manifest declares " + std::to_string(m.num_records) +
                                         " records, file holds " + std::to_string(f.size()));
    }
    std::vector<std::uint64_t> seen(m.num_classes, 0);
    auto cur = f.cursor();
    EmbeddingRecord r;
    m.split.reserve(m.num_records);
    while (cur.next(r)) {
      if (r.label < 0 || static_cast<std::uint32_t>(r.label) >= m.num_classes) {
        throw Error(ErrorCode::format, "record " + std::to_string(cur.position() - 1) +
                                           ": label " + std::to_string(r.label) +
                                           " out of range");
      }
      const auto k = seen[static_cast<std::size_t>(r.label)]++;
      m.split.push_back(k < n_train ? Split::train : Split::test);
    }
    for (std::uint32_t c = 0; c < m.num_classes; ++c) {
      if (seen[c] != n_train + n_test) {
        throw Error(ErrorCode::config, "class " + std::to_string(c) + " has " +
                                           std::to_string(seen[c]) + " records, split declares " +
                                           std::to_string(n_train + n_test));
      }
    }
  } else {
    throw Error(ErrorCode::config, "manifest split must be an array or an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"file", "dim", "num_classes", "num_records", "split", "class_names"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) == std::end(known)) {
      m.extra[it.key()] = it.value();
    }
  }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& manifest_path) const {
  nlohmann::json j = extra;
  std::filesystem::path rel = file;
  const auto base = manifest_path.parent_path();
  if (file.parent_path() == base) {
    rel = file.filename();
  } else {
    std::error_code ec;
    auto r = std::filesystem::relative(file, base.empty() ? "." : base, ec);
    if (!ec && !r.empty()) rel = r;
  }
  j["file"] = rel.generic_string();
  j["dim"] = dim;
  j["num_classes"] = num_classes;
  j["num_records"] = num_records;
  auto& s = j["split"] = nlohmann::json::array();
  for (auto v : split) s.push_back(v == Split::train ? "train" : "test");
  if (!class_names.empty()) j["class_names"] = class_names;
  std::ofstream out(manifest_path);
  if (!out) throw Error(ErrorCode::io, "cannot write manifest " + manifest_path.string());
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed on " + manifest_path.string());
}

void DatasetManifest::validate_against_file() const {
  EmbeddingFile f(file);
  if (f.dim() != dim) {
    throw Error(ErrorCode::format, "manifest dim " + std::to_string(dim) + " but file dim " +
                                       std::to_string(f.dim()));
  }
  if (f.size() != num_records) {
    throw Error(ErrorCode::format, "manifest declares " + std::to_string(num_records) +
                                       " records, file holds " + std::to_string(f.size()));
  }
  if (split.size() != num_records) {
    throw Error(ErrorCode::format, "manifest split length " + std::to_string(split.size()) +
                                       " differs from num_records " +
                                       std::to_string(num_records));
  }
  auto cur = f.cursor();
  EmbeddingRecord r;
  while (cur.next(r)) {
    if (r.label < 0 || static_cast<std::uint32_t>(r.label) >= num_classes) {
      throw Error(ErrorCode::format, "record " + std::to_string(cur.position() - 1) +
                                         ": label " + std::to_string(r.label) +
                                         " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

std::uint64_t DatasetManifest::count(Split s) const {
  return static_cast<std::uint64_t>(std::count(split.begin(), split.end(), s));
}

// ---------------------------------------------------------------- schedule

std::optional<std::size_t> TaskSchedule::task_of(ClassId c) const {
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& cls = tasks[t].classes;
    if (std::find(cls.begin(), cls.end(), c) != cls.end()) return t;
  }
  return std::nullopt;
}

TaskSchedule build_task_schedule(std::span<const ClassId> labels, std::span<const Split> split,
                                 std::uint32_t num_classes, std::size_t step_size,
                                 std::uint64_t class_seed, std::uint64_t shuffle_seed) {
  if (step_size == 0) throw Error(ErrorCode::invalid_argument, "step size must be >= 1");
  if (num_classes == 0) throw Error(ErrorCode::invalid_argument, "class count must be >= 1");
  if (num_classes % step_size != 0) {
    throw Error(ErrorCode::invalid_argument,
                "class count not divisible by step size: " + std::to_string(num_classes) +
                    " not divisible by " + std::to_string(step_size));
  }
  if (labels.size() != split.size()) {
    throw Error(ErrorCode::invalid_argument, "labels and split lengths differ");
  }

  TaskSchedule s;
  s.step_size = step_size;
  s.class_seed = class_seed;
  s.shuffle_seed = shuffle_seed;
  s.class_order.resize(num_classes);
  std::iota(s.class_order.begin(), s.class_order.end(), 0);
  Rng class_rng(class_seed);
  class_rng.shuffle(s.class_order);

  const std::size_t n_tasks = num_classes / step_size;
  s.tasks.resize(n_tasks);
  std::vector<std::size_t> task_of_class(num_classes);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    auto& task = s.tasks[t];
    task.classes.assign(s.class_order.begin() + static_cast<std::ptrdiff_t>(t * step_size),
                        s.class_order.begin() + static_cast<std::ptrdiff_t>((t + 1) * step_size));
    for (auto c : task.classes) task_of_class[static_cast<std::size_t>(c)] = t;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = labels[i];
    if (c < 0 || static_cast<std::uint32_t>(c) >= num_classes) {
      throw Error(ErrorCode::format, "record " + std::to_string(i) + ": label " +
                                         std::to_string(c) + " outside [0, " +
                                         std::to_string(num_classes) + ")");
    }
    auto& task = s.tasks[task_of_class[static_cast<std::size_t>(c)]];
    (split[i] == Split::train ? task.train : task.test).push_back(i);
  }
  Rng shuffle_rng(shuffle_seed);
  for (auto& task : s.tasks) shuffle_rng.shuffle(task.train);
  return s;
}

TaskSchedule build_task_schedule(const DatasetManifest& manifest, std::size_t step_size,
                                 std::uint64_t class_seed, std::uint64_t shuffle_seed) {
  EmbeddingFile f(manifest.file);
  if (f.size() != manifest.num_records || manifest.split.size() != manifest.num_records) {
    throw Error(ErrorCode::format, "manifest record count disagrees with " + f.path().string());
  }
  std::vector<ClassId> labels;
  labels.reserve(f.size());
  auto cur = f.cursor();
  EmbeddingRecord r;
  while (cur.next(r)) labels.push_back(r.label);
  return build_task_schedule(labels, manifest.split, manifest.num_classes, step_size,
                             class_seed, shuffle_seed);
}

// ---------------------------------------------------------------- synthetic

SyntheticDataset generate_synthetic_tasks(const SyntheticParams& p,
                                          const std::filesystem::path& out_dir,
                                          const std::string& name) {
  if (p.num_classes == 0 || p.dim == 0 || p.per_class_train == 0 || p.per_class_test == 0) {
    throw Error(ErrorCode::invalid_argument, "synthetic counts must all be positive");
  }
  if (!(p.cluster_spread >= 0.0) || !std::isfinite(p.cluster_spread)) {
    throw Error(ErrorCode::invalid_argument, "cluster spread must be finite and non-negative");
  }
  if (!(p.mean_scale > 0.0) || !std::isfinite(p.mean_scale)) {
    throw Error(ErrorCode::invalid_argument, "mean scale must be finite and positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + out_dir.string() + ": " + ec.message());

  SyntheticDataset ds;
  Rng rng(p.seed);
  ds.centers.resize(p.num_classes);
  for (auto& center : ds.centers) {
    center.resize(p.dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : center) {
        v = rng.normal();
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double scale = p.mean_scale / std::sqrt(norm2);
    for (auto& v : center) v *= scale;
  }

  ds.manifest_path = out_dir / (name + ".json");
  auto& m = ds.manifest;
  m.file = out_dir / (name + ".ocle");
  m.dim = p.dim;
  m.num_classes = p.num_classes;
  EmbeddingWriter writer(m.file, p.dim);
  std::vector<float> v(p.dim);
  for (std::uint32_t c = 0; c < p.num_classes; ++c) {
    const auto& center = ds.centers[c];
    for (std::uint32_t k = 0; k < p.per_class_train + p.per_class_test; ++k) {
      for (std::size_t i = 0; i < p.dim; ++i) {
        v[i] = static_cast<float>(center[i] + p.cluster_spread * rng.normal());
      }
      writer.append(static_cast<ClassId>(c), v);
      m.split.push_back(k < p.per_class_train ? Split::train : Split::test);
    }
  }
  writer.close();
  m.num_records = writer.count();
  m.extra["generator"] = {
      {"kind", "gaussian_clusters"},
      {"num_classes", p.num_classes},
      {"dim", p.dim},
      {"per_class_train", p.per_class_train},
      {"per_class_test", p.per_class_test},
      {"cluster_spread", p.cluster_spread},
      {"mean_scale", p.mean_scale},
      {"seed", p.seed},
  };
  m.save(ds.manifest_path);
  return ds;
}

}  // namespace streamcl
