#include "streamcl/streamcl.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "streamcl/embedding_store.hpp"
#include "streamcl/harness.hpp"
#include "streamcl/mean_tracker.hpp"

struct streamcl_reader {
  streamcl::EmbeddingFile file;
  streamcl::EmbeddingCursor cursor;
  streamcl::EmbeddingRecord record;
};

struct streamcl_mean_table {
  streamcl::ClassMeanTable table;
};

struct streamcl_learner {
  streamcl::OnlineLearner learner;
};

namespace {

thread_local std::string g_last_error;

streamcl_status to_status(streamcl::ErrorCode code) {
  switch (code) {
    case streamcl::ErrorCode::invalid_argument: return STREAMCL_E_INVALID_ARGUMENT;
    case streamcl::ErrorCode::io: return STREAMCL_E_IO;
    case streamcl::ErrorCode::format: return STREAMCL_E_FORMAT;
    case streamcl::ErrorCode::config: return STREAMCL_E_CONFIG;
    case streamcl::ErrorCode::state: return STREAMCL_E_STATE;
  }
  return STREAMCL_E_INTERNAL;
}

streamcl_status fail(streamcl_status status, const char* message) {
  g_last_error = message;
  return status;
}

template <class F>
streamcl_status guarded(F&& body) noexcept {
  try {
    body();
    return STREAMCL_OK;
  } catch (const streamcl::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(STREAMCL_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(STREAMCL_E_INTERNAL, e.what());
  } catch (...) {
    return fail(STREAMCL_E_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw streamcl::Error(streamcl::ErrorCode::invalid_argument, what);
}

streamcl::Method to_method(streamcl_method m) {
  switch (m) {
    case STREAMCL_METHOD_CANDIDATE_NCM: return streamcl::Method::candidate_ncm;
    case STREAMCL_METHOD_FULL_NCM: return streamcl::Method::full_ncm;
    case STREAMCL_METHOD_FINETUNE: return streamcl::Method::finetune;
    case STREAMCL_METHOD_ER: return streamcl::Method::er;
    case STREAMCL_METHOD_NME_BUFFER: return streamcl::Method::nme_buffer;
  }
  throw streamcl::Error(streamcl::ErrorCode::invalid_argument, "unknown method");
}

void write_json(const char* path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw streamcl::Error(streamcl::ErrorCode::io, std::string("cannot write ") + path);
  out << j.dump(1) << '\n';
  if (!out) throw streamcl::Error(streamcl::ErrorCode::io, std::string("write failed on ") + path);
}

}  // namespace

extern "C" {

const char* streamcl_version(void) { return streamcl::kVersion; }

const char* streamcl_last_error(void) { return g_last_error.c_str(); }

const char* streamcl_status_name(streamcl_status status) {
  switch (status) {
    case STREAMCL_OK: return "ok";
    case STREAMCL_E_INVALID_ARGUMENT: return "invalid argument";
    case STREAMCL_E_IO: return "i/o error";
    case STREAMCL_E_FORMAT: return "format error";
    case STREAMCL_E_CONFIG: return "config error";
    case STREAMCL_E_STATE: return "state error";
    case STREAMCL_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

// ---- embedding files

streamcl_status streamcl_write_embeddings(const char* path, uint32_t dim, const int32_t* labels,
                                          const float* vectors, size_t count) {
  return guarded([&] {
    require(path != nullptr, "path is NULL");
    require(count == 0 || (labels && vectors), "labels or vectors is NULL");
    if (count == 0) throw streamcl::Error(streamcl::ErrorCode::invalid_argument, "empty dataset");
    streamcl::EmbeddingWriter writer(path, dim);
    for (size_t i = 0; i < count; ++i) {
      writer.append(labels[i], std::span<const float>(vectors + i * dim, dim));
    }
    writer.close();
  });
}

streamcl_status streamcl_reader_open(const char* path, streamcl_reader** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = nullptr;
    streamcl::EmbeddingFile file(path);
    auto cursor = file.cursor();
    *out = new streamcl_reader{std::move(file), std::move(cursor), {}};
  });
}

void streamcl_reader_close(streamcl_reader* reader) { delete reader; }

uint32_t streamcl_reader_dim(const streamcl_reader* reader) {
  return reader ? reader->file.dim() : 0;
}

uint64_t streamcl_reader_count(const streamcl_reader* reader) {
  return reader ? reader->file.size() : 0;
}

streamcl_status streamcl_reader_next(streamcl_reader* reader, int32_t* label, float* vector,
                                     size_t capacity, int* has_record) {
  return guarded([&] {
    require(reader && label && vector && has_record, "NULL argument");
    require(capacity >= reader->file.dim(), "vector capacity smaller than dimension");
    *has_record = 0;
    if (!reader->cursor.next(reader->record)) return;
    *label = reader->record.label;
    std::copy(reader->record.vector.begin(), reader->record.vector.end(), vector);
    *has_record = 1;
  });
}

streamcl_status streamcl_check_embedding_file(const char* embedding_path,
                                              const char* manifest_path,
                                              streamcl_file_report* report) {
  return guarded([&] {
    require(embedding_path || manifest_path, "no file to check");
    streamcl_file_report r{};
    std::filesystem::path data_path;
    if (manifest_path) {
      const auto m = streamcl::DatasetManifest::load(manifest_path);
      if (embedding_path &&
          std::filesystem::weakly_canonical(embedding_path) !=
              std::filesystem::weakly_canonical(m.file)) {
        throw streamcl::Error(streamcl::ErrorCode::format,
                              "manifest refers to " + m.file.string() + ", not " + embedding_path);
      }
      m.validate_against_file();
      r.num_train = m.count(streamcl::Split::train);
      r.num_test = m.count(streamcl::Split::test);
      data_path = m.file;
    } else {
      data_path = embedding_path;
    }
    streamcl::EmbeddingFile file(data_path);
    auto cur = file.cursor();
    streamcl::EmbeddingRecord rec;
    std::int32_t max_label = 0;
    while (cur.next(rec)) {
      if (rec.label < 0) {
        throw streamcl::Error(streamcl::ErrorCode::format,
                              "record " + std::to_string(cur.position() - 1) +
                                  ": negative label " + std::to_string(rec.label));
      }
      max_label = std::max(max_label, rec.label);
    }
    r.dim = file.dim();
    r.num_records = file.size();
    r.max_label = static_cast<uint32_t>(max_label);
    if (report) *report = r;
  });
}

streamcl_status streamcl_generate_synthetic(const streamcl_synthetic_params* params,
                                            const char* out_dir, const char* name,
                                            char* manifest_path, size_t manifest_path_capacity) {
  return guarded([&] {
    require(params && out_dir, "NULL argument");
    streamcl::SyntheticParams p;
    p.num_classes = params->num_classes;
    p.dim = params->dim;
    p.per_class_train = params->per_class_train;
    p.per_class_test = params->per_class_test;
    p.cluster_spread = params->cluster_spread;
    p.mean_scale = params->mean_scale;
    p.seed = params->seed;
    const auto ds = streamcl::generate_synthetic_tasks(p, out_dir, name ? name : "synthetic");
    if (manifest_path && manifest_path_capacity > 0) {
      const auto s = ds.manifest_path.string();
      require(s.size() < manifest_path_capacity, "manifest path buffer too small");
      std::memcpy(manifest_path, s.c_str(), s.size() + 1);
    }
  });
}

// ---- class mean table

streamcl_status streamcl_mean_table_create(uint32_t dim, streamcl_mean_table** out) {
  return guarded([&] {
    require(out != nullptr, "NULL argument");
    *out = new streamcl_mean_table{streamcl::ClassMeanTable(dim)};
  });
}

void streamcl_mean_table_destroy(streamcl_mean_table* table) { delete table; }

streamcl_status streamcl_mean_table_update(streamcl_mean_table* table, int32_t label,
                                           const float* embedding, size_t dim) {
  return guarded([&] {
    require(table && embedding, "NULL argument");
    table->table.update(std::span<const float>(embedding, dim), label);
  });
}

streamcl_status streamcl_mean_table_distance(const streamcl_mean_table* table, int32_t label,
                                             const float* query, size_t dim, double* distance) {
  return guarded([&] {
    require(table && query && distance, "NULL argument");
    *distance = table->table.distance(label, std::span<const float>(query, dim));
  });
}

uint64_t streamcl_mean_table_count(const streamcl_mean_table* table, int32_t label) {
  return table ? table->table.count(label) : 0;
}

streamcl_status streamcl_mean_table_mean(const streamcl_mean_table* table, int32_t label,
                                         double* mean, size_t dim) {
  return guarded([&] {
    require(table && mean, "NULL argument");
    const auto m = table->table.mean(label);
    require(dim >= m.size(), "mean buffer smaller than dimension");
    std::copy(m.begin(), m.end(), mean);
  });
}

streamcl_status streamcl_mean_table_save(const streamcl_mean_table* table, const char* path) {
  return guarded([&] {
    require(table && path, "NULL argument");
    write_json(path, table->table.to_json());
  });
}

streamcl_status streamcl_mean_table_load(const char* path, streamcl_mean_table** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    std::ifstream in(path);
    if (!in) throw streamcl::Error(streamcl::ErrorCode::io, std::string("cannot open ") + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw streamcl::Error(streamcl::ErrorCode::format, e.what());
    }
    *out = new streamcl_mean_table{streamcl::ClassMeanTable::from_json(j)};
  });
}

// ---- online learner

void streamcl_learner_options_init(streamcl_learner_options* options) {
  if (!options) return;
  *options = streamcl_learner_options{};
  options->method = STREAMCL_METHOD_CANDIDATE_NCM;
  options->learning_rate = 0.1;
  options->use_bias = 1;
}

streamcl_status streamcl_learner_create(uint32_t dim, uint32_t step_size,
                                        const streamcl_learner_options* options,
                                        streamcl_learner** out) {
  return guarded([&] {
    require(out != nullptr, "NULL argument");
    streamcl_learner_options o;
    streamcl_learner_options_init(&o);
    if (options) o = *options;
    streamcl::LearnerOptions lo;
    lo.method = to_method(o.method);
    lo.learning_rate = static_cast<float>(o.learning_rate > 0 ? o.learning_rate : 0.1);
    lo.softmax_scope = o.softmax_scope_task ? streamcl::SoftmaxScope::task
                                            : streamcl::SoftmaxScope::all;
    lo.use_bias = o.use_bias != 0;
    lo.exemplar_budget = o.exemplar_budget;
    lo.replay_batch_size = o.replay_batch_size;
    lo.init_seed = o.init_seed;
    lo.buffer_seed = o.buffer_seed;
    *out = new streamcl_learner{streamcl::OnlineLearner(dim, step_size, lo)};
  });
}

void streamcl_learner_destroy(streamcl_learner* learner) { delete learner; }

streamcl_status streamcl_learner_begin_task(streamcl_learner* learner, const int32_t* classes,
                                            size_t count) {
  return guarded([&] {
    require(learner && classes, "NULL argument");
    learner->learner.begin_task(std::span<const streamcl::ClassId>(classes, count));
  });
}

streamcl_status streamcl_learner_train_batch(streamcl_learner* learner, const float* inputs,
                                             const int32_t* labels, size_t batch, float* loss) {
  return guarded([&] {
    require(learner && inputs && labels, "NULL argument");
    streamcl::TrainBatch<float> b;
    b.dim = learner->learner.dim();
    b.inputs.assign(inputs, inputs + batch * b.dim);
    b.labels.assign(labels, labels + batch);
    const float l = learner->learner.train_batch(b);
    if (loss) *loss = l;
  });
}

streamcl_status streamcl_learner_predict(const streamcl_learner* learner, const float* query,
                                         size_t dim, int32_t* predicted) {
  return guarded([&] {
    require(learner && query && predicted, "NULL argument");
    *predicted = learner->learner.predict(std::span<const float>(query, dim));
  });
}

streamcl_status streamcl_learner_save(const streamcl_learner* learner, const char* path) {
  return guarded([&] {
    require(learner && path, "NULL argument");
    write_json(path, learner->learner.checkpoint());
  });
}

// ---- experiments

streamcl_status streamcl_run_config_file(const char* config_path, const char* out_dir,
                                         streamcl_run_summary* summary) {
  return guarded([&] {
    require(config_path != nullptr, "config path is NULL");
    auto config = streamcl::RunConfig::load(config_path);
    if (out_dir) config.output_dir = out_dir;
    if (config.output_dir.empty()) {
      throw streamcl::Error(streamcl::ErrorCode::config,
                            "no output directory: set \"output_dir\" or pass one explicitly");
    }
    const auto report = streamcl::run_experiment(config);
    streamcl::write_run_outputs(report, config.output_dir);
    if (summary) {
      summary->avg = report.metrics.avg;
      summary->last = report.metrics.last;
      summary->num_steps = static_cast<uint32_t>(report.metrics.per_step.size());
      summary->single_pass_ok = report.manifest.contains("single_pass") &&
                                report.manifest["single_pass"]["ok"].get<bool>();
    }
  });
}

streamcl_status streamcl_run_sweep_file(const char* sweep_path, int parallel, size_t* num_points) {
  return guarded([&] {
    require(sweep_path != nullptr, "sweep path is NULL");
    auto spec = streamcl::SweepSpec::load(sweep_path);
    if (parallel >= 0) spec.parallel = parallel != 0;
    const auto rows = streamcl::run_sweep(spec);
    if (num_points) *num_points = rows.size();
  });
}

}  // extern "C"
