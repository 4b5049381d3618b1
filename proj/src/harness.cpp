#include "streamcl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "streamcl/classifiers.hpp"

namespace streamcl {
namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::candidate_ncm, "candidate_ncm"}, {Method::full_ncm, "full_ncm"},
    {Method::finetune, "finetune"},           {Method::er, "er"},
    {Method::nme_buffer, "nme_buffer"},       {Method::upper_bound, "upper_bound"},
};

bool freezes_old_rows(Method m) { return m == Method::candidate_ncm || m == Method::full_ncm; }
bool uses_buffer(Method m) { return m == Method::er || m == Method::nme_buffer; }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed on " + path.string());
}

}  // namespace

Method parse_method(std::string_view s) {
  for (const auto& [m, name] : kMethodNames) {
    if (name == s) return m;
  }
  throw Error(ErrorCode::config, "unknown method \"" + std::string(s) + "\"");
}

std::string_view to_string(Method m) {
  for (const auto& [mm, name] : kMethodNames) {
    if (mm == m) return name;
  }
  return "?";
}

bool is_exemplar_free(Method m) { return m == Method::candidate_ncm || m == Method::full_ncm; }

// ------------------------------------------------------------------ config

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::config, "run config must be a JSON object");
  static const std::set<std::string> known = {
      "dataset",    "method", "step_size",          "learning_rate", "batch_size",
      "epochs",     "exemplar_budget",              "replay_batch_size",
      "upper_bound_epochs", "seeds",  "softmax_scope", "bias", "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw Error(ErrorCode::config, "unknown run config key \"" + it.key() + "\"");
    }
  }
  RunConfig c;
  try {
    if (!j.contains("dataset")) throw Error(ErrorCode::config, "run config missing \"dataset\"");
    c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    c.step_size = j.value("step_size", c.step_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.exemplar_budget = j.value("exemplar_budget", c.exemplar_budget);
    c.replay_batch_size = j.value("replay_batch_size", c.replay_batch_size);
    c.upper_bound_epochs = j.value("upper_bound_epochs", c.upper_bound_epochs);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      for (auto it = s.begin(); it != s.end(); ++it) {
        if (it.key() != "class_seed" && it.key() != "shuffle_seed" && it.key() != "init_seed" &&
            it.key() != "buffer_seed") {
          throw Error(ErrorCode::config, "unknown seed \"" + it.key() + "\"");
        }
      }
      c.seeds.class_seed = s.value("class_seed", c.seeds.class_seed);
      c.seeds.shuffle_seed = s.value("shuffle_seed", c.seeds.shuffle_seed);
      c.seeds.init_seed = s.value("init_seed", c.seeds.init_seed);
      c.seeds.buffer_seed = s.value("buffer_seed", c.seeds.buffer_seed);
    }
    if (j.contains("softmax_scope")) {
      c.softmax_scope = parse_softmax_scope(j.at("softmax_scope").get<std::string>());
    }
    c.use_bias = j.value("bias", c.use_bias);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {
      {"dataset", dataset.generic_string()},
      {"method", std::string(to_string(method))},
      {"step_size", step_size},
      {"learning_rate", learning_rate},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"exemplar_budget", exemplar_budget},
      {"replay_batch_size", replay_batch_size},
      {"upper_bound_epochs", upper_bound_epochs},
      {"seeds",
       {{"class_seed", seeds.class_seed},
        {"shuffle_seed", seeds.shuffle_seed},
        {"init_seed", seeds.init_seed},
        {"buffer_seed", seeds.buffer_seed}}},
      {"softmax_scope", std::string(to_string(softmax_scope))},
      {"bias", use_bias},
  };
  if (!output_dir.empty()) j["output_dir"] = output_dir.generic_string();
  return j;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorCode::config, "dataset path is empty");
  if (step_size == 0) throw Error(ErrorCode::config, "step_size must be >= 1");
  if (batch_size == 0) throw Error(ErrorCode::config, "batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::config, "learning_rate must be positive and finite");
  }
  if (epochs != 1) {
    throw Error(ErrorCode::config,
                "epochs must be 1: every training record is observed exactly once");
  }
  if (is_exemplar_free(method) && exemplar_budget > 0) {
    throw Error(ErrorCode::config, "exemplar-free method cannot take a buffer (method " +
                                       std::string(to_string(method)) + ", exemplar_budget " +
                                       std::to_string(exemplar_budget) + ")");
  }
  if (method == Method::nme_buffer && exemplar_budget == 0) {
    throw Error(ErrorCode::config, "nme_buffer needs exemplar_budget >= 1");
  }
  if (method == Method::upper_bound && upper_bound_epochs == 0) {
    throw Error(ErrorCode::config, "upper_bound_epochs must be >= 1");
  }
}

// ------------------------------------------------------------------ learner

OnlineLearner::OnlineLearner(std::size_t dim, std::size_t step_size, LearnerOptions options)
    : dim_(dim),
      step_size_(step_size),
      options_(options),
      head_(dim, options.use_bias),
      means_(dim),
      buffer_(uses_buffer(options.method) ? options.exemplar_budget : 0, options.buffer_seed),
      replay_rng_(mix_seed(options.buffer_seed, 1)) {
  if (step_size == 0) throw Error(ErrorCode::invalid_argument, "step size must be >= 1");
  if (options.method == Method::upper_bound) {
    throw Error(ErrorCode::invalid_argument, "upper_bound is an offline mode, not an online learner");
  }
  if (is_exemplar_free(options.method) && options.exemplar_budget > 0) {
    throw Error(ErrorCode::config, "exemplar-free method cannot take a buffer");
  }
  if (!(options.learning_rate > 0.0f)) {
    throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  }
}

void OnlineLearner::begin_task(std::span<const ClassId> classes) {
  if (classes.size() != step_size_) {
    throw Error(ErrorCode::invalid_argument, "task has " + std::to_string(classes.size()) +
                                                 " classes, step size is " +
                                                 std::to_string(step_size_));
  }
  const std::size_t task = head_.num_tasks();
  head_.expand(task, classes, mix_seed(options_.init_seed, task), freezes_old_rows(options_.method));
  current_task_ = std::set<ClassId>(classes.begin(), classes.end());
}

float OnlineLearner::train_batch(const TrainBatch<float>& batch) {
  if (head_.num_tasks() == 0) throw Error(ErrorCode::state, "train_batch before begin_task");
  if (batch.size() == 0) throw Error(ErrorCode::invalid_argument, "empty batch");
  if (batch.dim != dim_ || batch.inputs.size() != batch.size() * dim_) {
    throw Error(ErrorCode::invalid_argument, "batch dimension does not match learner");
  }
  for (auto label : batch.labels) {
    if (!current_task_.count(label)) {
      throw Error(ErrorCode::invalid_argument,
                  "foreign-class record: label " + std::to_string(label) +
                      " is not in the current task");
    }
  }
  for (std::size_t i = 0; i < batch.size(); ++i) means_.update(batch.row(i), batch.labels[i]);

  const float lr = options_.learning_rate;
  float loss;
  switch (options_.method) {
    case Method::candidate_ncm:
    case Method::full_ncm:
      loss = train_step(head_, batch, lr, options_.softmax_scope);
      break;
    case Method::finetune:
      loss = finetune_step(head_, batch, lr, options_.softmax_scope);
      break;
    case Method::er:
    case Method::nme_buffer: {
      const std::size_t replay =
          options_.replay_batch_size ? options_.replay_batch_size : batch.size();
      loss = er_step(head_, buffer_, batch, replay, replay_rng_, lr, options_.softmax_scope);
      peak_buffer_ = std::max(peak_buffer_, buffer_.size());
      exemplar_means_.reset();
      break;
    }
    default:
      throw Error(ErrorCode::state, "unsupported online method");
  }
  ++sgd_steps_;
  return loss;
}

ClassId OnlineLearner::predict(std::span<const float> query) const {
  if (head_.num_tasks() == 0) throw Error(ErrorCode::state, "predict before any task");
  switch (options_.method) {
    case Method::candidate_ncm: {
      const auto logits = head_.logits(query);
      const auto candidates =
          select_candidates(std::span<const float>(logits), head_.row_classes(), step_size_);
      return ncm_predict(means_, std::span<const ClassId>(candidates), query);
    }
    case Method::full_ncm:
      return full_ncm_predict(means_, query);
    case Method::finetune:
    case Method::er: {
      const auto logits = head_.logits(query);
      return argmax_predict(std::span<const float>(logits), head_.row_classes());
    }
    case Method::nme_buffer:
      if (!exemplar_means_) exemplar_means_ = exemplar_means(buffer_);
      if (exemplar_means_->empty()) throw Error(ErrorCode::state, "exemplar buffer is empty");
      return full_ncm_predict(*exemplar_means_, query);
    default:
      throw Error(ErrorCode::state, "unsupported online method");
  }
}

nlohmann::json OnlineLearner::checkpoint() const {
  nlohmann::json j = {{"head", head_.to_json()}, {"means", means_.to_json()}};
  if (buffer_.capacity() > 0) j["buffer"] = buffer_.to_json();
  return j;
}

// ------------------------------------------------------------------ evaluation

StepEvaluation evaluate_predictor(const EmbeddingFile& file, std::span<const Split> split,
                                  const std::set<ClassId>& seen, const Predictor& predict) {
  if (split.size() != file.size()) {
    throw Error(ErrorCode::invalid_argument, "split length does not match embedding file");
  }
  std::map<ClassId, std::pair<std::uint64_t, std::uint64_t>> tally;  // correct, total
  for (auto c : seen) tally[c] = {0, 0};
  StepEvaluation ev;
  auto cur = file.cursor();
  EmbeddingRecord r;
  while (cur.next(r)) {
    const auto index = cur.position() - 1;
    if (split[index] != Split::test || !seen.count(r.label)) continue;
    const bool ok = predict(std::span<const float>(r.vector)) == r.label;
    auto& t = tally[r.label];
    t.first += ok;
    ++t.second;
    ev.correct += ok;
    ++ev.total;
  }
  ev.accuracy = ev.total ? static_cast<double>(ev.correct) / static_cast<double>(ev.total) : 0.0;
  for (const auto& [c, t] : tally) {
    if (t.second) ev.per_class[c] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return ev;
}

RunMetrics RunMetrics::from_steps(std::vector<double> per_step,
                                  std::vector<std::map<ClassId, double>> per_class) {
  if (per_step.empty()) throw Error(ErrorCode::invalid_argument, "no steps to summarize");
  RunMetrics m;
  double sum = 0.0;
  for (double a : per_step) sum += a;
  m.avg = sum / static_cast<double>(per_step.size());
  m.last = per_step.back();
  m.per_step = std::move(per_step);
  m.per_class = std::move(per_class);
  return m;
}

nlohmann::json RunMetrics::to_json() const {
  nlohmann::json pc = nlohmann::json::object();
  std::set<ClassId> classes;
  for (const auto& step : per_class) {
    for (const auto& [c, _] : step) classes.insert(c);
  }
  for (auto c : classes) {
    auto& arr = pc[std::to_string(c)] = nlohmann::json::array();
    for (const auto& step : per_class) {
      const auto it = step.find(c);
      arr.push_back(it == step.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second));
    }
  }
  return {{"per_step", per_step}, {"avg", avg}, {"last", last}, {"per_class", std::move(pc)}};
}

std::string format_number(double v) { return nlohmann::json(v).dump(); }

std::string RunMetrics::to_csv() const {
  std::string out = "step,accuracy\n";
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_number(per_step[i]) + "\n";
  }
  return out;
}

// ------------------------------------------------------------------ experiment

namespace {

LearnerOptions learner_options(const RunConfig& c) {
  LearnerOptions o;
  o.method = c.method;
  o.learning_rate = static_cast<float>(c.learning_rate);
  o.softmax_scope = c.softmax_scope;
  o.use_bias = c.use_bias;
  o.exemplar_budget = c.exemplar_budget;
  o.replay_batch_size = c.replay_batch_size;
  o.init_seed = c.seeds.init_seed;
  o.buffer_seed = c.seeds.buffer_seed;
  return o;
}

RunConfig checked(RunConfig c) {
  c.validate();
  if (c.method == Method::upper_bound) {
    throw Error(ErrorCode::invalid_argument, "upper_bound runs through run_experiment only");
  }
  return c;
}

}  // namespace

Experiment::Experiment(RunConfig config)
    : config_(checked(std::move(config))),
      manifest_(DatasetManifest::load(config_.dataset)),
      file_(manifest_.file),
      schedule_(build_task_schedule(manifest_, config_.step_size, config_.seeds.class_seed,
                                    config_.seeds.shuffle_seed)),
      learner_(manifest_.dim, config_.step_size, learner_options(config_)),
      train_reads_(manifest_.num_records, 0) {
  if (file_.dim() != manifest_.dim) {
    throw Error(ErrorCode::format, "manifest dim disagrees with embedding file");
  }
}

void Experiment::run_task(std::size_t task) {
  if (task != tasks_done_) {
    throw Error(ErrorCode::state, "out-of-order task " + std::to_string(task) + " (expected " +
                                      std::to_string(tasks_done_) + ")");
  }
  if (task >= schedule_.num_tasks()) {
    throw Error(ErrorCode::state, "task " + std::to_string(task) + " beyond schedule");
  }
  const auto& t = schedule_.tasks[task];
  learner_.begin_task(t.classes);
  const std::set<ClassId> allowed(t.classes.begin(), t.classes.end());

  auto cur = file_.cursor();
  EmbeddingRecord r;
  TrainBatch<float> batch;
  batch.dim = manifest_.dim;
  for (std::size_t i = 0; i < t.train.size(); ++i) {
    const auto index = t.train[i];
    cur.read_at(index, r);
    ++train_reads_[index];
    if (!allowed.count(r.label)) {
      throw Error(ErrorCode::format, "foreign-class record " + std::to_string(index) +
                                         " (label " + std::to_string(r.label) + ") in task " +
                                         std::to_string(task));
    }
    batch.push_back(r.vector, r.label);
    if (batch.size() == config_.batch_size || i + 1 == t.train.size()) {
      learner_.train_batch(batch);
      batch.clear();
    }
  }
  seen_.insert(t.classes.begin(), t.classes.end());
  ++tasks_done_;
}

StepEvaluation Experiment::evaluate() const {
  if (tasks_done_ == 0) throw Error(ErrorCode::state, "evaluate before any task");
  return evaluate_predictor(file_, manifest_.split, seen_,
                            [this](std::span<const float> q) { return learner_.predict(q); });
}

namespace {

nlohmann::json base_manifest(const RunConfig& config, const DatasetManifest& dm,
                             const TaskSchedule& schedule) {
  return {
      {"tool", "streamcl"},
      {"version", kVersion},
      {"config", config.to_json()},
      {"dataset",
       {{"file", dm.file.generic_string()},
        {"dim", dm.dim},
        {"num_classes", dm.num_classes},
        {"num_records", dm.num_records}}},
      {"num_tasks", schedule.num_tasks()},
      {"class_order", schedule.class_order},
  };
}

RunReport run_upper_bound(const RunConfig& config) {
  const auto dm = DatasetManifest::load(config.dataset);
  const EmbeddingFile file(dm.file);
  const auto schedule = build_task_schedule(dm, config.step_size, config.seeds.class_seed,
                                            config.seeds.shuffle_seed);
  std::vector<double> per_step;
  std::vector<std::map<ClassId, double>> per_class;
  std::set<ClassId> seen;
  // Offline reference: seen training data is held in memory across steps.
  std::vector<EmbeddingRecord> pool;
  auto cur = file.cursor();
  EmbeddingRecord r;
  const auto lr = static_cast<float>(config.learning_rate);
  for (std::size_t step = 0; step < schedule.num_tasks(); ++step) {
    const auto& t = schedule.tasks[step];
    seen.insert(t.classes.begin(), t.classes.end());
    for (const auto idx : t.train) {
      cur.read_at(idx, r);
      pool.push_back(r);
    }

    LinearHead<float> head(dm.dim, config.use_bias);
    for (std::size_t k = 0; k <= step; ++k) {
      head.expand(k, schedule.tasks[k].classes, mix_seed(config.seeds.init_seed, k), false);
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.upper_bound_epochs; ++epoch) {
      Rng rng(mix_seed(config.seeds.shuffle_seed, (step << 20) + epoch));
      rng.shuffle(order);
      TrainBatch<float> batch;
      batch.dim = dm.dim;
      for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& rec = pool[order[i]];
        batch.push_back(rec.vector, rec.label);
        if (batch.size() == config.batch_size || i + 1 == order.size()) {
          train_step(head, batch, lr, config.softmax_scope);
          batch.clear();
        }
      }
    }
    const auto ev = evaluate_predictor(file, dm.split, seen, [&](std::span<const float> q) {
      const auto logits = head.logits(q);
      return argmax_predict(std::span<const float>(logits), head.row_classes());
    });
    per_step.push_back(ev.accuracy);
    per_class.push_back(ev.per_class);
  }
  RunReport report;
  report.metrics = RunMetrics::from_steps(std::move(per_step), std::move(per_class));
  report.manifest = base_manifest(config, dm, schedule);
  report.manifest["online"] = false;
  report.manifest["note"] = "offline reference: joint multi-epoch training on all seen classes";
  report.manifest["exemplar_free"] = false;
  return report;
}

}  // namespace

RunReport run_experiment(const RunConfig& config) {
  config.validate();
  if (config.method == Method::upper_bound) return run_upper_bound(config);

  Experiment exp(config);
  std::vector<double> per_step;
  std::vector<std::map<ClassId, double>> per_class;
  for (std::size_t t = 0; t < exp.schedule().num_tasks(); ++t) {
    exp.run_task(t);
    const auto ev = exp.evaluate();
    if (ev.per_class.size() != exp.seen_classes().size()) {
      throw Error(ErrorCode::format, "step " + std::to_string(t + 1) +
                                         ": some seen class has no test records");
    }
    per_step.push_back(ev.accuracy);
    per_class.push_back(ev.per_class);
  }

  std::uint64_t train_records = 0, exact_once = 0;
  std::uint32_t min_reads = std::numeric_limits<std::uint32_t>::max(), max_reads = 0;
  for (std::size_t i = 0; i < exp.manifest().split.size(); ++i) {
    const auto reads = exp.train_reads()[i];
    if (exp.manifest().split[i] == Split::train) {
      ++train_records;
      exact_once += reads == 1;
      min_reads = std::min(min_reads, reads);
      max_reads = std::max(max_reads, reads);
    } else {
      max_reads = std::max(max_reads, reads);
    }
  }
  if (train_records == 0) min_reads = 0;

  RunReport report;
  report.metrics = RunMetrics::from_steps(std::move(per_step), std::move(per_class));
  report.manifest = base_manifest(exp.config(), exp.manifest(), exp.schedule());
  report.manifest["online"] = true;
  report.manifest["single_pass"] = {
      {"train_records", train_records},
      {"read_exactly_once", exact_once},
      {"min_reads", min_reads},
      {"max_reads", max_reads},
      {"ok", exact_once == train_records && max_reads <= 1},
  };
  report.manifest["sgd_steps"] = exp.learner().sgd_steps();
  report.manifest["buffer"] = {{"capacity", exp.learner().buffer().capacity()},
                               {"peak_records", exp.learner().peak_buffer_records()}};
  const bool exemplar_free = is_exemplar_free(config.method);
  report.manifest["exemplar_free"] = exemplar_free;
  if (exemplar_free && exp.learner().peak_buffer_records() != 0) {
    throw Error(ErrorCode::state, "exemplar-free run stored exemplars");
  }
  return report;
}

void write_run_outputs(const RunReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "metrics.json", report.metrics.to_json().dump(1) + "\n");
  write_text(out_dir / "metrics.csv", report.metrics.to_csv());
  write_text(out_dir / "run_manifest.json", report.manifest.dump(1) + "\n");
}

}  // namespace streamcl
