#pragma once

// End-to-end online class-incremental protocol: tasks arrive in schedule
// order, each training record is consumed once in mini-batches, and after
// every task the model is scored on the test records of all classes seen so
// far.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "streamcl/baselines.hpp"
#include "streamcl/embedding_store.hpp"
#include "streamcl/linear_head.hpp"
#include "streamcl/mean_tracker.hpp"

namespace streamcl {

inline constexpr const char* kVersion = "0.1.0";

enum class Method {
  candidate_ncm,  // per-task candidates from the head, then nearest class mean
  full_ncm,       // nearest class mean over every seen class
  finetune,       // head trained on new data only, argmax prediction
  er,             // experience replay with a reservoir buffer, argmax prediction
  nme_buffer,     // replay training, nearest mean of buffered exemplars
  upper_bound,    // offline joint training on all seen data at every step
};

Method parse_method(std::string_view s);
std::string_view to_string(Method m);
bool is_exemplar_free(Method m);

struct Seeds {
  std::uint64_t class_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t buffer_seed = 0;
};

struct RunConfig {
  std::filesystem::path dataset;  // manifest path
  Method method = Method::candidate_ncm;
  std::size_t step_size = 5;
  double learning_rate = 0.1;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;  // online methods accept only 1
  std::size_t exemplar_budget = 0;
  std::size_t replay_batch_size = 0;  // 0 means "same as batch_size"
  std::size_t upper_bound_epochs = 5;
  Seeds seeds;
  SoftmaxScope softmax_scope = SoftmaxScope::all;
  bool use_bias = true;
  std::filesystem::path output_dir;

  // Relative paths resolve against base_dir. Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  // Throws Error{config} on any violated invariant.
  void validate() const;
};

struct LearnerOptions {
  Method method = Method::candidate_ncm;
  float learning_rate = 0.1f;
  SoftmaxScope softmax_scope = SoftmaxScope::all;
  bool use_bias = true;
  std::size_t exemplar_budget = 0;
  std::size_t replay_batch_size = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t buffer_seed = 0;
};

// Model state for one online run: head, class means and (for replay methods)
// the exemplar buffer.
class OnlineLearner {
 public:
  OnlineLearner(std::size_t dim, std::size_t step_size, LearnerOptions options);

  // Grows the head by one block; classes.size() must equal the step size.
  void begin_task(std::span<const ClassId> classes);

  // Updates class means from every record, then takes one training step with
  // the configured policy. All labels must belong to the current task.
  float train_batch(const TrainBatch<float>& batch);

  ClassId predict(std::span<const float> query) const;

  std::size_t dim() const { return dim_; }
  std::size_t step_size() const { return step_size_; }
  std::size_t tasks_started() const { return head_.num_tasks(); }
  std::size_t sgd_steps() const { return sgd_steps_; }
  std::size_t peak_buffer_records() const { return peak_buffer_; }
  const LearnerOptions& options() const { return options_; }
  const LinearHead<float>& head() const { return head_; }
  const ClassMeanTable& means() const { return means_; }
  const ExemplarBuffer& buffer() const { return buffer_; }

  // {"head": ..., "means": ..., "buffer": ...}
  nlohmann::json checkpoint() const;

 private:
  std::size_t dim_;
  std::size_t step_size_;
  LearnerOptions options_;
  LinearHead<float> head_;
  ClassMeanTable means_;
  ExemplarBuffer buffer_;
  Rng replay_rng_;
  std::set<ClassId> current_task_;
  std::size_t sgd_steps_ = 0;
  std::size_t peak_buffer_ = 0;
  mutable std::optional<ClassMeanTable> exemplar_means_;
};

struct StepEvaluation {
  double accuracy = 0.0;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  std::map<ClassId, double> per_class;
};

using Predictor = std::function<ClassId(std::span<const float>)>;

// Scores `predict` on every test record (file order) whose class is in
// `seen`.
StepEvaluation evaluate_predictor(const EmbeddingFile& file, std::span<const Split> split,
                                  const std::set<ClassId>& seen, const Predictor& predict);

struct RunMetrics {
  std::vector<double> per_step;
  double avg = 0.0;
  double last = 0.0;
  std::vector<std::map<ClassId, double>> per_class;  // per step

  // Fills avg and last from per_step.
  static RunMetrics from_steps(std::vector<double> per_step,
                               std::vector<std::map<ClassId, double>> per_class);

  // {"per_step": [...], "avg", "last", "per_class": {"<class>": [acc | null per step]}}
  nlohmann::json to_json() const;
  // "step,accuracy" rows, steps numbered from 1.
  std::string to_csv() const;
};

// Shortest round-trip decimal text for a double, as written into metrics JSON.
std::string format_number(double v);

// One online experiment, driven task by task.
class Experiment {
 public:
  explicit Experiment(RunConfig config);

  // Trains on task `task`'s stream; tasks must run in order 0, 1, ...
  void run_task(std::size_t task);
  // Accuracy over test records of all classes seen so far.
  StepEvaluation evaluate() const;

  const RunConfig& config() const { return config_; }
  const DatasetManifest& manifest() const { return manifest_; }
  const TaskSchedule& schedule() const { return schedule_; }
  const OnlineLearner& learner() const { return learner_; }
  std::size_t tasks_done() const { return tasks_done_; }
  const std::set<ClassId>& seen_classes() const { return seen_; }
  // Times each record was read for training, indexed by record.
  const std::vector<std::uint32_t>& train_reads() const { return train_reads_; }

 private:
  RunConfig config_;
  DatasetManifest manifest_;
  EmbeddingFile file_;
  TaskSchedule schedule_;
  OnlineLearner learner_;
  std::size_t tasks_done_ = 0;
  std::set<ClassId> seen_;
  std::vector<std::uint32_t> train_reads_;
};

struct RunReport {
  RunMetrics metrics;
  nlohmann::json manifest;  // config echo, version, audits
};

RunReport run_experiment(const RunConfig& config);

// Writes metrics.json, metrics.csv and run_manifest.json into out_dir.
void write_run_outputs(const RunReport& report, const std::filesystem::path& out_dir);

enum class SweepAxis { exemplar_budget, step_size, method };

struct SweepSpec {
  nlohmann::json base;  // RunConfig JSON
  std::filesystem::path base_dir;
  SweepAxis axis = SweepAxis::step_size;
  std::vector<nlohmann::json> values;
  std::filesystem::path output_dir;
  bool parallel = false;

  // {"base": {...} | "config.json", "axis": "step_size" | "exemplar_budget" |
  //  "method", "values": [...], "output_dir": "...", "parallel": false}
  static SweepSpec load(const std::filesystem::path& path);
  // Every point as a validated config, each with its own output directory.
  std::vector<RunConfig> points() const;
};

struct SweepRow {
  std::string method;
  std::size_t step_size = 0;
  std::size_t exemplar_budget = 0;
  double avg = 0.0;
  double last = 0.0;
  std::filesystem::path output_dir;
};

// Runs every point, writes per-point outputs and <output_dir>/summary.csv
// with columns method,M,Q,avg,last.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

}  // namespace streamcl
