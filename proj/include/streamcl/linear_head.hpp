#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "streamcl/error.hpp"

namespace streamcl {

// Which logits the softmax normalizes over. `all`: every row of the head.
// `task`: only the rows of the task that owns the sample's label.
enum class SoftmaxScope { all, task };

SoftmaxScope parse_softmax_scope(std::string_view s);
std::string_view to_string(SoftmaxScope s);

template <class Real>
struct TrainBatch {
  std::size_t dim = 0;
  std::vector<Real> inputs;  // size() x dim, row-major
  std::vector<ClassId> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const Real> row(std::size_t i) const {
    return std::span<const Real>(inputs).subspan(i * dim, dim);
  }
  void push_back(std::span<const Real> x, ClassId label) {
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
  }
  void clear() {
    inputs.clear();
    labels.clear();
  }
};

template <class Real>
struct HeadGradients {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<Real> weights;  // rows x dim
  std::vector<Real> biases;   // rows
};

// Fully connected classification layer grown by one block of rows per task.
// Row r scores class row_class(r). Rows whose trainable flag is false never
// change: their gradients are zeroed when computed.
template <class Real>
class LinearHead {
 public:
  explicit LinearHead(std::size_t dim, bool use_bias = true);

  // Appends one row per class in `classes` for task `task`, which must equal
  // num_tasks(). Weights ~ U[-1/sqrt(dim), 1/sqrt(dim)] from `init_seed`,
  // biases zero. With freeze_previous, every existing row becomes frozen;
  // otherwise all rows stay trainable.
  void expand(std::size_t task, std::span<const ClassId> classes, std::uint64_t init_seed,
              bool freeze_previous = true);

  std::vector<Real> logits(std::span<const Real> x) const;
  void logits_into(std::span<const Real> x, std::span<Real> out) const;

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return row_class_.size(); }
  std::size_t num_tasks() const { return num_tasks_; }
  bool use_bias() const { return use_bias_; }

  std::span<const Real> weights() const { return weights_; }
  std::span<const Real> biases() const { return biases_; }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(weights_).subspan(r * dim_, dim_);
  }
  // Direct parameter access, for checkpoint restore and test oracles.
  std::span<Real> mutable_weights() { return weights_; }
  std::span<Real> mutable_biases() { return biases_; }

  bool trainable(std::size_t r) const { return trainable_[r] != 0; }
  void set_trainable(std::size_t r, bool on) { trainable_[r] = on ? 1 : 0; }
  std::size_t row_task(std::size_t r) const { return row_task_[r]; }
  ClassId row_class(std::size_t r) const { return row_class_[r]; }
  std::span<const ClassId> row_classes() const { return row_class_; }
  std::optional<std::size_t> row_of(ClassId c) const;

  // {"dim", "bias", "rows": [{"task", "class", "trainable", "bias", "weights"}]}
  nlohmann::json to_json() const;
  static LinearHead from_json(const nlohmann::json& j);

 private:
  std::size_t dim_;
  bool use_bias_;
  std::size_t num_tasks_ = 0;
  std::vector<Real> weights_;
  std::vector<Real> biases_;
  std::vector<std::uint8_t> trainable_;
  std::vector<std::size_t> row_task_;
  std::vector<ClassId> row_class_;
  std::map<ClassId, std::size_t> row_of_;
};

template <class Real>
struct LossAndGrad {
  Real loss = 0;
  HeadGradients<Real> grad;
};

// Mean softmax cross-entropy over the batch and its gradient. Softmax uses
// the max-subtracted log-sum-exp. Gradient rows of frozen parameters are
// exactly zero. Every label must map to a trainable row.
template <class Real>
LossAndGrad<Real> ce_loss_and_grad(const LinearHead<Real>& head, const TrainBatch<Real>& batch,
                                   SoftmaxScope scope = SoftmaxScope::all);

// Loss only; no trainability requirement on labels.
template <class Real>
Real ce_loss(const LinearHead<Real>& head, const TrainBatch<Real>& batch,
             SoftmaxScope scope = SoftmaxScope::all);

// Plain SGD: w <- w - lr * g on trainable rows only.
template <class Real>
void sgd_step(LinearHead<Real>& head, const HeadGradients<Real>& grad, Real lr);

// ce_loss_and_grad followed by sgd_step; returns the pre-step loss.
template <class Real>
Real train_step(LinearHead<Real>& head, const TrainBatch<Real>& batch, Real lr,
                SoftmaxScope scope = SoftmaxScope::all);

}  // namespace streamcl
