#include "streamcl/linear_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "streamcl/random.hpp"

namespace streamcl {

SoftmaxScope parse_softmax_scope(std::string_view s) {
  if (s == "all") return SoftmaxScope::all;
  if (s == "task") return SoftmaxScope::task;
  throw Error(ErrorCode::config, "softmax_scope must be \"all\" or \"task\", got \"" +
                                     std::string(s) + "\"");
}

std::string_view to_string(SoftmaxScope s) { return s == SoftmaxScope::all ? "all" : "task"; }

template <class Real>
LinearHead<Real>::LinearHead(std::size_t dim, bool use_bias) : dim_(dim), use_bias_(use_bias) {
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "head dimension must be >= 1");
}

template <class Real>
void LinearHead<Real>::expand(std::size_t task, std::span<const ClassId> classes,
                              std::uint64_t init_seed, bool freeze_previous) {
  if (task != num_tasks_) {
    throw Error(ErrorCode::state, task < num_tasks_
                                      ? "duplicate expansion for task " + std::to_string(task)
                                      : "expansion for task " + std::to_string(task) +
                                            " out of order (expected " +
                                            std::to_string(num_tasks_) + ")");
  }
  if (classes.empty()) throw Error(ErrorCode::invalid_argument, "expansion with no classes");
  for (auto c : classes) {
    if (row_of_.count(c) != 0) {
      throw Error(ErrorCode::invalid_argument,
                  "class " + std::to_string(c) + " already has a head row");
    }
  }
  if (freeze_previous) std::fill(trainable_.begin(), trainable_.end(), std::uint8_t{0});

  Rng rng(init_seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (auto c : classes) {
    row_of_.emplace(c, row_class_.size());
    row_class_.push_back(c);
    row_task_.push_back(task);
    trainable_.push_back(1);
    biases_.push_back(Real(0));
    for (std::size_t i = 0; i < dim_; ++i) {
      weights_.push_back(static_cast<Real>(rng.uniform(-bound, bound)));
    }
  }
  ++num_tasks_;
}

template <class Real>
void LinearHead<Real>::logits_into(std::span<const Real> x, std::span<Real> out) const {
  if (x.size() != dim_) {
    throw Error(ErrorCode::invalid_argument,
                "dimension mismatch: input has " + std::to_string(x.size()) +
                    " components, head dimension is " + std::to_string(dim_));
  }
  if (out.size() != rows()) throw Error(ErrorCode::invalid_argument, "logit buffer size mismatch");
  for (std::size_t r = 0; r < rows(); ++r) {
    const Real* w = weights_.data() + r * dim_;
    // 64-bit accumulator; the float path rounds once at the end.
    double acc = biases_[r];
    for (std::size_t i = 0; i < dim_; ++i) acc += static_cast<double>(w[i]) * x[i];
    out[r] = static_cast<Real>(acc);
  }
}

template <class Real>
std::vector<Real> LinearHead<Real>::logits(std::span<const Real> x) const {
  std::vector<Real> out(rows());
  logits_into(x, out);
  return out;
}

template <class Real>
std::optional<std::size_t> LinearHead<Real>::row_of(ClassId c) const {
  const auto it = row_of_.find(c);
  if (it == row_of_.end()) return std::nullopt;
  return it->second;
}

template <class Real>
nlohmann::json LinearHead<Real>::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (std::size_t r = 0; r < rows(); ++r) {
    std::vector<double> w(row(r).begin(), row(r).end());
    rows_json.push_back({{"task", row_task_[r]},
                         {"class", row_class_[r]},
                         {"trainable", trainable(r)},
                         {"bias", static_cast<double>(biases_[r])},
                         {"weights", std::move(w)}});
  }
  return {{"dim", dim_}, {"bias", use_bias_}, {"rows", std::move(rows_json)}};
}

template <class Real>
LinearHead<Real> LinearHead<Real>::from_json(const nlohmann::json& j) {
  try {
    LinearHead head(j.at("dim").get<std::size_t>(), j.value("bias", true));
    for (const auto& row : j.at("rows")) {
      const auto task = row.at("task").get<std::size_t>();
      const auto cls = row.at("class").get<ClassId>();
      const auto w = row.at("weights").get<std::vector<double>>();
      if (w.size() != head.dim_) throw Error(ErrorCode::format, "head row has wrong dimension");
      if (task + 1 < head.num_tasks_ || task > head.num_tasks_) {
        throw Error(ErrorCode::format, "head rows not grouped by task");
      }
      if (task == head.num_tasks_) ++head.num_tasks_;
      if (head.row_of_.count(cls) != 0) throw Error(ErrorCode::format, "duplicate class row");
      head.row_of_.emplace(cls, head.row_class_.size());
      head.row_class_.push_back(cls);
      head.row_task_.push_back(task);
      head.trainable_.push_back(row.at("trainable").get<bool>() ? 1 : 0);
      head.biases_.push_back(static_cast<Real>(row.at("bias").get<double>()));
      for (double v : w) head.weights_.push_back(static_cast<Real>(v));
    }
    return head;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("head checkpoint: ") + e.what());
  }
}

namespace {

// Shared forward pass. With `grad` non-null, labels must sit on trainable
// rows and gradients are accumulated for trainable rows only.
template <class Real>
Real forward(const LinearHead<Real>& head, const TrainBatch<Real>& batch, SoftmaxScope scope,
             HeadGradients<Real>* grad) {
  if (batch.size() == 0) throw Error(ErrorCode::invalid_argument, "empty batch");
  if (batch.dim != head.dim() || batch.inputs.size() != batch.size() * batch.dim) {
    throw Error(ErrorCode::invalid_argument, "batch dimension does not match head");
  }
  const std::size_t rows = head.rows();
  const std::size_t dim = head.dim();
  if (grad) {
    grad->rows = rows;
    grad->dim = dim;
    grad->weights.assign(rows * dim, Real(0));
    grad->biases.assign(rows, Real(0));
  }
  const Real inv_b = Real(1) / static_cast<Real>(batch.size());
  std::vector<Real> z(rows);
  Real loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto label = batch.labels[i];
    const auto target = head.row_of(label);
    if (!target) {
      throw Error(ErrorCode::invalid_argument,
                  "label " + std::to_string(label) + " has no head row");
    }
    if (grad && !head.trainable(*target)) {
      throw Error(ErrorCode::invalid_argument,
                  "label " + std::to_string(label) + " outside current task (row is frozen)");
    }
    std::size_t lo = 0, hi = rows;
    if (scope == SoftmaxScope::task) {
      const auto task = head.row_task(*target);
      lo = *target;
      while (lo > 0 && head.row_task(lo - 1) == task) --lo;
      hi = *target + 1;
      while (hi < rows && head.row_task(hi) == task) ++hi;
    }
    const auto x = batch.row(i);
    const auto w = head.weights();
    const auto b = head.biases();
    Real zmax = -std::numeric_limits<Real>::infinity();
    for (std::size_t r = lo; r < hi; ++r) {
      Real acc = b[r];
      const Real* wr = w.data() + r * dim;
      for (std::size_t k = 0; k < dim; ++k) acc += wr[k] * x[k];
      z[r] = acc;
      zmax = std::max(zmax, acc);
    }
    Real sum = 0;
    for (std::size_t r = lo; r < hi; ++r) sum += std::exp(z[r] - zmax);
    loss += zmax + std::log(sum) - z[*target];
    if (!grad) continue;
    for (std::size_t r = lo; r < hi; ++r) {
      if (!head.trainable(r)) continue;
      const Real p = std::exp(z[r] - zmax) / sum;
      const Real d = (p - (r == *target ? Real(1) : Real(0))) * inv_b;
      Real* gw = grad->weights.data() + r * dim;
      for (std::size_t k = 0; k < dim; ++k) gw[k] += d * x[k];
      if (head.use_bias()) grad->biases[r] += d;
    }
  }
  return loss * inv_b;
}

}  // namespace

template <class Real>
LossAndGrad<Real> ce_loss_and_grad(const LinearHead<Real>& head, const TrainBatch<Real>& batch,
                                   SoftmaxScope scope) {
  LossAndGrad<Real> out;
  out.loss = forward(head, batch, scope, &out.grad);
  return out;
}

template <class Real>
Real ce_loss(const LinearHead<Real>& head, const TrainBatch<Real>& batch, SoftmaxScope scope) {
  return forward<Real>(head, batch, scope, nullptr);
}

template <class Real>
void sgd_step(LinearHead<Real>& head, const HeadGradients<Real>& grad, Real lr) {
  if (grad.rows != head.rows() || grad.dim != head.dim() ||
      grad.weights.size() != head.rows() * head.dim() || grad.biases.size() != head.rows()) {
    throw Error(ErrorCode::invalid_argument, "gradient shape does not match head");
  }
  auto w = head.mutable_weights();
  auto b = head.mutable_biases();
  const std::size_t dim = head.dim();
  for (std::size_t r = 0; r < head.rows(); ++r) {
    if (!head.trainable(r)) continue;
    for (std::size_t k = 0; k < dim; ++k) w[r * dim + k] -= lr * grad.weights[r * dim + k];
    if (head.use_bias()) b[r] -= lr * grad.biases[r];
  }
}

template <class Real>
Real train_step(LinearHead<Real>& head, const TrainBatch<Real>& batch, Real lr,
                SoftmaxScope scope) {
  const auto lg = ce_loss_and_grad(head, batch, scope);
  sgd_step(head, lg.grad, lr);
  return lg.loss;
}

#define STREAMCL_INSTANTIATE(Real)                                                          \
  template class LinearHead<Real>;                                                          \
  template LossAndGrad<Real> ce_loss_and_grad(const LinearHead<Real>&,                      \
                                              const TrainBatch<Real>&, SoftmaxScope);       \
  template Real ce_loss(const LinearHead<Real>&, const TrainBatch<Real>&, SoftmaxScope);    \
  template void sgd_step(LinearHead<Real>&, const HeadGradients<Real>&, Real);              \
  template Real train_step(LinearHead<Real>&, const TrainBatch<Real>&, Real, SoftmaxScope);

STREAMCL_INSTANTIATE(float)
STREAMCL_INSTANTIATE(double)

#undef STREAMCL_INSTANTIATE

}  // namespace streamcl
