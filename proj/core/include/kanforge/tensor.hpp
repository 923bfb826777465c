#pragma once

// Dense f64 tensors with a record-on-forward autodiff tape.
//
// A Tensor is a reference-counted handle: copying a Tensor aliases the same
// storage, like a parameter handle in most ML frameworks. Use clone() for a
// deep copy. Every operation that has at least one input with
// requires_grad() (and runs outside a NoGradGuard) appends a backward rule to
// the calling thread's Tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kanforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  // Tape generation that produced this tensor; 0 for leaves and constants.
  std::uint64_t generation = 0;

  void accumulate_grad(std::size_t i, double g) {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    grad[i] += g;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 1-D tensor from a list of values.
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access. Mutating a tensor that is an input of a recorded
  /// operation invalidates that operation's backward rule.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of the values; the copy is a fresh leaf with the same
  /// requires_grad flag and no gradient.
  Tensor clone() const;
  /// Deep copy that never requires grad.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Tape;
  friend Tensor make_result(Shape shape, std::vector<double> data,
                            std::initializer_list<const Tensor*> inputs);
};

/// Per-thread record of differentiable operations in execution order.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  /// The calling thread's tape.
  static Tape& current();

  /// Registers `fn` as the backward rule producing `output`.
  void record(const Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once,
  /// newest first, then clears the tape. Fails on a non-scalar loss or a loss
  /// that was not produced under the current tape (which includes calling
  /// backward twice).
  void backward(const Tensor& loss);

  /// Drops every recorded operation without running it.
  void clear();

  std::size_t size() const { return entries_.size(); }
  std::uint64_t generation() const { return generation_; }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  std::uint64_t generation_ = 1;
};

/// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Shorthand for Tape::current().backward(loss).
void backward(const Tensor& loss);

/// Builds an operation result; requires_grad is set when recording is enabled
/// and any input requires grad. Callers record the backward rule only when
/// the result requires grad.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs);

}  // namespace kanforge
