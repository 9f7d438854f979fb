#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation.
//
// Every op that receives at least one input with requires_grad() records a
// node pointing at its inputs. backward() topologically sorts the nodes that
// are reachable from the loss and runs each backward rule exactly once.
// Leaf gradients accumulate across repeated backward() calls; call
// zero_grad() (or let the optimizer do it) to reset them.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meshfield::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

class Tensor {
 public:
  /// An empty rank-0 tensor holding 0.
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable access to the values. Only meaningful for leaves; mutating the
  /// input of a recorded op invalidates its backward rule.
  std::span<double> data_mut();
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Reverse sweep from this scalar. Throws ContractError for non-scalars.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of the values, cut from the graph.
  Tensor clone() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording on this thread for the lifetime of the guard.
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

// ---------------------------------------------------------------------------
// Custom ops.
//
// A backward rule receives the upstream gradient of the op output and one
// slot per input. Slots for inputs that do not require gradients are null;
// the others point at zero-initialized buffers the rule must add into.

using GradSlots = std::vector<std::vector<double>*>;
using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSlots& grad_in)>;

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward,
               std::string_view name);

/// Number of backward rules executed by the most recent backward() on this thread.
std::size_t last_backward_node_count();

// ---------------------------------------------------------------------------
// Ops.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

enum class Elementwise { add, sub, mul, div };
/// Binary op with trailing-dimension broadcasting (size-1 axes stretch).
Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind);
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator*(const Tensor& x, double s);
Tensor operator*(double s, const Tensor& x);
Tensor operator+(const Tensor& x, double s);
Tensor operator+(double s, const Tensor& x);
Tensor operator-(const Tensor& x, double s);

enum class Activation { relu, sigmoid, tanh, sin, cos, exp };
Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }
inline Tensor sin(const Tensor& x) { return activation(x, Activation::sin); }
inline Tensor cos(const Tensor& x) { return activation(x, Activation::cos); }
inline Tensor exp(const Tensor& x) { return activation(x, Activation::exp); }

/// Clamp into [lo, hi]; the gradient is passed only where the input is strictly inside.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Mean along `axis`, keeping it as a size-1 axis.
Tensor reduce_mean(const Tensor& x, std::size_t axis);
/// Sum along `axis`, keeping it as a size-1 axis.
Tensor reduce_sum(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2_normalize(const Tensor& x);
/// a.b / (|a| |b|) over all elements. Zero-norm input -> NumericDomainError.
Tensor cosine_sim(const Tensor& a, const Tensor& b);
/// Rows whose L2 norm exceeds `max_norm` are scaled down onto the ball.
Tensor clamp_row_norm(const Tensor& x, double max_norm);

}  // namespace meshfield::ag
