#include "meshfield/autograd.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "meshfield/errors.hpp"
#include "tensor_impl.hpp"

namespace meshfield::ag {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::size_t g_last_backward_nodes = 0;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(1, 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(ag::numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ag::numel(shape) != values.size()) {
    throw DimensionError("from_vector: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_vector({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::data_mut() { return impl_->data; }

double Tensor::item() const {
  if (impl_->data.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(impl_->shape));
  return impl_->data[0];
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

void Tensor::backward() const {
  if (impl_->data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) throw ContractError("backward() on a tensor that is not part of a recorded graph");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      TensorImpl* child = node->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  // Interior gradients are scratch space for this sweep only.
  for (TensorImpl* t : order) {
    if (t->node) t->grad.assign(t->data.size(), 0.0);
  }
  if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
  impl_->grad[0] += 1.0;

  std::size_t executed = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->node) continue;
    GradSlots slots;
    slots.reserve(t->node->inputs.size());
    for (auto& in : t->node->inputs) {
      if (in->requires_grad) {
        if (in->grad.size() != in->data.size()) in->grad.assign(in->data.size(), 0.0);
        slots.push_back(&in->grad);
      } else {
        slots.push_back(nullptr);
      }
    }
    t->node->backward(t->grad, slots);
    ++executed;
  }
  for (TensorImpl* t : order) {
    if (t->node && t != impl_.get()) {
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
  g_last_backward_nodes = executed;
}

std::size_t last_backward_node_count() { return g_last_backward_nodes; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward,
               std::string_view name) {
  if (ag::numel(shape) != values.size()) {
    throw DimensionError(std::string(name) + ": result shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (!g_grad_enabled) return Tensor(std::move(impl));
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return Tensor(std::move(impl));
  auto node = std::make_shared<Node>();
  node->name = std::string(name);
  node->backward = std::move(backward);
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl());
  impl->requires_grad = true;
  impl->node = std::move(node);
  return Tensor(std::move(impl));
}

}  // namespace meshfield::ag
