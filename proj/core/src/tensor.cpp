#include "camo/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "camo/errors.hpp"

namespace camo {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_op(Shape shape, std::vector<Real> values, std::vector<Tensor> parents,
                                   typename Node::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

template <typename Real>
const typename Tensor<Real>::Node& Tensor<Real>::checked() const {
  if (!node_) throw InvariantError("use of an undefined tensor");
  return *node_;
}

template <typename Real>
const Shape& Tensor<Real>::shape() const { return checked().shape; }

template <typename Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

template <typename Real>
std::size_t Tensor<Real>::size() const { return checked().value.size(); }

template <typename Real>
std::span<const Real> Tensor<Real>::values() const { return checked().value; }

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return checked().value[0];
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_values() {
  if (!checked().is_leaf()) throw InvariantError("values of a non-leaf tensor are read-only");
  return node_->value;
}

template <typename Real>
bool Tensor<Real>::requires_grad() const { return checked().requires_grad; }

template <typename Real>
bool Tensor<Real>::is_leaf() const { return checked().is_leaf(); }

template <typename Real>
bool Tensor<Real>::has_grad() const { return !checked().grad.empty(); }

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const { return checked().grad; }

template <typename Real>
std::span<Real> Tensor<Real>::mutable_grad() {
  checked();
  return node_->grad_buffer();
}

template <typename Real>
void Tensor<Real>::clear_grad() {
  checked();
  node_->grad.clear();
}

template <typename Real>
void Tensor<Real>::backward() const {
  const auto& root = checked();
  if (root.value.size() != 1) {
    throw DimensionError("backward() needs a single-element tensor, got " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.clear();
  }
  node_->grad_buffer()[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && !n->grad.empty()) n->backward(*n);
  }
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  const auto& n = checked();
  return Tensor(n.shape, n.value, false);
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone(bool requires_grad) const {
  const auto& n = checked();
  return Tensor(n.shape, n.value, requires_grad);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace camo
