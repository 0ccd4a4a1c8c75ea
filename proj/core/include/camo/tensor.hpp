#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace camo {

using Shape = std::vector<std::size_t>;

/// Product of extents; 1 for a rank-0 shape.
std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Thread-local switch for graph recording. Inference paths disable it.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Real>
struct TensorNode {
  using BackwardFn = std::function<void(TensorNode&)>;

  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackwardFn backward;  // reads this->grad, accumulates into parents

  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

/// Dense row-major array participating in reverse-mode differentiation.
///
/// Copies share the underlying node (handle semantics); values are never
/// modified by a backward pass. Only leaves expose mutable values.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using Node = TensorNode<Real>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  /// Result of a differentiable operation. The backward closure is kept only
  /// when graph recording is on and some parent requires a gradient.
  static Tensor from_op(Shape shape, std::vector<Real> values,
                        std::vector<Tensor> parents, typename Node::BackwardFn backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const Real> values() const;
  Real operator[](std::size_t i) const { return values()[i]; }
  Real item() const;
  std::span<Real> mutable_values();

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void clear_grad();

  /// Reverse sweep from a single-element tensor, seeding d(self)/d(self) = 1.
  void backward() const;

  Tensor detach() const;
  /// Deep copy as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  template <typename Other>
  Tensor<Other> cast(bool requires_grad) const {
    const auto v = values();
    return Tensor<Other>(shape(), std::vector<Other>(v.begin(), v.end()), requires_grad);
  }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  const Node& checked() const;

  std::shared_ptr<Node> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace camo
