#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gdsr/errors.hpp"

namespace gdsr {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorNode {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  Shape shape;
  Array values;
  Array grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  // Pulls this node's grad into its parents' grads. Null for leaves.
  std::function<void(TensorNode<S>&)> backprop;

  void ensure_grad() {
    if (grad.size() != values.size()) grad = Array::Zero(values.size());
  }
};

/// Dense N-d array of scalars with optional reverse-mode gradient tracking.
/// Copies are shallow: a Tensor is a handle to a shared graph node. Forward
/// operations (nn_ops.hpp, diffusion.hpp) build the graph; backward()
/// populates gradients of every reachable requires_grad tensor.
template <typename S>
class Tensor {
 public:
  using Array = typename TensorNode<S>::Array;

  Tensor() : node_(std::make_shared<TensorNode<S>>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_->values = Array::Zero(numel(shape));
    t.node_->shape = std::move(shape);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_array(Shape shape, Array values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values for shape " + shape_str(shape));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S v) {
    return from_array({1}, Array::Constant(1, v));
  }

  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->values.size(); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  Array& values() { return node_->values; }
  const Array& values() const { return node_->values; }
  S value() const { return node_->values(0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  Array& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const Array& grad() const {
    if (!has_grad())
      throw NumericError("tensor: gradient requested but never populated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0); }

  /// Same values, no graph history, no gradient requirement.
  Tensor detach() const {
    return from_array(node_->shape, node_->values, false);
  }

  TensorNode<S>* node() { return node_.get(); }
  const TensorNode<S>* node() const { return node_.get(); }
  std::shared_ptr<TensorNode<S>>& node_ptr() { return node_; }
  const std::shared_ptr<TensorNode<S>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

namespace detail {

inline void expect_rank(const Shape& s, int rank, const char* op) {
  if (static_cast<int>(s.size()) != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(s));
}

/// Throws NumericError naming the op when a forward result is not finite.
template <typename S>
void check_finite(const typename TensorNode<S>::Array& v, const char* op) {
  if (!v.allFinite())
    throw NumericError(std::string("numeric fault: non-finite value produced by ") + op);
}

/// Assembles an op node: result values, parent links, backward closure.
/// requires_grad is inherited from the parents; the closure is dropped when
/// no parent needs gradients.
template <typename S>
Tensor<S> make_op(const char* op, Shape shape, typename TensorNode<S>::Array values,
                  std::vector<Tensor<S>> parents,
                  std::function<void(TensorNode<S>&)> backprop) {
  check_finite<S>(values, op);
  Tensor<S> out = Tensor<S>::from_array(std::move(shape), std::move(values));
  TensorNode<S>* n = out.node();
  n->op = op;
  bool needs = false;
  for (auto& p : parents) {
    needs = needs || p.requires_grad();
    n->parents.push_back(p.node_ptr());
  }
  n->requires_grad = needs;
  if (needs) n->backprop = std::move(backprop);
  return out;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls (reset them with zero_grad or the optimizer helpers); interior op
/// gradients are transient and re-zeroed at the start of every sweep.
/// Deterministic: the traversal order is a pure function of graph
/// structure.
template <typename S>
void backward(Tensor<S>& loss) {
  if (loss.size() != 1)
    throw NumericError("backward: loss must be a scalar, got shape " +
                       shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // nothing reachable requires gradients

  // Iterative post-order DFS; reverse gives a topological order.
  std::vector<TensorNode<S>*> order;
  std::unordered_set<const TensorNode<S>*> seen;
  struct Frame {
    TensorNode<S>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode<S>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (TensorNode<S>* n : order) {
    if (!n->backprop) continue;  // leaves keep their accumulated grads
    n->ensure_grad();
    n->grad.setZero();
  }
  loss.grad()(0) += S{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>* n = *it;
    if (n->backprop && n->grad.size() == n->values.size()) n->backprop(*n);
  }
}

}  // namespace gdsr
