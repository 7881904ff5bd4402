#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gamekd/errors.hpp"

namespace gamekd {

namespace detail {
struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the define-by-run graph. Nodes are created by the forward
// pass and hold everything needed to replay the adjoint step: the input
// nodes and a closure that scatters this node's gradient into them.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad; // empty until backward touches it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return value.size(); }
  bool tracked() const { return requires_grad || static_cast<bool>(backprop); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};
} // namespace detail

// Dense 64-bit float tensor participating in reverse-mode differentiation.
// Copies share the underlying node (handle semantics); `clone` detaches.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node()->shape; }
  int rank() const { return static_cast<int>(node()->shape.size()); }
  int rows() const;
  int cols() const;
  std::size_t size() const { return node()->value.size(); }

  std::span<const double> data() const { return node()->value; }
  std::span<double> data() { return node()->value; }
  double operator[](std::size_t i) const { return node()->value[i]; }
  double at(int r, int c) const;

  // Scalar payload; throws InputError unless size() == 1.
  double value() const;

  bool requires_grad() const { return node()->requires_grad; }
  void set_requires_grad(bool on) { node()->requires_grad = on; }

  bool has_grad() const { return !node()->grad.empty(); }
  std::span<const double> grad() const { return node()->grad; }
  void zero_grad() {
    if (has_grad()) node()->grad.assign(size(), 0.0);
  }

  // Reverse pass from this scalar. Gradients accumulate into every tracked
  // tensor reachable through the recorded operations.
  void backward() const;

  // Value copy detached from the graph.
  Tensor clone(bool requires_grad = false) const;

  detail::NodePtr node_handle() const { return node_; }

private:
  friend Tensor make_op(std::vector<int> shape, std::vector<double> value,
                        std::vector<detail::NodePtr> parents,
                        std::function<void(detail::TensorNode&)> fn);
  const detail::NodePtr& node() const;
  detail::NodePtr node_;
};

std::string shape_str(const std::vector<int>& s);

// ---- primitive operations -------------------------------------------------
// Every primitive records its adjoint when any input is tracked, so that a
// later backward() replays them in reverse order of creation.

Tensor matmul(const Tensor& a, const Tensor& b); // [m×k]·[k×n] or [k]·[k×n]
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b); // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise
Tensor div(const Tensor& a, const Tensor& b); // elementwise
Tensor add_row(const Tensor& m, const Tensor& row); // [s×d] + [d]
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor gelu(const Tensor& a); // exact erf form
Tensor softmax(const Tensor& a); // rank-1 whole, rank-2 per row
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Mean over rows of −Σ target·log softmax(logits). Differentiable w.r.t.
// both logits and targets. Rank-1 inputs are treated as a single row.
Tensor cross_entropy(const Tensor& logits, const Tensor& target_probs);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);       // -> scalar
Tensor mean_rows(const Tensor& a); // [s×d] -> [d]
Tensor take_row(const Tensor& a, int r); // [s×d] -> [d]
Tensor take_rows(const Tensor& a, std::span<const int> idx); // gather rows
Tensor slice_rows(const Tensor& a, int start, int n);
Tensor slice_cols(const Tensor& a, int start, int n);
Tensor concat_cols(std::span<const Tensor> parts);

Tensor one_hot(int index, int classes); // constant row vector

// ---- gradient oracle --------------------------------------------------------

// Compares analytic gradients of f (a deterministic scalar-valued closure
// over `inputs`) against central finite differences at step h. Returns the
// max relative error with denominator max(|analytic|, |numeric|, 1e-8).
// Inputs with requires_grad == false are excluded. Throws NumericError on
// non-finite values.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                  double h = 1e-5);

} // namespace gamekd
