#pragma once

// Minimal reverse-mode differentiation over dense row-major tensors.
//
// A Graph<T> is a tape of op records in creation order, which is also a
// topological order. Builders evaluate eagerly; forward() re-runs the whole
// tape after new inputs are fed or parameters change, and backward() produces
// exact vector-Jacobian products for every node that depends on a
// requires-grad leaf.
//
// Subgradient conventions: relu'(0) = 0, sign(0) = 0 for L1, clamp' = 0 on
// and outside the clamp bounds.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "touchsdf/errors.hpp"

namespace touchsdf::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor({1}, v); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Leading dimension for rank >= 2, 1 for vectors.
  std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  T item() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

enum class OpKind {
  Leaf,
  Input,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  Tanh,
  Sin,
  Cos,
  Clamp,
  Concat,
  Gather,
  L1Loss,
  SqNorm,
  Mean,
  Sum,
  Custom,
};

const char* op_name(OpKind kind);

// User-defined node. `vjp` returns one gradient per input (same shapes).
// `kink_offsets`, when set, reports signed offsets of the inputs from the
// op's non-differentiable points so gradient checks can skip them.
template <typename T>
struct CustomOp {
  using Inputs = std::vector<const Tensor<T>*>;
  std::string name;
  std::function<Tensor<T>(const Inputs&)> forward;
  std::function<std::vector<Tensor<T>>(const Inputs&, const Tensor<T>& out, const Tensor<T>& grad_out)> vjp;
  std::function<std::vector<double>(const Inputs&)> kink_offsets;
};

struct Var {
  std::size_t index = 0;
  friend bool operator==(Var a, Var b) { return a.index == b.index; }
};

template <typename T>
class Graph {
 public:
  using TensorMap = std::map<std::string, Tensor<T>>;

  // Placeholder fed by name in forward(); zero-filled until then.
  Var input(const std::string& name, Shape shape);
  // Leaf owning its value.
  Var variable(Tensor<T> value, bool requires_grad = false);
  Var constant(Tensor<T> value) { return variable(std::move(value), false); }
  // Leaf reading caller-owned storage at every forward(); the storage must
  // outlive the graph. Gradient checks perturb it in place.
  Var parameter(Tensor<T>* storage, bool requires_grad = true);

  Var matmul(Var a, Var b);     // [m,k] x [k,n]
  Var add(Var a, Var b);        // same shape, or b = [n] / [1,n] broadcast over rows of a
  Var sub(Var a, Var b);        // same broadcasting as add
  Var mul(Var a, Var b);        // elementwise, same shape
  Var scale(Var a, double c);
  Var relu(Var a);
  Var tanh(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var clamp(Var a, double lo, double hi);
  Var concat(Var a, Var b);     // along the last axis, equal leading dims
  Var gather(Var table, std::vector<std::size_t> rows);  // rows of a 2-D table
  Var l1_loss(Var a, Var b);    // mean |a - b|
  Var sq_norm(Var a);           // sum a^2
  Var mean(Var a);
  Var sum(Var a);
  Var custom(std::vector<Var> inputs, CustomOp<T> op);

  void set_output(const std::string& name, Var v) { outputs_[name] = v; }

  // Feeds inputs by name and re-evaluates the tape. Throws ShapeMismatch on
  // unknown names or wrong shapes.
  TensorMap forward(const TensorMap& inputs = {});
  // Recomputes every node from current leaf values.
  void recompute();
  // Reverse sweep from a scalar node. Throws NotScalar otherwise.
  void backward(Var wrt);

  const Tensor<T>& value(Var v) const;
  const Tensor<T>& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.index).kind; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<Var> trainable_leaves() const;
  Tensor<T>* mutable_leaf(Var v);

  // Signed offsets of every element feeding a kink (relu, clamp, L1, custom)
  // from its non-differentiable point.
  std::vector<double> kink_offsets() const;

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> in;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T>* external = nullptr;
    bool requires_grad = false;
    double lo = 0.0;
    double hi = 0.0;
    std::string name;
    std::vector<std::size_t> rows;
    std::size_t custom = 0;
  };

  Var push(Node node);
  void evaluate(Node& node);
  const Tensor<T>& val(std::size_t i) const;
  Tensor<T>& accum(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<CustomOp<T>> customs_;
  std::map<std::string, std::size_t> inputs_;
  std::map<std::string, Var> outputs_;
};

// Named parameter tensors in insertion order.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> value);
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  // deque-like stability is not needed: graphs bind after the set is complete
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig hyper;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update in place. Moments are created on first use.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Central finite differences on every element of every trainable leaf of the
// graph, compared against backward(). Coordinates whose perturbation moves a
// kink input across (or within 10h of) its kink are skipped.
// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(Graph<double>& graph, Var output, const Graph<double>::TensorMap& inputs,
                                double h = 1e-5, double floor = 1e-4);

}  // namespace touchsdf::ad
