#include "touchsdf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace touchsdf::ad {

namespace {

#if defined(__GLIBC__)
// Tapes allocate and free multi-megabyte tensors every step; without this
// glibc hands each one back to the kernel and training spends more time in
// page faults than in GEMM.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

}  // namespace

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> as_mat(const Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<RowMat<T>> as_mat(Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

bool broadcast_row(const Shape& a, const Shape& b) {
  if (a.size() != 2) return false;
  if (b.size() == 1) return b[0] == a[1];
  return b.size() == 2 && b[0] == 1 && b[1] == a[1];
}

template <typename T>
void resize(Tensor<T>& t, const Shape& shape) {
  t.shape = shape;
  t.data.resize(numel(shape));
}

int sign_class(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw ShapeMismatch("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                        shape_str(shape));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data.size() != 1) throw NotScalar("tensor of shape " + shape_str(shape) + " is not a scalar");
  return data[0];
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Input: return "input";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Clamp: return "clamp";
    case OpKind::Concat: return "concat";
    case OpKind::Gather: return "gather";
    case OpKind::L1Loss: return "l1_loss";
    case OpKind::SqNorm: return "sq_norm";
    case OpKind::Mean: return "mean";
    case OpKind::Sum: return "sum";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Graph construction

template <typename T>
const Tensor<T>& Graph<T>::val(std::size_t i) const {
  const Node& n = nodes_[i];
  return n.external ? *n.external : n.value;
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return val(v.index);
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  return nodes_.at(v.index).grad;
}

template <typename T>
Var Graph<T>::push(Node node) {
  for (auto i : node.in) {
    if (i >= nodes_.size()) throw InvalidArgument("node input refers to a later node");
    node.requires_grad = node.requires_grad || nodes_[i].requires_grad;
  }
  nodes_.push_back(std::move(node));
  evaluate(nodes_.back());
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::input(const std::string& name, Shape shape) {
  if (inputs_.count(name)) throw InvalidArgument("duplicate input name " + name);
  Node n;
  n.kind = OpKind::Input;
  n.name = name;
  n.value = Tensor<T>(std::move(shape));
  auto v = push(std::move(n));
  inputs_[name] = v.index;
  return v;
}

template <typename T>
Var Graph<T>::variable(Tensor<T> value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::parameter(Tensor<T>* storage, bool requires_grad) {
  if (!storage) throw InvalidArgument("null parameter storage");
  Node n;
  n.kind = OpKind::Leaf;
  n.external = storage;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const auto& sa = value(a).shape;
  const auto& sb = value(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeMismatch("matmul " + shape_str(sa) + " x " + shape_str(sb));
  }
  Node n;
  n.kind = OpKind::MatMul;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const auto& sa = value(a).shape;
  const auto& sb = value(b).shape;
  if (sa != sb && !broadcast_row(sa, sb)) throw ShapeMismatch("add " + shape_str(sa) + " + " + shape_str(sb));
  Node n;
  n.kind = OpKind::Add;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  const auto& sa = value(a).shape;
  const auto& sb = value(b).shape;
  if (sa != sb && !broadcast_row(sa, sb)) throw ShapeMismatch("sub " + shape_str(sa) + " - " + shape_str(sb));
  Node n;
  n.kind = OpKind::Sub;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  if (value(a).shape != value(b).shape) {
    throw ShapeMismatch("mul " + shape_str(value(a).shape) + " * " + shape_str(value(b).shape));
  }
  Node n;
  n.kind = OpKind::Mul;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::scale(Var a, double c) {
  Node n;
  n.kind = OpKind::Scale;
  n.in = {a.index};
  n.lo = c;
  return push(std::move(n));
}

#define TOUCHSDF_UNARY(fn, KIND)   \
  template <typename T>            \
  Var Graph<T>::fn(Var a) {        \
    Node n;                        \
    n.kind = OpKind::KIND;         \
    n.in = {a.index};              \
    return push(std::move(n));     \
  }

TOUCHSDF_UNARY(relu, Relu)
TOUCHSDF_UNARY(tanh, Tanh)
TOUCHSDF_UNARY(sin, Sin)
TOUCHSDF_UNARY(cos, Cos)
TOUCHSDF_UNARY(sq_norm, SqNorm)
TOUCHSDF_UNARY(mean, Mean)
TOUCHSDF_UNARY(sum, Sum)
#undef TOUCHSDF_UNARY

template <typename T>
Var Graph<T>::clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp needs lo <= hi");
  Node n;
  n.kind = OpKind::Clamp;
  n.in = {a.index};
  n.lo = lo;
  n.hi = hi;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::concat(Var a, Var b) {
  const auto& sa = value(a).shape;
  const auto& sb = value(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) {
    throw ShapeMismatch("concat " + shape_str(sa) + " | " + shape_str(sb));
  }
  Node n;
  n.kind = OpKind::Concat;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::gather(Var table, std::vector<std::size_t> rows) {
  const auto& st = value(table).shape;
  if (st.size() != 2) throw ShapeMismatch("gather needs a 2-D table, got " + shape_str(st));
  for (auto r : rows) {
    if (r >= st[0]) throw ShapeMismatch("gather row " + std::to_string(r) + " out of " + shape_str(st));
  }
  Node n;
  n.kind = OpKind::Gather;
  n.in = {table.index};
  n.rows = std::move(rows);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::l1_loss(Var a, Var b) {
  if (value(a).shape != value(b).shape) {
    throw ShapeMismatch("l1_loss " + shape_str(value(a).shape) + " vs " + shape_str(value(b).shape));
  }
  Node n;
  n.kind = OpKind::L1Loss;
  n.in = {a.index, b.index};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::custom(std::vector<Var> inputs, CustomOp<T> op) {
  if (!op.forward || !op.vjp) throw InvalidArgument("custom op needs forward and vjp");
  Node n;
  n.kind = OpKind::Custom;
  for (auto v : inputs) n.in.push_back(v.index);
  n.custom = customs_.size();
  n.name = op.name;
  customs_.push_back(std::move(op));
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Evaluation

template <typename T>
void Graph<T>::evaluate(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor<T>& { return val(n.in[k]); };
  auto unary = [&](auto f) {
    const auto& a = in(0);
    resize(n.value, a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = f(a[i]);
  };
  switch (n.kind) {
    case OpKind::Leaf:
    case OpKind::Input:
      return;
    case OpKind::MatMul: {
      const auto& a = in(0);
      const auto& b = in(1);
      resize(n.value, {a.shape[0], b.shape[1]});
      as_mat(n.value).noalias() = as_mat(a) * as_mat(b);
      return;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const auto& a = in(0);
      const auto& b = in(1);
      const T sgn = n.kind == OpKind::Add ? T(1) : T(-1);
      resize(n.value, a.shape);
      if (a.size() == b.size()) {
        for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] + sgn * b[i];
      } else {
        const std::size_t c = b.size();
        for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] + sgn * b[i % c];
      }
      return;
    }
    case OpKind::Mul: {
      const auto& a = in(0);
      const auto& b = in(1);
      resize(n.value, a.shape);
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * b[i];
      return;
    }
    case OpKind::Scale: {
      const T c = static_cast<T>(n.lo);
      unary([c](T x) { return c * x; });
      return;
    }
    case OpKind::Relu:
      unary([](T x) { return x > T(0) ? x : T(0); });
      return;
    case OpKind::Tanh:
      unary([](T x) { return std::tanh(x); });
      return;
    case OpKind::Sin:
      unary([](T x) { return std::sin(x); });
      return;
    case OpKind::Cos:
      unary([](T x) { return std::cos(x); });
      return;
    case OpKind::Clamp: {
      const T lo = static_cast<T>(n.lo);
      const T hi = static_cast<T>(n.hi);
      unary([lo, hi](T x) { return std::clamp(x, lo, hi); });
      return;
    }
    case OpKind::Concat: {
      const auto& a = in(0);
      const auto& b = in(1);
      const std::size_t m = a.shape[0], p = a.shape[1], q = b.shape[1];
      resize(n.value, {m, p + q});
      for (std::size_t r = 0; r < m; ++r) {
        std::copy_n(a.data.begin() + r * p, p, n.value.data.begin() + r * (p + q));
        std::copy_n(b.data.begin() + r * q, q, n.value.data.begin() + r * (p + q) + p);
      }
      return;
    }
    case OpKind::Gather: {
      const auto& t = in(0);
      const std::size_t d = t.shape[1];
      resize(n.value, {n.rows.size(), d});
      for (std::size_t r = 0; r < n.rows.size(); ++r) {
        std::copy_n(t.data.begin() + n.rows[r] * d, d, n.value.data.begin() + r * d);
      }
      return;
    }
    case OpKind::L1Loss: {
      const auto& a = in(0);
      const auto& b = in(1);
      double total = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(static_cast<double>(a[i]) - b[i]);
      n.value = Tensor<T>::scalar(static_cast<T>(a.size() ? total / a.size() : 0.0));
      return;
    }
    case OpKind::SqNorm: {
      double total = 0.0;
      for (T x : in(0).data) total += static_cast<double>(x) * x;
      n.value = Tensor<T>::scalar(static_cast<T>(total));
      return;
    }
    case OpKind::Mean:
    case OpKind::Sum: {
      const auto& a = in(0);
      double total = 0.0;
      for (T x : a.data) total += x;
      if (n.kind == OpKind::Mean && a.size()) total /= static_cast<double>(a.size());
      n.value = Tensor<T>::scalar(static_cast<T>(total));
      return;
    }
    case OpKind::Custom: {
      typename CustomOp<T>::Inputs args;
      for (auto i : n.in) args.push_back(&val(i));
      n.value = customs_[n.custom].forward(args);
      return;
    }
  }
}

template <typename T>
void Graph<T>::recompute() {
  for (auto& n : nodes_) evaluate(n);
}

template <typename T>
typename Graph<T>::TensorMap Graph<T>::forward(const TensorMap& inputs) {
  for (const auto& [name, t] : inputs) {
    auto it = inputs_.find(name);
    if (it == inputs_.end()) throw ShapeMismatch("graph has no input named " + name);
    auto& node = nodes_[it->second];
    if (node.value.shape != t.shape) {
      throw ShapeMismatch("input " + name + " expects " + shape_str(node.value.shape) + ", got " +
                          shape_str(t.shape));
    }
    node.value.data = t.data;
  }
  recompute();
  TensorMap out;
  for (const auto& [name, v] : outputs_) out[name] = value(v);
  return out;
}

template <typename T>
Tensor<T>& Graph<T>::accum(std::size_t i) {
  return nodes_[i].grad;
}

template <typename T>
void Graph<T>::backward(Var wrt) {
  if (wrt.index >= nodes_.size()) throw InvalidArgument("unknown node");
  if (value(wrt).size() != 1) throw NotScalar("backward needs a scalar, got " + shape_str(value(wrt).shape));
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad) {
      n.grad.shape = val(i).shape;
      n.grad.data.assign(val(i).size(), T(0));
    } else {
      n.grad = Tensor<T>();
    }
  }
  if (!nodes_[wrt.index].requires_grad) return;
  nodes_[wrt.index].grad.data[0] = T(1);

  for (std::size_t idx = wrt.index + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.requires_grad || n.in.empty()) continue;
    const Tensor<T>& g = n.grad;
    auto needs = [&](std::size_t k) { return nodes_[n.in[k]].requires_grad; };
    auto in = [&](std::size_t k) -> const Tensor<T>& { return val(n.in[k]); };
    auto unary_vjp = [&](auto dfdx) {
      if (!needs(0)) return;
      const auto& a = in(0);
      auto& da = accum(n.in[0]);
      for (std::size_t i = 0; i < a.size(); ++i) da[i] += g[i] * dfdx(a[i], n.value[i]);
    };
    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::Input:
        break;
      case OpKind::MatMul:
        if (needs(0)) as_mat(accum(n.in[0])).noalias() += as_mat(g) * as_mat(in(1)).transpose();
        if (needs(1)) as_mat(accum(n.in[1])).noalias() += as_mat(in(0)).transpose() * as_mat(g);
        break;
      case OpKind::Add:
      case OpKind::Sub: {
        const T sgn = n.kind == OpKind::Add ? T(1) : T(-1);
        if (needs(0)) {
          auto& da = accum(n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (needs(1)) {
          auto& db = accum(n.in[1]);
          const std::size_t c = db.size();
          for (std::size_t i = 0; i < g.size(); ++i) db[i % c] += sgn * g[i];
        }
        break;
      }
      case OpKind::Mul:
        if (needs(0)) {
          auto& da = accum(n.in[0]);
          const auto& b = in(1);
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
        }
        if (needs(1)) {
          auto& db = accum(n.in[1]);
          const auto& a = in(0);
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
        }
        break;
      case OpKind::Scale: {
        const T c = static_cast<T>(n.lo);
        unary_vjp([c](T, T) { return c; });
        break;
      }
      case OpKind::Relu:
        unary_vjp([](T x, T) { return x > T(0) ? T(1) : T(0); });
        break;
      case OpKind::Tanh:
        unary_vjp([](T, T y) { return T(1) - y * y; });
        break;
      case OpKind::Sin:
        unary_vjp([](T x, T) { return std::cos(x); });
        break;
      case OpKind::Cos:
        unary_vjp([](T x, T) { return -std::sin(x); });
        break;
      case OpKind::Clamp: {
        const T lo = static_cast<T>(n.lo);
        const T hi = static_cast<T>(n.hi);
        unary_vjp([lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
        break;
      }
      case OpKind::Concat: {
        const std::size_t m = in(0).shape[0], p = in(0).shape[1], q = in(1).shape[1];
        for (std::size_t r = 0; r < m; ++r) {
          if (needs(0)) {
            auto& da = accum(n.in[0]);
            for (std::size_t c = 0; c < p; ++c) da[r * p + c] += g[r * (p + q) + c];
          }
          if (needs(1)) {
            auto& db = accum(n.in[1]);
            for (std::size_t c = 0; c < q; ++c) db[r * q + c] += g[r * (p + q) + p + c];
          }
        }
        break;
      }
      case OpKind::Gather: {
        if (!needs(0)) break;
        auto& dt = accum(n.in[0]);
        const std::size_t d = in(0).shape[1];
        for (std::size_t r = 0; r < n.rows.size(); ++r) {
          for (std::size_t c = 0; c < d; ++c) dt[n.rows[r] * d + c] += g[r * d + c];
        }
        break;
      }
      case OpKind::L1Loss: {
        const auto& a = in(0);
        const auto& b = in(1);
        const T scale = a.size() ? g[0] / static_cast<T>(a.size()) : T(0);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const T s = static_cast<T>(sign_class(static_cast<double>(a[i]) - b[i])) * scale;
          if (needs(0)) accum(n.in[0])[i] += s;
          if (needs(1)) accum(n.in[1])[i] -= s;
        }
        break;
      }
      case OpKind::SqNorm: {
        if (!needs(0)) break;
        const auto& a = in(0);
        auto& da = accum(n.in[0]);
        for (std::size_t i = 0; i < a.size(); ++i) da[i] += T(2) * g[0] * a[i];
        break;
      }
      case OpKind::Mean: {
        const auto& a = in(0);
        if (!needs(0)) break;
        auto& da = accum(n.in[0]);
        const T s = g[0] / static_cast<T>(a.size());
        for (auto& v : da.data) v += s;
        break;
      }
      case OpKind::Sum: {
        if (!needs(0)) break;
        for (auto& v : accum(n.in[0]).data) v += g[0];
        break;
      }
      case OpKind::Custom: {
        typename CustomOp<T>::Inputs args;
        for (auto i : n.in) args.push_back(&val(i));
        auto grads = customs_[n.custom].vjp(args, n.value, g);
        if (grads.size() != n.in.size()) throw ShapeMismatch("custom op " + n.name + " returned wrong gradient count");
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          if (!needs(k)) continue;
          auto& dk = accum(n.in[k]);
          if (grads[k].size() != dk.size()) throw ShapeMismatch("custom op " + n.name + " gradient shape");
          for (std::size_t i = 0; i < dk.size(); ++i) dk[i] += grads[k][i];
        }
        break;
      }
    }
  }
}

template <typename T>
std::vector<Var> Graph<T>::trainable_leaves() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Leaf && nodes_[i].requires_grad) out.push_back(Var{i});
  }
  return out;
}

template <typename T>
Tensor<T>* Graph<T>::mutable_leaf(Var v) {
  auto& n = nodes_.at(v.index);
  if (n.kind != OpKind::Leaf) throw InvalidArgument("not a leaf");
  return n.external ? n.external : &n.value;
}

template <typename T>
std::vector<double> Graph<T>::kink_offsets() const {
  std::vector<double> out;
  for (const auto& n : nodes_) {
    switch (n.kind) {
      case OpKind::Relu:
        for (T x : val(n.in[0]).data) out.push_back(x);
        break;
      case OpKind::Clamp:
        for (T x : val(n.in[0]).data) {
          out.push_back(x - n.lo);
          out.push_back(n.hi - x);
        }
        break;
      case OpKind::L1Loss: {
        const auto& a = val(n.in[0]);
        const auto& b = val(n.in[1]);
        for (std::size_t i = 0; i < a.size(); ++i) out.push_back(static_cast<double>(a[i]) - b[i]);
        break;
      }
      case OpKind::Custom:
        if (customs_[n.custom].kink_offsets) {
          typename CustomOp<T>::Inputs args;
          for (auto i : n.in) args.push_back(&val(i));
          for (double d : customs_[n.custom].kink_offsets(args)) out.push_back(d);
        }
        break;
      default:
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters and optimizer

template <typename T>
Tensor<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw InvalidArgument("duplicate parameter " + name);
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  for (auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw InvalidArgument("no parameter named " + name);
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  return const_cast<ParameterSet<T>*>(this)->get(name);
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeMismatch("adam: parameter/gradient count differs");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape);
      state.v.emplace_back(p->shape);
    }
  }
  if (state.m.size() != params.size()) throw ShapeMismatch("adam: state built for a different parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape != grads[k]->shape || state.m[k].shape != params[k]->shape) {
      throw ShapeMismatch("adam: shape mismatch for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    const auto& g = grads[k]->data;
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(p[i] - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult check_gradients(Graph<double>& graph, Var output, const Graph<double>::TensorMap& inputs,
                                double h, double floor) {
  graph.forward(inputs);
  const auto base_kinks = graph.kink_offsets();
  graph.backward(output);

  GradCheckResult result;
  for (Var leaf : graph.trainable_leaves()) {
    const Tensor<double> analytic = graph.grad(leaf);
    Tensor<double>* storage = graph.mutable_leaf(leaf);
    for (std::size_t i = 0; i < storage->size(); ++i) {
      const double orig = (*storage)[i];
      (*storage)[i] = orig + h;
      graph.recompute();
      const double fp = graph.value(output).item();
      const auto kp = graph.kink_offsets();
      (*storage)[i] = orig - h;
      graph.recompute();
      const double fm = graph.value(output).item();
      const auto km = graph.kink_offsets();
      (*storage)[i] = orig;

      bool near_kink = false;
      for (std::size_t j = 0; j < base_kinks.size() && !near_kink; ++j) {
        const double b = base_kinks[j];
        if (sign_class(kp[j]) != sign_class(b) || sign_class(km[j]) != sign_class(b)) near_kink = true;
        if (std::abs(b) < 10.0 * h && (kp[j] != b || km[j] != b)) near_kink = true;
      }
      if (near_kink) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  graph.recompute();
  graph.backward(output);
  return result;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;
template void adam_step<float>(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&,
                               AdamState<float>&);
template void adam_step<double>(const std::vector<Tensor<double>*>&, const std::vector<const Tensor<double>*>&,
                                AdamState<double>&);

}  // namespace touchsdf::ad
