#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iarn/error.hpp"
#include "iarn/numerics/tensor.hpp"

namespace iarn {

struct ParamId {
  std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
  friend bool operator==(ParamId, ParamId) = default;
};

/// Named collection of learnable tensors.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value) {
    if (by_name_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    ParamId id{static_cast<std::uint32_t>(tensors_.size())};
    by_name_.emplace(name, id.index);
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return id;
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  Tensor& operator[](ParamId id) { return tensors_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return tensors_.at(id.index); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::optional<ParamId> find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    return ParamId{it->second};
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::uint32_t> by_name_;
};

/// Per-parameter gradient accumulators. Untouched slots stay empty and read as zero.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& params) : shapes_(params.size()), slots_(params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) shapes_[i] = params.at(i).shape();
  }

  std::size_t size() const noexcept { return slots_.size(); }
  bool touched(std::size_t i) const { return !slots_.at(i).empty(); }
  const Shape& shape(std::size_t i) const { return shapes_.at(i); }

  Tensor& slot(std::size_t i) {
    Tensor& t = slots_.at(i);
    if (t.empty()) t = Tensor(shapes_[i]);
    return t;
  }
  Tensor& slot(ParamId id) { return slot(id.index); }

  /// Slot i as stored; empty when untouched.
  const Tensor& view(std::size_t i) const { return slots_.at(i); }

  /// Copy of slot i, zero-filled when untouched.
  Tensor dense(std::size_t i) const {
    const Tensor& t = slots_.at(i);
    return t.empty() ? Tensor(shapes_[i]) : t;
  }
  Tensor dense(ParamId id) const { return dense(id.index); }

  void add_scaled(const Gradients& other, double weight) {
    if (other.size() != size()) throw ShapeError("gradient sets have different parameter counts");
    for (std::size_t i = 0; i < size(); ++i) {
      if (!other.touched(i)) continue;
      Tensor& dst = slot(i);
      const Tensor& src = other.slots_[i];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
    }
  }

  void scale(double s) {
    for (auto& t : slots_) {
      for (auto& v : t.data()) v *= s;
    }
  }

  friend bool operator==(const Gradients&, const Gradients&) = default;

 private:
  std::vector<Shape> shapes_;
  std::vector<Tensor> slots_;
};

struct Var {
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode recorder over vector-valued primitives. Values are computed eagerly as nodes are
/// appended, so node order is a topological order and backward() walks it in reverse.
class Tape {
 public:
  explicit Tape(const ParameterStore& params)
      : params_(&params), param_leaf_(params.size(), Var::npos) {
    nodes_.reserve(256);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  const ParameterStore& parameters() const noexcept { return *params_; }

  const Tensor& value(Var v) const {
    const Node& n = node(v);
    return n.op == Op::parameter ? (*params_)[ParamId{n.param}] : n.value;
  }
  double scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw ContractError("scalar() on non-scalar node of shape " + shape_string(t.shape()));
    return t[0];
  }

  // --- leaves -------------------------------------------------------------

  Var parameter(ParamId id) {
    if (id.index >= param_leaf_.size()) throw LookupError("unknown parameter id");
    if (param_leaf_[id.index] != Var::npos) return Var{param_leaf_[id.index]};
    Node n;
    n.op = Op::parameter;
    n.param = id.index;
    n.grad = true;
    Var v = push(std::move(n));
    param_leaf_[id.index] = v.id;
    return v;
  }

  /// Row `r` of matrix parameter `id` as a vector (embedding lookup).
  Var row(ParamId id, std::size_t r) {
    const Tensor& m = (*params_)[id];
    if (m.rank() != 2 || r >= m.rows()) {
      throw LookupError("row " + std::to_string(r) + " out of range for parameter of shape " +
                        shape_string(m.shape()));
    }
    Node n;
    n.op = Op::row;
    n.param = id.index;
    n.extra = r;
    n.grad = true;
    n.value = Tensor::vector(m.cols());
    std::copy(m.row(r).begin(), m.row(r).end(), n.value.data().begin());
    return push(std::move(n));
  }

  Var constant(Tensor t) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(t);
    return push(std::move(n));
  }

  // --- primitives -----------------------------------------------------------

  Var matvec(Var a, Var x) {
    Node n = make(Op::matvec, {a, x});
    n.value = iarn::matvec(value(a), value(x));
    return push(std::move(n));
  }

  /// W x + b as a single node.
  Var affine(Var W, Var x, Var b) {
    Node n = make(Op::affine, {W, x, b});
    n.value = iarn::matvec(value(W), value(x));
    accumulate_into(n.value, value(b), "affine");
    return push(std::move(n));
  }

  /// W1 x1 + W2 x2 + b as a single node.
  Var affine(Var W1, Var x1, Var W2, Var x2, Var b) {
    Node n = make(Op::affine, {W1, x1, W2, x2, b});
    n.value = iarn::matvec(value(W1), value(x1));
    accumulate_into(n.value, iarn::matvec(value(W2), value(x2)), "affine");
    accumulate_into(n.value, value(b), "affine");
    return push(std::move(n));
  }

  Var add(Var a, Var b) { return sum({a, b}); }
  Var add(Var a, Var b, Var c) { return sum({a, b, c}); }

  Var sum(std::initializer_list<Var> terms) { return sum(std::span<const Var>(terms.begin(), terms.size())); }
  Var sum(std::span<const Var> terms) {
    if (terms.empty()) throw ContractError("sum of zero terms");
    Node n = make(Op::sum, terms);
    n.value = value(terms[0]);
    for (std::size_t i = 1; i < terms.size(); ++i) {
      const Tensor& t = value(terms[i]);
      require_same_shape(n.value, t, "sum");
      for (std::size_t k = 0; k < t.size(); ++k) n.value[k] += t[k];
    }
    return push(std::move(n));
  }

  Var sub(Var a, Var b) {
    Node n = make(Op::sub, {a, b});
    const Tensor& y = value(b);
    n.value = value(a);
    require_same_shape(n.value, y, "sub");
    for (std::size_t k = 0; k < y.size(); ++k) n.value[k] -= y[k];
    return push(std::move(n));
  }

  /// Element-wise product.
  Var mul(Var a, Var b) {
    Node n = make(Op::mul, {a, b});
    const Tensor& y = value(b);
    n.value = value(a);
    require_same_shape(n.value, y, "mul");
    for (std::size_t k = 0; k < y.size(); ++k) n.value[k] *= y[k];
    return push(std::move(n));
  }

  /// (1 - gate) * prev + gate * cand, with a scalar gate.
  Var blend(Var prev, Var cand, Var gate) {
    Node n = make(Op::blend, {prev, cand, gate});
    const Tensor& p = value(prev);
    const Tensor& c = value(cand);
    require_same_shape(p, c, "blend");
    const double g = scalar(gate);
    n.value = Tensor(p.shape());
    for (std::size_t k = 0; k < p.size(); ++k) n.value[k] = (1.0 - g) * p[k] + g * c[k];
    return push(std::move(n));
  }

  Var relu(Var x) { return unary(Op::relu, x, Activation::relu()); }
  Var sigmoid(Var x) { return unary(Op::sigmoid, x, Activation::sigmoid()); }
  Var tanh(Var x) { return unary(Op::tanh, x, Activation::tanh()); }

  /// PReLU with a learnable scalar slope node.
  Var prelu(Var x, Var alpha) {
    Node n = make(Op::prelu, {x, alpha});
    n.value = activate(value(x), Activation::prelu(scalar(alpha)));
    return push(std::move(n));
  }

  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var concat(std::span<const Var> parts) {
    Node n = make(Op::concat, parts);
    std::size_t total = 0;
    for (Var p : parts) total += value(p).size();
    n.value = Tensor::vector(total);
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data().begin(), t.data().end(), n.value.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += t.size();
    }
    return push(std::move(n));
  }

  /// Inner product, producing a length-1 vector.
  Var dot(Var a, Var b) {
    Node n = make(Op::dot, {a, b});
    n.value = Tensor::vector(1, iarn::dot(value(a).data(), value(b).data()));
    return push(std::move(n));
  }

  /// Element-wise product with a fixed (non-learnable) tensor, e.g. a dropout mask.
  Var mask(Var x, Tensor m) {
    Node n = make(Op::mask, {x});
    require_same_shape(value(x), m, "mask");
    n.value = value(x);
    for (std::size_t k = 0; k < m.size(); ++k) n.value[k] *= m[k];
    n.aux = std::move(m);
    return push(std::move(n));
  }

  /// (x - target)^2 for a scalar node x.
  Var squared_error(Var x, double target) {
    Node n = make(Op::squared_error, {x});
    const double diff = scalar(x) - target;
    n.scalar = target;
    n.value = Tensor::vector(1, diff * diff);
    return push(std::move(n));
  }

  // --- reverse pass ---------------------------------------------------------

  /// Gradients of scalar node `loss` with respect to every parameter. Does not modify the tape, so
  /// calling it repeatedly yields identical results.
  Gradients backward(Var loss) const {
    const Node& root = node(loss);
    if (value(loss).size() != 1) {
      throw ContractError("backward() requires a scalar loss, got shape " + shape_string(value(loss).shape()));
    }
    Gradients grads(*params_);
    if (!root.grad) return grads;

    std::vector<Tensor> adj(nodes_.size());
    adj[loss.id] = Tensor::vector(1, 1.0);

    auto accum = [&](std::uint32_t id) -> Tensor* {
      const Node& n = nodes_[id];
      if (!n.grad) return nullptr;
      if (n.op == Op::parameter) return &grads.slot(n.param);
      if (adj[id].empty()) adj[id] = Tensor(value(Var{id}).shape());
      return &adj[id];
    };

    auto matvec_backward = [&](std::uint32_t a_id, std::uint32_t x_id, const Tensor& g) {
      const Tensor& a = value(Var{a_id});
      const Tensor& x = value(Var{x_id});
      const std::size_t rows = a.rows(), cols = a.cols();
      const double* __restrict gp = g.data().data();
      if (Tensor* da = accum(a_id)) {
        const double* __restrict xp = x.data().data();
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = gp[i];
          if (gi == 0.0) continue;
          double* __restrict r = da->data().data() + i * cols;
          for (std::size_t k = 0; k < cols; ++k) r[k] += gi * xp[k];
        }
      }
      if (Tensor* dx = accum(x_id)) {
        double* __restrict dp = dx->data().data();
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = gp[i];
          if (gi == 0.0) continue;
          const double* __restrict r = a.data().data() + i * cols;
          for (std::size_t k = 0; k < cols; ++k) dp[k] += gi * r[k];
        }
      }
    };

    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
      if (adj[id].empty()) continue;
      const Node& n = nodes_[id];
      const Tensor& g = adj[id];
      switch (n.op) {
        case Op::parameter:
        case Op::constant:
          break;
        case Op::row: {
          auto dst = grads.slot(n.param).row(n.extra);
          for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
          break;
        }
        case Op::matvec:
          matvec_backward(n.in[0], n.in[1], g);
          break;
        case Op::affine: {
          const std::size_t last = n.in.size() - 1;
          for (std::size_t j = 0; j < last; j += 2) matvec_backward(n.in[j], n.in[j + 1], g);
          if (Tensor* d = accum(n.in[last])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k];
          }
          break;
        }
        case Op::sum: {
          for (std::uint32_t in : n.in) {
            if (Tensor* d = accum(in)) {
              for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k];
            }
          }
          break;
        }
        case Op::sub: {
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k];
          }
          if (Tensor* d = accum(n.in[1])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] -= g[k];
          }
          break;
        }
        case Op::mul: {
          const Tensor& a = value(Var{n.in[0]});
          const Tensor& b = value(Var{n.in[1]});
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * b[k];
          }
          if (Tensor* d = accum(n.in[1])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * a[k];
          }
          break;
        }
        case Op::blend: {
          const Tensor& p = value(Var{n.in[0]});
          const Tensor& c = value(Var{n.in[1]});
          const double gate = value(Var{n.in[2]})[0];
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += (1.0 - gate) * g[k];
          }
          if (Tensor* d = accum(n.in[1])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += gate * g[k];
          }
          if (Tensor* d = accum(n.in[2])) {
            double s = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * (c[k] - p[k]);
            (*d)[0] += s;
          }
          break;
        }
        case Op::relu: {
          const Tensor& x = value(Var{n.in[0]});
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) {
              if (x[k] >= 0.0) (*d)[k] += g[k];
            }
          }
          break;
        }
        case Op::sigmoid: {
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * n.value[k] * (1.0 - n.value[k]);
          }
          break;
        }
        case Op::tanh: {
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * (1.0 - n.value[k] * n.value[k]);
          }
          break;
        }
        case Op::prelu: {
          const Tensor& x = value(Var{n.in[0]});
          const double alpha = value(Var{n.in[1]})[0];
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * (x[k] >= 0.0 ? 1.0 : alpha);
          }
          if (Tensor* d = accum(n.in[1])) {
            double s = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) {
              if (x[k] < 0.0) s += g[k] * x[k];
            }
            (*d)[0] += s;
          }
          break;
        }
        case Op::concat: {
          std::size_t off = 0;
          for (std::uint32_t in : n.in) {
            const std::size_t len = value(Var{in}).size();
            if (Tensor* d = accum(in)) {
              for (std::size_t k = 0; k < len; ++k) (*d)[k] += g[off + k];
            }
            off += len;
          }
          break;
        }
        case Op::dot: {
          const Tensor& a = value(Var{n.in[0]});
          const Tensor& b = value(Var{n.in[1]});
          const double s = g[0];
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < a.size(); ++k) (*d)[k] += s * b[k];
          }
          if (Tensor* d = accum(n.in[1])) {
            for (std::size_t k = 0; k < b.size(); ++k) (*d)[k] += s * a[k];
          }
          break;
        }
        case Op::mask: {
          if (Tensor* d = accum(n.in[0])) {
            for (std::size_t k = 0; k < g.size(); ++k) (*d)[k] += g[k] * n.aux[k];
          }
          break;
        }
        case Op::squared_error: {
          const double x = value(Var{n.in[0]})[0];
          if (Tensor* d = accum(n.in[0])) (*d)[0] += g[0] * 2.0 * (x - n.scalar);
          break;
        }
      }
    }
    return grads;
  }

 private:
  enum class Op : std::uint8_t {
    parameter,
    row,
    constant,
    matvec,
    affine,
    sum,
    sub,
    mul,
    blend,
    relu,
    sigmoid,
    tanh,
    prelu,
    concat,
    dot,
    mask,
    squared_error,
  };

  /// Input node ids; the first six are stored inline.
  class Inputs {
   public:
    void push_back(std::uint32_t id) {
      if (count_ < inline_.size()) inline_[count_] = id;
      else more_.push_back(id);
      ++count_;
    }
    std::size_t size() const noexcept { return count_; }
    std::uint32_t operator[](std::size_t i) const { return i < inline_.size() ? inline_[i] : more_[i - inline_.size()]; }

    class iterator {
     public:
      iterator(const Inputs* in, std::size_t i) : in_(in), i_(i) {}
      std::uint32_t operator*() const { return (*in_)[i_]; }
      iterator& operator++() {
        ++i_;
        return *this;
      }
      bool operator!=(const iterator& o) const { return i_ != o.i_; }

     private:
      const Inputs* in_;
      std::size_t i_;
    };
    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, count_}; }

   private:
    std::array<std::uint32_t, 6> inline_{};
    std::vector<std::uint32_t> more_;
    std::size_t count_ = 0;
  };

  struct Node {
    Op op = Op::constant;
    bool grad = false;
    std::uint32_t param = Var::npos;
    std::size_t extra = 0;
    double scalar = 0.0;
    Inputs in;
    Tensor value;
    Tensor aux;
  };

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  Node make(Op op, std::initializer_list<Var> inputs) {
    return make(op, std::span<const Var>(inputs.begin(), inputs.size()));
  }
  Node make(Op op, std::span<const Var> inputs) {
    Node n;
    n.op = op;
    for (Var v : inputs) {
      n.grad = n.grad || node(v).grad;
      n.in.push_back(v.id);
    }
    return n;
  }

  static void accumulate_into(Tensor& dst, const Tensor& src, const char* what) {
    require_same_shape(dst, src, what);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
  }

  Var unary(Op op, Var x, Activation act) {
    Node n = make(op, {x});
    n.value = activate(value(x), act);
    return push(std::move(n));
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const ParameterStore* params_;
  std::vector<std::uint32_t> param_leaf_;
  std::vector<Node> nodes_;
};

}  // namespace iarn
