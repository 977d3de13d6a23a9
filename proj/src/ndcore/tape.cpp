#include "rtc/ndcore/tape.hpp"

#include <cmath>
#include <string>

#include "rtc/error.hpp"

namespace rtc::nd {
namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// out[r, :] = a[r, :] . b  for rows x inner times inner x cols.
void gemm(std::span<const double> a, std::span<const double> b,
          std::span<double> out, std::size_t rows, std::size_t inner,
          std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * cols;
    const double* ar = a.data() + r * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = ar[k];
      const double* br = b.data() + k * cols;
      for (std::size_t c = 0; c < cols; ++c) o[c] += av * br[c];
    }
  }
}

// ga += g . b^T
void gemm_grad_lhs(std::span<const double> g, std::span<const double> b,
                   std::span<double> ga, std::size_t rows, std::size_t inner,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = g.data() + r * cols;
    double* gar = ga.data() + r * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double* br = b.data() + k * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += gr[c] * br[c];
      gar[k] += acc;
    }
  }
}

// gb += a^T . g
void gemm_grad_rhs(std::span<const double> a, std::span<const double> g,
                   std::span<double> gb, std::size_t rows, std::size_t inner,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a.data() + r * inner;
    const double* gr = g.data() + r * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = ar[k];
      double* gbr = gb.data() + k * cols;
      for (std::size_t c = 0; c < cols; ++c) gbr[c] += av * gr[c];
    }
  }
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kAffine: return "affine";
    case Op::kTanh: return "tanh";
    case Op::kSum: return "sum";
    case Op::kWhere: return "where";
    case Op::kReshape: return "reshape";
  }
  return "?";
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw StructuralError("invalid tape handle " + std::to_string(v.id));
  }
  return nodes_[v.id];
}

Var Tape::variable(Tensor value) {
  Node n;
  n.requires_grad = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  check_finite(nodes_.size() - 1);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  check_finite(nodes_.size() - 1);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Op op, std::initializer_list<Var> inputs, Shape aux) {
  Node n;
  n.op = op;
  n.aux = std::move(aux);
  std::size_t i = 0;
  for (Var v : inputs) {
    const Node& src = node(v);
    n.in[i++] = v.id;
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  n.value = evaluate(n);
  nodes_.push_back(std::move(n));
  check_finite(nodes_.size() - 1);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check_finite(std::size_t index) const {
  if (!nodes_[index].value.all_finite()) {
    throw NumericError("non-finite value produced by op #" +
                       std::to_string(index) + " (" +
                       std::string(op_name(nodes_[index].op)) + ")");
  }
}

Var Tape::add(Var a, Var b) {
  if (!is_suffix(node(b).value.shape(), node(a).value.shape())) {
    throw StructuralError("add: shape " + shape_string(node(b).value.shape()) +
                          " does not broadcast onto " +
                          shape_string(node(a).value.shape()));
  }
  return push(Op::kAdd, {a, b});
}

Var Tape::sub(Var a, Var b) {
  if (!is_suffix(node(b).value.shape(), node(a).value.shape())) {
    throw StructuralError("sub: shape " + shape_string(node(b).value.shape()) +
                          " does not broadcast onto " +
                          shape_string(node(a).value.shape()));
  }
  return push(Op::kSub, {a, b});
}

Var Tape::mul(Var a, Var b) {
  if (!is_suffix(node(b).value.shape(), node(a).value.shape())) {
    throw StructuralError("mul: shape " + shape_string(node(b).value.shape()) +
                          " does not broadcast onto " +
                          shape_string(node(a).value.shape()));
  }
  return push(Op::kMul, {a, b});
}

Var Tape::matmul(Var a, Var b) {
  const Shape& sa = node(a).value.shape();
  const Shape& sb = node(b).value.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[0]) {
    throw StructuralError("matmul: incompatible shapes " + shape_string(sa) +
                          " and " + shape_string(sb));
  }
  return push(Op::kMatMul, {a, b});
}

Var Tape::affine(Var x, Var w, Var bias) {
  const Shape& sx = node(x).value.shape();
  const Shape& sw = node(w).value.shape();
  const Shape& sb = node(bias).value.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[0] || sb.size() != 1 ||
      sb[0] != sw[1]) {
    throw StructuralError("affine: incompatible shapes " + shape_string(sx) +
                          ", " + shape_string(sw) + ", " + shape_string(sb));
  }
  return push(Op::kAffine, {x, w, bias});
}

Var Tape::tanh(Var x) { return push(Op::kTanh, {x}); }

Var Tape::sum(Var x) { return push(Op::kSum, {x}); }

Var Tape::where(Var mask, Var a, Var b) {
  if (node(mask).value.shape() != node(a).value.shape()) {
    throw StructuralError("where: mask shape " +
                          shape_string(node(mask).value.shape()) +
                          " differs from " +
                          shape_string(node(a).value.shape()));
  }
  if (!is_suffix(node(b).value.shape(), node(a).value.shape())) {
    throw StructuralError("where: shape " +
                          shape_string(node(b).value.shape()) +
                          " does not broadcast onto " +
                          shape_string(node(a).value.shape()));
  }
  if (node(mask).requires_grad) {
    throw StructuralError("where: mask must be a constant");
  }
  return push(Op::kWhere, {mask, a, b});
}

Var Tape::reshape(Var x, Shape shape) {
  if (element_count(shape) != node(x).value.size()) {
    throw StructuralError("reshape: cannot view " +
                          shape_string(node(x).value.shape()) + " as " +
                          shape_string(shape));
  }
  return push(Op::kReshape, {x}, std::move(shape));
}

Tensor Tape::evaluate(const Node& n) const {
  auto in = [&](int i) -> const Tensor& { return nodes_[n.in[i]].value; };
  switch (n.op) {
    case Op::kLeaf:
      return n.value;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out(a.shape());
      auto o = out.mutable_data();
      auto ad = a.data();
      auto bd = b.data();
      const std::size_t nb = bd.size();
      for (std::size_t i = 0; i < o.size(); i += nb) {
        for (std::size_t j = 0; j < nb; ++j) {
          const double x = ad[i + j];
          const double y = bd[j];
          o[i + j] = n.op == Op::kAdd   ? x + y
                     : n.op == Op::kSub ? x - y
                                        : x * y;
        }
      }
      return out;
    }
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Shape shape = a.shape();
      shape.back() = b.dim(1);
      Tensor out(shape);
      const std::size_t inner = b.dim(0);
      gemm(a.data(), b.data(), out.mutable_data(), a.size() / inner, inner,
           b.dim(1));
      return out;
    }
    case Op::kAffine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& bias = in(2);
      Shape shape = x.shape();
      shape.back() = w.dim(1);
      Tensor out(shape);
      auto o = out.mutable_data();
      const std::size_t cols = w.dim(1);
      for (std::size_t i = 0; i < o.size(); i += cols) {
        for (std::size_t c = 0; c < cols; ++c) o[i + c] = bias[c];
      }
      const std::size_t inner = w.dim(0);
      gemm(x.data(), w.data(), o, x.size() / inner, inner, cols);
      return out;
    }
    case Op::kTanh: {
      const Tensor& x = in(0);
      Tensor out(x.shape());
      auto o = out.mutable_data();
      auto xd = x.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(xd[i]);
      return out;
    }
    case Op::kSum: {
      double acc = 0.0;
      for (double v : in(0).data()) acc += v;
      return Tensor::scalar(acc);
    }
    case Op::kWhere: {
      const Tensor& mask = in(0);
      const Tensor& a = in(1);
      const Tensor& b = in(2);
      Tensor out(a.shape());
      auto o = out.mutable_data();
      const std::size_t nb = b.size();
      for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = mask[i] != 0.0 ? a[i] : b[i % nb];
      }
      return out;
    }
    case Op::kReshape:
      return in(0).reshaped(n.aux);
  }
  throw StructuralError("unsupported primitive");
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (v.id < has_grad_.size() && has_grad_[v.id]) return grads_[v.id];
  return Tensor(n.value.shape());
}

void Tape::backward(Var scalar_out) {
  if (node(scalar_out).value.rank() != 0) {
    throw StructuralError("backward without seed requires a scalar output, got " +
                          shape_string(node(scalar_out).value.shape()));
  }
  backward(scalar_out, Tensor::scalar(1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  const Node& root = node(out);
  if (seed.shape() != root.value.shape()) {
    throw StructuralError("cotangent shape " + shape_string(seed.shape()) +
                          " differs from output shape " +
                          shape_string(root.value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);

  auto acc = [&](std::uint32_t id) -> std::span<double> {
    if (!has_grad_[id]) {
      grads_[id] = Tensor(nodes_[id].value.shape());
      has_grad_[id] = true;
    }
    return grads_[id].mutable_data();
  };
  auto tracked = [&](std::uint32_t id) { return nodes_[id].requires_grad; };

  if (!root.requires_grad) return;
  {
    auto g = acc(out.id);
    auto s = seed.data();
    std::copy(s.begin(), s.end(), g.begin());
  }

  for (std::size_t idx = out.id + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (n.op == Op::kLeaf || !n.requires_grad || !has_grad_[idx]) continue;
    const auto g = grads_[idx].data();
    auto in = [&](int i) -> const Tensor& { return nodes_[n.in[i]].value; };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        const std::size_t nb = in(1).size();
        if (tracked(n.in[0])) {
          auto ga = acc(n.in[0]);
          if (n.op == Op::kMul) {
            auto bd = in(1).data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i % nb];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
          }
        }
        if (tracked(n.in[1])) {
          auto gb = acc(n.in[1]);
          if (n.op == Op::kMul) {
            auto ad = in(0).data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * ad[i];
          } else if (n.op == Op::kAdd) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] -= g[i];
          }
        }
        break;
      }
      case Op::kMatMul:
      case Op::kAffine: {
        const Tensor& a = in(0);
        const Tensor& w = in(1);
        const std::size_t inner = w.dim(0);
        const std::size_t cols = w.dim(1);
        const std::size_t rows = a.size() / inner;
        if (tracked(n.in[0])) {
          gemm_grad_lhs(g, w.data(), acc(n.in[0]), rows, inner, cols);
        }
        if (tracked(n.in[1])) {
          gemm_grad_rhs(a.data(), g, acc(n.in[1]), rows, inner, cols);
        }
        if (n.op == Op::kAffine && tracked(n.in[2])) {
          auto gb = acc(n.in[2]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        }
        break;
      }
      case Op::kTanh: {
        if (tracked(n.in[0])) {
          auto ga = acc(n.in[0]);
          auto y = n.value.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * (1.0 - y[i] * y[i]);
          }
        }
        break;
      }
      case Op::kSum: {
        if (tracked(n.in[0])) {
          auto ga = acc(n.in[0]);
          for (double& v : ga) v += g[0];
        }
        break;
      }
      case Op::kWhere: {
        const Tensor& mask = in(0);
        if (tracked(n.in[1])) {
          auto ga = acc(n.in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (mask[i] != 0.0) ga[i] += g[i];
          }
        }
        if (tracked(n.in[2])) {
          const std::size_t nb = in(2).size();
          auto gb = acc(n.in[2]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (mask[i] == 0.0) gb[i % nb] += g[i];
          }
        }
        break;
      }
      case Op::kReshape: {
        if (tracked(n.in[0])) {
          auto ga = acc(n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        break;
      }
    }
  }
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    if (!evaluate(n).identical(n.value)) return false;
  }
  return true;
}

}  // namespace rtc::nd
