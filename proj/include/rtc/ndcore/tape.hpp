#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "rtc/ndcore/tensor.hpp"

namespace rtc::nd {

// The closed set of recorded primitives. Everything else is composed.
enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatMul,
  kAffine,
  kTanh,
  kSum,
  kWhere,
  kReshape,
};

std::string_view op_name(Op op);

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid =
      std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
};

// Reverse-mode autodiff tape.
//
// Broadcasting: in add/sub/mul/where the second operand's shape must be a
// suffix of the first's (it is repeated over the leading dimensions).
// matmul/affine treat every leading dimension of the left operand as batch
// rows against a rank-2 right operand. No other broadcasting exists.
//
// A Tape is single-threaded; build independent tapes for parallel work.
class Tape {
 public:
  Tape() = default;

  // Leaf whose gradient is tracked.
  Var variable(Tensor value);
  // Leaf without gradient.
  Var constant(Tensor value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var bias);
  Var tanh(Var x);
  // Reduces every element to a rank-0 scalar.
  Var sum(Var x);
  // Elementwise select: mask (same shape as a, nonzero = true) picks a,
  // otherwise b (suffix-broadcast).
  Var where(Var mask, Var a, Var b);
  Var reshape(Var x, Shape shape);

  const Tensor& value(Var v) const;
  // Adjoint accumulated by the last backward(); zeros when untouched.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const;

  // Seeds d(out) = seed and propagates adjoints to every tracked node,
  // visiting recorded ops in strict reverse order. Adjoints from earlier
  // calls are cleared first.
  void backward(Var out, const Tensor& seed);
  // backward() with a unit seed on a rank-0 output.
  void backward(Var scalar_out);

  // Recomputes every non-leaf value from the leaves and reports whether all
  // recomputed values are bitwise identical to the recorded ones.
  bool replay_matches() const;

  std::size_t size() const { return nodes_.size(); }
  Op op_at(std::size_t index) const { return nodes_.at(index).op; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::uint32_t in[3] = {Var::kInvalid, Var::kInvalid, Var::kInvalid};
    bool requires_grad = false;
    Shape aux;  // target shape of kReshape
    Tensor value;
  };

  const Node& node(Var v) const;
  Var push(Op op, std::initializer_list<Var> inputs, Shape aux = {});
  Tensor evaluate(const Node& n) const;
  void check_finite(std::size_t index) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

}  // namespace rtc::nd
