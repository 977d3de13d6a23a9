#pragma once

#include <concepts>

#include "rtc/error.hpp"
#include "rtc/ndcore/tape.hpp"

namespace rtc::nd {

// A differentiable function is any callable that records its computation of
// an output Var from an input Var on the supplied tape.
template <class F>
concept TapeFunction = std::invocable<F&, Tape&, Var> &&
                       std::same_as<std::invoke_result_t<F&, Tape&, Var>, Var>;

// d f / d x for scalar-valued f.
template <TapeFunction F>
Tensor grad(F&& f, const Tensor& x) {
  Tape tape;
  const Var in = tape.variable(x);
  const Var out = f(tape, in);
  if (tape.value(out).rank() != 0) {
    throw StructuralError("grad requires a scalar-valued function, got shape " +
                          shape_string(tape.value(out).shape()));
  }
  tape.backward(out);
  return tape.grad(in);
}

// cotangent^T . (d g / d x), shaped like x.
template <TapeFunction F>
Tensor vjp(F&& g, const Tensor& x, const Tensor& cotangent) {
  Tape tape;
  const Var in = tape.variable(x);
  const Var out = g(tape, in);
  tape.backward(out, cotangent);
  return tape.grad(in);
}

}  // namespace rtc::nd
