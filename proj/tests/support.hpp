#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rtc/ndcore/tensor.hpp"
#include "rtc/random.hpp"

namespace rtc::testing {

inline nd::Tensor random_tensor(nd::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  nd::Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Central differences of a scalar function, one coordinate at a time.
inline nd::Tensor fd_grad(const std::function<double(const nd::Tensor&)>& f,
                          const nd::Tensor& x, double h = 1e-5) {
  nd::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    nd::Tensor plus = x;
    nd::Tensor minus = x;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Relative error of two tensors in the max norm.
inline double rel_err(const nd::Tensor& a, const nd::Tensor& b, double floor = 1e-8) {
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

inline double max_abs_diff(const nd::Tensor& a, const nd::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace rtc::testing
