#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rtc/ndcore/tensor.hpp"

namespace rtc::flow {

// Environment state encoding fed to the policy.
struct Observation {
  std::vector<double> features;
};

// H consecutive action vectors, one per row.
class ActionChunk {
 public:
  ActionChunk() = default;
  ActionChunk(std::size_t horizon, std::size_t action_dim)
      : actions_(nd::Shape{horizon, action_dim}) {}
  explicit ActionChunk(nd::Tensor actions);

  std::size_t horizon() const { return actions_.dim(0); }
  std::size_t action_dim() const { return actions_.dim(1); }

  double at(std::size_t row, std::size_t col) const { return actions_.at(row, col); }
  double& at(std::size_t row, std::size_t col) { return actions_.at(row, col); }
  std::span<const double> row(std::size_t r) const { return actions_.row(r); }
  std::span<double> mutable_row(std::size_t r) { return actions_.mutable_row(r); }

  const nd::Tensor& tensor() const { return actions_; }

  bool identical(const ActionChunk& other) const {
    return actions_.identical(other.actions_);
  }

 private:
  nd::Tensor actions_{nd::Shape{0, 0}};
};

using NoiseSample = ActionChunk;

// Noisy chunk plus one flow time per action row.
struct FlowState {
  ActionChunk x;
  std::vector<double> tau;
};

}  // namespace rtc::flow
