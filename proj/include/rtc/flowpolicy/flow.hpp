#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rtc/flowpolicy/network.hpp"
#include "rtc/flowpolicy/types.hpp"
#include "rtc/random.hpp"

namespace rtc::flow {

// Added to the postfix element count in the loss denominator.
inline constexpr double kLossGuard = 1e-8;

// Row i becomes tau[i] * chunk[i] + (1 - tau[i]) * eps[i].
FlowState interpolate(const ActionChunk& chunk, const NoiseSample& eps,
                      std::span<const double> tau);

// Training noise for one sample, drawn in a fixed order from `rng`:
// the scalar flow time first, then the noise chunk row by row.
struct TrainingDraw {
  double tau = 0.0;
  NoiseSample eps;
};
TrainingDraw draw_training_noise(std::size_t horizon, std::size_t action_dim,
                                 Rng& rng);

// Squared velocity error summed over rows >= delay, and its adjoints.
struct MaskedError {
  double sum_sq = 0.0;
  double count = 0.0;
  // d sum_sq / d v, one entry per network output.
  nd::Tensor output_grad;
  // d sum_sq / d params, in layout order; empty unless requested.
  std::vector<nd::Tensor> param_grads;

  double loss() const { return sum_sq / (count + kLossGuard); }
};

MaskedError masked_error(const PolicyParams& params, const Observation& obs,
                         const ActionChunk& chunk, std::size_t delay, Rng& rng,
                         bool with_grads);

// Flow-matching loss with target (chunk - eps) and one shared flow time.
double fm_loss(const PolicyParams& params, const Observation& obs,
               const ActionChunk& chunk, Rng& rng);

// fm_loss with the first `delay` rows replaced by ground truth at flow time
// 1 and removed from the loss. Throws DomainError if delay > H.
double prefix_loss(const PolicyParams& params, const Observation& obs,
                   const ActionChunk& chunk, std::size_t delay, Rng& rng);

struct LossGradient {
  double loss = 0.0;
  std::vector<nd::Tensor> param_grads;
  nd::Tensor output_grad;
};

LossGradient prefix_loss_gradient(const PolicyParams& params,
                                  const Observation& obs,
                                  const ActionChunk& chunk, std::size_t delay,
                                  Rng& rng);

// Network evaluations spent producing chunks.
struct InferenceCost {
  std::size_t forward_passes = 0;
  std::size_t vjp_passes = 0;
  std::size_t chunks = 0;

  InferenceCost& operator+=(const InferenceCost& o) {
    forward_passes += o.forward_passes;
    vjp_passes += o.vjp_passes;
    chunks += o.chunks;
    return *this;
  }
};

// Standard normal chunk drawn row by row.
ActionChunk draw_noise(std::size_t horizon, std::size_t action_dim, Rng& rng);

// Euler integration of the velocity field from noise (tau = 0) to data.
ActionChunk sample(const VelocityModel& model, const Observation& obs,
                   std::size_t num_steps, Rng& rng,
                   InferenceCost* cost = nullptr);

// sample() with rows [0, delay) pinned to `prefix` at flow time 1 before
// every step; the returned rows [0, delay) equal the prefix exactly. Rows of
// `prefix` at or beyond `delay` are ignored.
ActionChunk sample_with_prefix(const VelocityModel& model,
                               const Observation& obs,
                               const ActionChunk& prefix, std::size_t delay,
                               std::size_t num_steps, Rng& rng,
                               InferenceCost* cost = nullptr);

}  // namespace rtc::flow
