#pragma once

#include <cstddef>
#include <vector>

#include "rtc/flowpolicy/flow.hpp"

namespace rtc::guidance {

struct GuidanceConfig {
  // Guidance scale.
  double beta = 1.0;
  // Soft-mask decay base, in (0, 1).
  double decay_c = 0.5;
  // Upper clip on the time-dependent coefficient min(1 - tau, gamma_max).
  double gamma_max = 5.0;
  std::size_t num_steps = 10;

  void validate() const;
};

// Previous-chunk actions aligned to the new chunk's rows. Rows [0, H - s)
// hold overlapping actions; the rest are unused.
struct OverlapTarget {
  flow::ActionChunk y;
  std::size_t delay = 0;
  std::size_t exec_horizon = 0;
};

// 1 on the prefix [0, d), decay_c^(i - d + 1) on [d, H - s), 0 after.
std::vector<double> soft_mask_weights(std::size_t horizon, std::size_t delay,
                                      std::size_t exec_horizon, double decay_c);

// Inpainting sampler for policies trained without prefix conditioning.
//
// Each Euler step pins rows [0, d) to the target, then corrects the velocity
// with a pseudoinverse-style term
//   v += min(1 - tau, gamma_max) * beta * J^T (W * (y - A1)),
// where A1 = x + (1 - tau) v is the one-step denoised estimate and J its
// Jacobian in x (one vector-Jacobian product per step). The returned rows
// [0, d) equal the target exactly.
flow::ActionChunk guided_sample(const flow::VelocityModel& model,
                                const flow::Observation& obs,
                                const OverlapTarget& target,
                                const GuidanceConfig& cfg, Rng& rng,
                                flow::InferenceCost* cost = nullptr);

}  // namespace rtc::guidance
