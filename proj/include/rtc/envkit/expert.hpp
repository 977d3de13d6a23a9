#pragma once

#include "rtc/envkit/env.hpp"

namespace rtc::env {

// Per-episode expert style. `side` picks the detour lane around the hazard
// (+1 above, -1 below), which makes demonstrations bimodal.
struct ExpertStyle {
  int side = 1;
  double lane = 0.4;
};

struct ExpertGains {
  double position = 6.0;
  double velocity = 14.0;
  double repulsion = 3.0;
  double influence = 0.45;
  double pass_x = 0.5;
  double lane_lead = 0.35;
  double lookahead_max = 12.0;
};

// Where the expert aims at the current tick.
Vec2 expert_goal(const EnvConfig& cfg, const EnvState& state,
                 const ExpertStyle& style, const ExpertGains& gains = {});

// Target position predicted for the agent's estimated arrival time.
Vec2 predicted_target(const EnvConfig& cfg, const EnvState& state,
                      const ExpertGains& gains = {});

// Potential-field controller: PD attraction to the goal plus radial
// repulsion near the hazard, scaled to unit norm.
Vec2 expert_action(const EnvConfig& cfg, const EnvState& state,
                   const ExpertStyle& style, const ExpertGains& gains = {});

}  // namespace rtc::env
