#include "rtc/envkit/expert.hpp"

#include <algorithm>
#include <cmath>

namespace rtc::env {

Vec2 predicted_target(const EnvConfig& cfg, const EnvState& s,
                      const ExpertGains& gains) {
  const double range = std::hypot(s.target[0] - s.pos[0], s.target[1] - s.pos[1]);
  const double eta = std::min(range / cfg.max_speed(), gains.lookahead_max);
  return target_position(cfg, s.target_phase + eta * target_phase_step(cfg));
}

Vec2 expert_goal(const EnvConfig& cfg, const EnvState& s,
                 const ExpertStyle& style, const ExpertGains& gains) {
  if (s.pos[0] >= gains.pass_x) return predicted_target(cfg, s, gains);
  const double x = std::min(s.pos[0] + gains.lane_lead, gains.pass_x + gains.lane_lead);
  return {x, style.side * style.lane};
}

Vec2 expert_action(const EnvConfig& cfg, const EnvState& s,
                   const ExpertStyle& style, const ExpertGains& gains) {
  const Vec2 goal = expert_goal(cfg, s, style, gains);
  Vec2 a{};
  for (std::size_t k = 0; k < 2; ++k) {
    a[k] = gains.position * (goal[k] - s.pos[k]) - gains.velocity * s.vel[k];
  }
  const double rx = s.pos[0] - s.hazard[0];
  const double ry = s.pos[1] - s.hazard[1];
  const double r = std::hypot(rx, ry);
  if (r < gains.influence && r > 0.0) {
    const double push = gains.repulsion * (gains.influence - r) / gains.influence;
    a[0] += push * rx / r;
    a[1] += push * ry / r;
  }
  const double norm = std::hypot(a[0], a[1]);
  if (norm > 1.0) {
    a[0] /= norm;
    a[1] /= norm;
  }
  return a;
}

}  // namespace rtc::env
