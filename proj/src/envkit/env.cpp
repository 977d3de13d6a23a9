#include "rtc/envkit/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "rtc/error.hpp"

namespace rtc::env {
namespace {

double dist(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

}  // namespace

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    EnvConfig, arena, damping, accel_gain, goal_radius, hazard_radius, target_x,
    target_amplitude, target_period, hazard_center_x, hazard_amplitude,
    hazard_period, start_x, start_y_spread, tick_budget)

void EnvConfig::validate() const {
  if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must be in [0, 1)");
  if (!(accel_gain > 0.0)) throw ConfigError("accel_gain must be positive");
  if (!(goal_radius > 0.0 && hazard_radius > 0.0)) throw ConfigError("radii must be positive");
  if (!(target_period > 0.0 && hazard_period > 0.0)) throw ConfigError("periods must be positive");
  if (tick_budget == 0) throw ConfigError("tick_budget must be positive");
  if (!(arena > 0.0)) throw ConfigError("arena must be positive");
}

EnvConfig EnvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open environment config " + path.string());
  EnvConfig cfg;
  try {
    cfg = nlohmann::json::parse(in).get<EnvConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("environment config " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void EnvConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write environment config " + path.string());
  out << nlohmann::json(*this).dump(2) << "\n";
}

Vec2 target_position(const EnvConfig& cfg, double phase) {
  return {cfg.target_x, cfg.target_amplitude * std::sin(phase)};
}

Vec2 hazard_position(const EnvConfig& cfg, double phase) {
  return {cfg.hazard_center_x + cfg.hazard_amplitude * std::cos(phase), 0.0};
}

double target_phase_step(const EnvConfig& cfg) {
  return 2.0 * std::numbers::pi / cfg.target_period;
}

double hazard_phase_step(const EnvConfig& cfg) {
  return 2.0 * std::numbers::pi / cfg.hazard_period;
}

Status classify(const EnvConfig& cfg, const EnvState& s) {
  if (dist(s.pos, s.hazard) <= cfg.hazard_radius) return Status::kFailure;
  if (dist(s.pos, s.target) <= cfg.goal_radius) return Status::kSuccess;
  if (s.tick >= cfg.tick_budget) return Status::kFailure;
  return Status::kRunning;
}

EnvState make_state(const EnvConfig& cfg, Vec2 pos, Vec2 vel,
                    double target_phase, double hazard_phase,
                    std::uint32_t tick) {
  EnvState s;
  s.pos = pos;
  s.vel = vel;
  s.target_phase = target_phase;
  s.hazard_phase = hazard_phase;
  s.target = target_position(cfg, target_phase);
  s.hazard = hazard_position(cfg, hazard_phase);
  s.tick = tick;
  s.status = classify(cfg, s);
  return s;
}

EnvState reset(const EnvConfig& cfg, Rng& rng) {
  const double y = cfg.start_y_spread * (2.0 * rng.uniform() - 1.0);
  const double target_phase = 2.0 * std::numbers::pi * rng.uniform();
  const double hazard_phase = 2.0 * std::numbers::pi * rng.uniform();
  return make_state(cfg, {cfg.start_x, y}, {0.0, 0.0}, target_phase,
                    hazard_phase);
}

EnvState step(const EnvConfig& cfg, const EnvState& state, Vec2 action) {
  EnvState s = state;
  if (s.done()) return s;
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = std::clamp(action[k], -1.0, 1.0);
    s.last_action[k] = a;
    s.vel[k] = cfg.damping * s.vel[k] + cfg.accel_gain * a;
    s.pos[k] += s.vel[k];
    if (s.pos[k] > cfg.arena) {
      s.pos[k] = cfg.arena;
      s.vel[k] = 0.0;
    } else if (s.pos[k] < -cfg.arena) {
      s.pos[k] = -cfg.arena;
      s.vel[k] = 0.0;
    }
  }
  s.target_phase += target_phase_step(cfg);
  s.hazard_phase += hazard_phase_step(cfg);
  s.target = target_position(cfg, s.target_phase);
  s.hazard = hazard_position(cfg, s.hazard_phase);
  s.tick += 1;
  s.status = classify(cfg, s);
  return s;
}

EnvState reflect(const EnvConfig& cfg, const EnvState& state) {
  EnvState s = state;
  s.pos[1] = -s.pos[1];
  s.vel[1] = -s.vel[1];
  s.last_action[1] = -s.last_action[1];
  s.target_phase += std::numbers::pi;
  s.target = target_position(cfg, s.target_phase);
  // The hazard path lies on the mirror axis; its exact position is kept.
  s.hazard[1] = -s.hazard[1];
  return s;
}

flow::Observation observe(const EnvConfig& cfg, const EnvState& s) {
  const double vscale = 1.0 / cfg.max_speed();
  return flow::Observation{{
      s.pos[0], s.pos[1],
      s.vel[0] * vscale, s.vel[1] * vscale,
      s.last_action[0], s.last_action[1],
      s.target[0], s.target[1],
      std::sin(s.target_phase), std::cos(s.target_phase),
      s.hazard[0], s.hazard[1],
      std::sin(s.hazard_phase), std::cos(s.hazard_phase),
  }};
}

}  // namespace rtc::env
