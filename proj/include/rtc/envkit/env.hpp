#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "rtc/flowpolicy/types.hpp"
#include "rtc/random.hpp"

namespace rtc::env {

using Vec2 = std::array<double, 2>;

// Shuttle-dodge arena: the agent starts on the left, a hazard shuttles
// horizontally along y = 0 in the middle, and a target slides vertically on
// the right. Reaching the target is success; touching the hazard or running
// out of ticks is failure.
struct EnvConfig {
  double arena = 1.0;
  // Velocity retained per tick and acceleration gain:
  //   v' = damping * v + accel_gain * a,  p' = p + v'.
  double damping = 0.85;
  double accel_gain = 0.02;
  double goal_radius = 0.1;
  double hazard_radius = 0.15;
  double target_x = 0.8;
  double target_amplitude = 0.5;
  double target_period = 40.0;
  double hazard_center_x = 0.0;
  double hazard_amplitude = 0.35;
  double hazard_period = 30.0;
  double start_x = -0.8;
  double start_y_spread = 0.05;
  std::uint32_t tick_budget = 42;

  double max_speed() const { return accel_gain / (1.0 - damping); }
  void validate() const;

  static EnvConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

enum class Status : std::uint8_t { kRunning, kSuccess, kFailure };

struct EnvState {
  Vec2 pos{};
  Vec2 vel{};
  Vec2 last_action{};
  Vec2 target{};
  double target_phase = 0.0;
  Vec2 hazard{};
  double hazard_phase = 0.0;
  std::uint32_t tick = 0;
  Status status = Status::kRunning;

  bool done() const { return status != Status::kRunning; }
};

inline constexpr std::size_t kActionDim = 2;
inline constexpr std::size_t kObsDim = 14;

Vec2 target_position(const EnvConfig& cfg, double phase);
Vec2 hazard_position(const EnvConfig& cfg, double phase);
double target_phase_step(const EnvConfig& cfg);
double hazard_phase_step(const EnvConfig& cfg);

// Initial state with randomized start height and path phases.
EnvState reset(const EnvConfig& cfg, Rng& rng);
// Builds a state from explicit values and evaluates its status.
EnvState make_state(const EnvConfig& cfg, Vec2 pos, Vec2 vel,
                    double target_phase, double hazard_phase,
                    std::uint32_t tick = 0);

// Advances one tick. The action is clipped to [-1, 1] per component.
EnvState step(const EnvConfig& cfg, const EnvState& state, Vec2 action);

// Status predicate for a position/target/hazard configuration.
Status classify(const EnvConfig& cfg, const EnvState& state);

// Mirror image through y = 0 (target phase shifted by half a period).
EnvState reflect(const EnvConfig& cfg, const EnvState& state);

flow::Observation observe(const EnvConfig& cfg, const EnvState& state);

}  // namespace rtc::env
