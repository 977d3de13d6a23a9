#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rtc/executor/executor.hpp"

namespace rtc::bench {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Wilson score interval for a binomial proportion, clipped to [0, 1].
// Throws DomainError unless 0 <= successes <= n, n >= 1 and z > 0.
Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.96);

struct Continuity {
  double max_jump = 0.0;
  double mean_jump_at_switch = 0.0;
  double mean_jump_within_chunk = 0.0;
  // Sums and counts, for pooling across episodes.
  double switch_sum = 0.0;
  double within_sum = 0.0;
  std::size_t switch_count = 0;
  std::size_t within_count = 0;
};

// Jumps are L2 distances between consecutive executed actions. The jump
// into tick t counts as a switch jump when a new chunk starts at t (t > 0).
Continuity continuity_metric(const exec::RolloutRecord& record);

enum class ExecRule { kFixed, kMaxDelayOne };

struct SweepSpec {
  std::vector<std::size_t> delays = {0, 1, 2, 3, 4};
  std::vector<exec::Strategy> strategies = {
      exec::Strategy::kSynchronous, exec::Strategy::kNaiveAsync,
      exec::Strategy::kInferenceTimeRTC, exec::Strategy::kTrainingTimeRTC};
  std::size_t n_rollouts = 512;
  ExecRule rule = ExecRule::kMaxDelayOne;
  // Used with ExecRule::kFixed.
  std::size_t fixed_s = 1;
  std::size_t horizon = 8;
  std::size_t num_steps = 10;
  std::uint64_t seed_base = 0;
  guidance::GuidanceConfig guidance;
  std::size_t threads = 0;

  std::size_t exec_horizon(std::size_t delay) const;
  // Throws ConfigError listing every (strategy, d, s) cell that cannot run.
  void validate() const;
};

struct CellResult {
  std::string strategy;
  std::size_t d = 0;
  std::size_t s = 0;
  std::size_t n = 0;
  std::size_t successes = 0;
  double rate = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  double mean_ticks = 0.0;
  double sem_ticks = 0.0;
  double mean_switch_jump = 0.0;
  double mean_within_jump = 0.0;
  // Network passes per chunk, averaged over all chunks of the cell.
  double fwd_passes = 0.0;
  double vjp_passes = 0.0;
  std::uint64_t seed_base = 0;
  double max_jump = 0.0;
};

struct SweepResult {
  std::vector<CellResult> cells;

  const CellResult& at(const std::string& strategy, std::size_t d) const;
};

// Aggregates one cell's rollouts.
CellResult summarize(exec::Strategy strategy, const exec::DelayConfig& cfg,
                     std::uint64_t seed_base,
                     const std::vector<exec::RolloutRecord>& records);

// Runs every (strategy, d) cell; episode i of every cell uses the same seed,
// so cells differ only by strategy and timing.
SweepResult sweep(const SweepSpec& spec, const exec::PolicyBundle& bundle,
                  const env::EnvConfig& env_cfg);

std::string to_csv(const SweepResult& result);
SweepResult parse_csv(const std::string& text);
void write_csv(const SweepResult& result, const std::filesystem::path& path);
SweepResult read_csv(const std::filesystem::path& path);

// Self-contained SVG line chart of solve rate against delay, one line per
// strategy with its Wilson band shaded.
std::string render_svg(const SweepResult& result);
void write_svg(const SweepResult& result, const std::filesystem::path& path);

}  // namespace rtc::bench
