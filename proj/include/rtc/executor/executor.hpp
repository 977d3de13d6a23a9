#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rtc/envkit/env.hpp"
#include "rtc/guidance/guidance.hpp"
#include "rtc/trainer/checkpoint.hpp"

namespace rtc::exec {

// Chunk timing in controller ticks.
struct DelayConfig {
  std::size_t horizon = 8;
  std::size_t exec_horizon = 1;
  std::size_t delay = 0;

  // Requires 1 <= s <= H and d <= H - s.
  void validate() const;
};

enum class Strategy { kSynchronous, kNaiveAsync, kInferenceTimeRTC, kTrainingTimeRTC };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
bool is_async(Strategy s);

// Checkpoints a rollout may draw on. Unconditioned strategies use `base`,
// TrainingTimeRTC uses `conditioned`.
struct PolicyBundle {
  const train::Checkpoint* base = nullptr;
  const train::Checkpoint* conditioned = nullptr;
  guidance::GuidanceConfig guidance;
};

// Throws ConfigError if the bundle lacks a checkpoint of the right family
// for the strategy or its shape disagrees with the timing.
void check_compatible(Strategy strategy, const PolicyBundle& bundle, const DelayConfig& cfg);

struct RolloutRecord {
  // states[t] is the state before the action at tick t; one extra at the end.
  std::vector<env::EnvState> states;
  std::vector<env::Vec2> actions;
  // First tick at which each chunk's actions execute.
  std::vector<std::size_t> switch_ticks;
  // Tick of the observation each chunk was computed from.
  std::vector<std::size_t> source_ticks;
  // For each executed action, the chunk it came from (-1 while holding).
  std::vector<long> action_chunk;
  bool success = false;
  std::size_t length = 0;
  double max_jump = 0.0;
  flow::InferenceCost cost;
};

// Rows [offset, offset + d) of prev as rows [0, d) of an H-row buffer whose
// remaining rows are zero. Throws DomainError if offset + d > H.
flow::ActionChunk extract_prefix(const flow::ActionChunk& prev, std::size_t offset,
                                 std::size_t delay);

// Rows [0, H - s) hold prev rows [offset, offset + H - s). Chunks requested
// one execution horizon apart use offset = s. Throws DomainError if the
// overlap runs past the previous chunk, if d > H - s, or if s = H with d > 0.
guidance::OverlapTarget build_overlap_target(const flow::ActionChunk& prev,
                                             std::size_t offset, std::size_t delay,
                                             std::size_t exec_horizon,
                                             std::size_t horizon);

// What a chunk generator sees when asked for the next chunk.
struct ChunkRequest {
  const env::EnvState* state = nullptr;
  flow::Observation obs;
  // Previous chunk in generator space, or null for the first chunk.
  const flow::ActionChunk* prev = nullptr;
  // Rows of prev already executed or committed when this chunk starts.
  std::size_t offset = 0;
  std::size_t delay = 0;
  std::size_t exec_horizon = 0;
  std::size_t chunk_index = 0;
  std::uint64_t seed = 0;
};

struct GeneratedChunk {
  // Generator-space chunk, handed back as `prev` next time.
  flow::ActionChunk chunk;
  // Same rows in environment action units.
  std::vector<env::Vec2> actions;
  flow::InferenceCost cost;
};

using ChunkGenerator = std::function<GeneratedChunk(const ChunkRequest&)>;

// Tick loop shared by every strategy. Synchronous: at each chunk boundary
// the last executed action is held for d ticks, then rows [0, s) of a chunk
// computed from the boundary observation run. Asynchronous: the next chunk
// is requested s - d ticks into the current one and its rows [d, d + s) run
// from the switch tick. The first chunk runs rows [0, s) from tick 0.
// Asynchronous schedules need d <= s so only one request is in flight.
RolloutRecord run_schedule(bool asynchronous, const ChunkGenerator& generator,
                           const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                           std::uint64_t episode_seed, std::size_t max_ticks = 0);

RolloutRecord run_episode(Strategy strategy, const PolicyBundle& bundle,
                          const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                          std::size_t num_steps, std::uint64_t episode_seed,
                          std::size_t max_ticks = 0);

// Generator that plans with the scripted expert on a copy of the true state.
// The detour side is drawn from the episode seed.
ChunkGenerator expert_generator(const env::EnvConfig& env_cfg, std::size_t horizon,
                                std::uint64_t episode_seed);

// Seed of rollout `index` in a batch starting at `seed_base`.
std::uint64_t episode_seed(std::uint64_t seed_base, std::uint64_t index);

// Runs n episodes with seeds episode_seed(seed_base, i) across threads.
std::vector<RolloutRecord> run_batch(Strategy strategy, const PolicyBundle& bundle,
                                     const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                                     std::size_t num_steps, std::uint64_t seed_base,
                                     std::size_t n, std::size_t threads = 0);

}  // namespace rtc::exec
