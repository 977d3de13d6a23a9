#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rtc/envkit/env.hpp"
#include "rtc/envkit/expert.hpp"
#include "rtc/flowpolicy/types.hpp"

namespace rtc::env {

// Per-dimension affine action normalization.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  flow::ActionChunk normalize(const flow::ActionChunk& chunk) const;
  flow::ActionChunk denormalize(const flow::ActionChunk& chunk) const;
  Vec2 denormalize_row(const flow::ActionChunk& chunk, std::size_t row) const;
  bool identical(const Normalizer& other) const;
};

// One expert episode sliced into overlapping chunks: chunk t row i is the
// action executed at tick t + i (the last action repeats past the end).
struct Demo {
  std::uint64_t episode = 0;
  bool success = false;
  std::vector<flow::Observation> observations;
  std::vector<flow::ActionChunk> chunks;
};

struct Dataset {
  std::size_t horizon = 0;
  std::size_t obs_dim = kObsDim;
  std::size_t action_dim = kActionDim;
  std::uint64_t episodes_attempted = 0;
  Normalizer stats;
  std::vector<Demo> demos;

  std::size_t record_count() const;
};

// Runs the expert closed-loop for one seeded episode (style drawn from the
// same seed) and slices it into chunks of length `horizon`.
Demo run_expert_episode(const EnvConfig& cfg, std::size_t horizon,
                        std::uint64_t episode_seed, std::uint64_t episode = 0);

// Collects n_episodes expert episodes, keeps successful ones and computes
// action statistics. Throws DatasetError if none succeed.
Dataset gen_dataset(const EnvConfig& cfg, std::size_t n_episodes,
                    std::size_t horizon, std::uint64_t seed);

// Seed of episode `index` for dataset generation.
std::uint64_t dataset_episode_seed(std::uint64_t seed, std::uint64_t index);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rtc::env
