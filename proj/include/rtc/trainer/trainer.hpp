#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "rtc/envkit/dataset.hpp"
#include "rtc/trainer/checkpoint.hpp"
#include "rtc/trainer/delay.hpp"

namespace rtc::train {

struct TrainConfig {
  std::size_t epochs = 32;
  std::size_t batch_size = 32;
  // Cosine schedule length in epochs; 0 means (start epoch + epochs).
  std::size_t schedule_epochs = 0;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  // Train with simulated-delay prefix conditioning.
  bool conditioning = false;
  std::optional<DelayDistribution> delays;
  std::optional<std::filesystem::path> warm_start;
  // Architecture of freshly initialized networks (ignored on warm start).
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t time_embed_dim = 8;
  bool token_mixing = true;
  std::size_t mix_expansion = 4;
  // Gradient workers; results do not depend on this.
  std::size_t threads = 0;

  void validate() const;

  // Human-readable JSON document; unknown keys are rejected.
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct TrainResult {
  Checkpoint checkpoint;
  // Mean batch loss of every epoch run.
  std::vector<double> epoch_losses;
};

// Minimizes the flow-matching loss (unconditioned) or the prefix loss with
// per-sample delays drawn from config.delays (conditioned), with Adam and a
// cosine learning-rate decay. Deterministic in config.seed. A warm start
// continues the parent's epoch count and learning-rate schedule with fresh
// optimizer moments; its normalization stats are kept.
TrainResult train(const TrainConfig& config, const env::Dataset& data,
                  const Checkpoint* warm_start = nullptr);

// Loads config.warm_start (if set) and trains.
TrainResult train_from_config(const TrainConfig& config, const env::Dataset& data);

// Average loss over the whole dataset at a fixed delay, with noise seeded by
// `seed` per record. Used for validation and warm-start checks.
double dataset_loss(const Checkpoint& ckpt, const env::Dataset& data,
                    std::size_t delay, std::uint64_t seed);

// Learning rate at a global step of a cosine schedule.
double cosine_lr(const OptimizerConfig& opt, std::uint64_t step,
                 std::uint64_t total_steps);

std::size_t steps_per_epoch(std::size_t records, std::size_t batch_size);

}  // namespace rtc::train
