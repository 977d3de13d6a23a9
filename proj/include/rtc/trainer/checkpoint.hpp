#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "rtc/envkit/dataset.hpp"
#include "rtc/flowpolicy/network.hpp"
#include "rtc/trainer/delay.hpp"

namespace rtc::train {

struct OptimizerConfig {
  double lr = 2e-3;
  double lr_min = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainingMetadata {
  std::uint64_t epochs_seen = 0;
  std::uint64_t gradient_steps = 0;
  std::uint64_t seed = 0;
  std::uint64_t batch_size = 0;
  // Length of the cosine learning-rate schedule, in epochs.
  std::uint64_t schedule_epochs = 0;
  // Set for prefix-conditioned training.
  std::optional<DelayDistribution> delays;
  OptimizerConfig optimizer;
};

// Trained policy plus everything needed to run it. The conditioning flag is
// fixed when the checkpoint is created.
class Checkpoint {
 public:
  Checkpoint(flow::PolicyParams params, env::Normalizer stats, bool conditioned,
             TrainingMetadata meta);

  flow::PolicyParams params;
  env::Normalizer stats;
  TrainingMetadata meta;

  bool conditioned() const { return conditioned_; }

 private:
  bool conditioned_;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rtc::train
