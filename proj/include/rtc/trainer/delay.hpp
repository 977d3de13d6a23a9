#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rtc/random.hpp"

namespace rtc::train {

// Distribution of simulated inference delays over the support {0..d_max}.
struct DelayDistribution {
  enum class Kind : std::uint32_t { kUniformInt = 0, kGeometric = 1 };

  Kind kind = Kind::kUniformInt;
  std::size_t d_max = 0;
  // Geometric only: P(d) proportional to base^d, base in (0, 1).
  double base = 0.5;

  static DelayDistribution uniform(std::size_t d_max);
  static DelayDistribution geometric(std::size_t d_max, double base);

  void validate() const;
  std::vector<double> probabilities() const;
  std::string describe() const;

  bool operator==(const DelayDistribution&) const = default;
};

std::size_t sample_delay(const DelayDistribution& dist, Rng& rng);

}  // namespace rtc::train
