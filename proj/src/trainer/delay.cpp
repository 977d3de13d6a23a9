#include "rtc/trainer/delay.hpp"

#include <cmath>
#include <sstream>

#include "rtc/error.hpp"

namespace rtc::train {

DelayDistribution DelayDistribution::uniform(std::size_t d_max) {
  return {Kind::kUniformInt, d_max, 0.5};
}

DelayDistribution DelayDistribution::geometric(std::size_t d_max, double base) {
  return {Kind::kGeometric, d_max, base};
}

void DelayDistribution::validate() const {
  if (kind != Kind::kUniformInt && kind != Kind::kGeometric) {
    throw ConfigError("unknown delay distribution kind");
  }
  if (kind == Kind::kGeometric && !(base > 0.0 && base < 1.0)) {
    throw ConfigError("geometric delay base must lie in (0, 1)");
  }
}

std::vector<double> DelayDistribution::probabilities() const {
  validate();
  std::vector<double> p(d_max + 1);
  if (kind == Kind::kUniformInt) {
    for (double& v : p) v = 1.0 / static_cast<double>(d_max + 1);
    return p;
  }
  double total = 0.0;
  for (std::size_t d = 0; d <= d_max; ++d) {
    p[d] = std::pow(base, static_cast<double>(d));
    total += p[d];
  }
  for (double& v : p) v /= total;
  return p;
}

std::string DelayDistribution::describe() const {
  std::ostringstream out;
  if (kind == Kind::kUniformInt) {
    out << "uniform{0.." << d_max << "}";
  } else {
    out << "geometric{0.." << d_max << "}, base " << base;
  }
  return out.str();
}

std::size_t sample_delay(const DelayDistribution& dist, Rng& rng) {
  if (dist.d_max == 0) return 0;
  const std::vector<double> p = dist.probabilities();
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t d = 0; d < p.size(); ++d) {
    cumulative += p[d];
    if (u < cumulative) return d;
  }
  return dist.d_max;
}

}  // namespace rtc::train
