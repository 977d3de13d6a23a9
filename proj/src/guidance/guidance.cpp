#include "rtc/guidance/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtc/error.hpp"

namespace rtc::guidance {

void GuidanceConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("guidance beta must be >= 0");
  if (!(decay_c > 0.0 && decay_c < 1.0)) {
    throw ConfigError("soft-mask decay must lie in (0, 1)");
  }
  if (!(gamma_max > 0.0)) throw ConfigError("gamma_max must be positive");
  if (num_steps == 0) throw ConfigError("num_steps must be at least 1");
}

std::vector<double> soft_mask_weights(std::size_t horizon, std::size_t delay,
                                      std::size_t exec_horizon, double decay_c) {
  if (exec_horizon > horizon || delay > horizon - exec_horizon) {
    throw DomainError("soft mask requires d <= H - s <= H (H=" +
                      std::to_string(horizon) + ", s=" +
                      std::to_string(exec_horizon) + ", d=" +
                      std::to_string(delay) + ")");
  }
  if (!(decay_c > 0.0 && decay_c < 1.0)) {
    throw DomainError("soft-mask decay must lie in (0, 1)");
  }
  const std::size_t overlap = horizon - exec_horizon;
  std::vector<double> w(horizon, 0.0);
  for (std::size_t i = 0; i < overlap; ++i) {
    w[i] = i < delay ? 1.0 : std::pow(decay_c, static_cast<double>(i - delay + 1));
  }
  return w;
}

flow::ActionChunk guided_sample(const flow::VelocityModel& model,
                                const flow::Observation& obs,
                                const OverlapTarget& target,
                                const GuidanceConfig& cfg, Rng& rng,
                                flow::InferenceCost* cost) {
  cfg.validate();
  const std::size_t h = model.horizon();
  const std::size_t a = model.action_dim();
  if (target.y.horizon() != h || target.y.action_dim() != a) {
    throw StructuralError("overlap target must be padded to the full horizon");
  }
  const std::vector<double> weights =
      soft_mask_weights(h, target.delay, target.exec_horizon, cfg.decay_c);
  const std::size_t d = target.delay;
  for (std::size_t i = 0; i < h - target.exec_horizon; ++i) {
    for (double v : target.y.row(i)) {
      if (!std::isfinite(v)) throw DomainError("overlap target is not finite");
    }
  }

  flow::ActionChunk x = flow::draw_noise(h, a, rng);
  const double dt = 1.0 / static_cast<double>(cfg.num_steps);
  std::vector<double> tau(h);
  auto pin_prefix = [&] {
    for (std::size_t i = 0; i < d; ++i) {
      auto src = target.y.row(i);
      std::copy(src.begin(), src.end(), x.mutable_row(i).begin());
    }
  };

  for (std::size_t step = 0; step < cfg.num_steps; ++step) {
    const double t = static_cast<double>(step) / static_cast<double>(cfg.num_steps);
    pin_prefix();
    std::fill(tau.begin(), tau.end(), t);

    nd::Tape tape;
    nd::Var xv;
    nd::Var v;
    nd::Var denoised;
    try {
      xv = tape.variable(x.tensor());
      v = model.velocity(tape, obs, xv, tau);
      denoised = tape.add(xv, tape.mul(v, tape.constant(nd::Tensor::scalar(1.0 - t))));
    } catch (const NumericError& e) {
      throw NumericError("guided step " + std::to_string(step) + ": " + e.what());
    }

    const nd::Tensor& est = tape.value(denoised);
    nd::Tensor cotangent(nd::Shape{h, a});
    for (std::size_t i = 0; i < h; ++i) {
      if (weights[i] == 0.0) continue;
      for (std::size_t j = 0; j < a; ++j) {
        cotangent.at(i, j) = weights[i] * (target.y.at(i, j) - est.at(i, j));
      }
    }
    tape.backward(denoised, cotangent);
    const nd::Tensor correction = tape.grad(xv);

    const double gamma = std::min(1.0 - t, cfg.gamma_max);
    const auto vd = tape.value(v).data();
    const auto cd = correction.data();
    nd::Tensor next = x.tensor();
    auto xs = next.mutable_data();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      xs[k] += dt * (vd[k] + gamma * cfg.beta * cd[k]);
    }
    x = flow::ActionChunk(std::move(next));
    if (!x.tensor().all_finite()) {
      throw NumericError("non-finite guided state at step " + std::to_string(step));
    }
  }
  pin_prefix();
  if (cost != nullptr) {
    cost->forward_passes += cfg.num_steps;
    cost->vjp_passes += cfg.num_steps;
    cost->chunks += 1;
  }
  return x;
}

}  // namespace rtc::guidance
