#include "rtc/flowpolicy/flow.hpp"

#include <string>

#include "rtc/error.hpp"

namespace rtc::flow {

FlowState interpolate(const ActionChunk& chunk, const NoiseSample& eps,
                      std::span<const double> tau) {
  const std::size_t h = chunk.horizon();
  const std::size_t a = chunk.action_dim();
  if (eps.horizon() != h || eps.action_dim() != a || tau.size() != h) {
    throw StructuralError("interpolate: inconsistent shapes");
  }
  FlowState state{ActionChunk(h, a), std::vector<double>(tau.begin(), tau.end())};
  for (std::size_t i = 0; i < h; ++i) {
    const double t = tau[i];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw DomainError("flow time " + std::to_string(t) + " at row " +
                        std::to_string(i) + " is outside [0, 1]");
    }
    for (std::size_t j = 0; j < a; ++j) {
      state.x.at(i, j) = t * chunk.at(i, j) + (1.0 - t) * eps.at(i, j);
    }
  }
  return state;
}

ActionChunk draw_noise(std::size_t horizon, std::size_t action_dim, Rng& rng) {
  ActionChunk eps(horizon, action_dim);
  for (std::size_t i = 0; i < horizon; ++i) {
    for (std::size_t j = 0; j < action_dim; ++j) eps.at(i, j) = rng.normal();
  }
  return eps;
}

TrainingDraw draw_training_noise(std::size_t horizon, std::size_t action_dim,
                                 Rng& rng) {
  TrainingDraw draw;
  draw.tau = rng.uniform();
  draw.eps = draw_noise(horizon, action_dim, rng);
  return draw;
}

MaskedError masked_error(const PolicyParams& params, const Observation& obs,
                         const ActionChunk& chunk, std::size_t delay, Rng& rng,
                         bool with_grads) {
  const Architecture& arch = params.arch;
  const std::size_t h = arch.horizon;
  const std::size_t a = arch.action_dim;
  if (chunk.horizon() != h || chunk.action_dim() != a) {
    throw StructuralError("chunk shape does not match the policy");
  }
  if (delay > h) {
    throw DomainError("delay " + std::to_string(delay) +
                      " exceeds the prediction horizon " + std::to_string(h));
  }

  const TrainingDraw draw = draw_training_noise(h, a, rng);
  std::vector<double> tau(h, draw.tau);
  for (std::size_t i = 0; i < delay; ++i) tau[i] = 1.0;
  FlowState state = interpolate(chunk, draw.eps, tau);
  // Prefix rows carry the clean actions; tau == 1 makes this exact already,
  // but the copy keeps it independent of floating-point rounding.
  for (std::size_t i = 0; i < delay; ++i) {
    for (std::size_t j = 0; j < a; ++j) state.x.at(i, j) = chunk.at(i, j);
  }

  nd::Tensor target(nd::Shape{h, a});
  nd::Tensor mask(nd::Shape{h, a});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < a; ++j) {
      target.at(i, j) = chunk.at(i, j) - draw.eps.at(i, j);
      mask.at(i, j) = i >= delay ? 1.0 : 0.0;
    }
  }

  nd::Tape tape;
  std::vector<nd::Var> vars;
  vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.push_back(tape.variable(t));
  const nd::Var x = tape.constant(state.x.tensor());
  const nd::Var v = build_velocity(tape, arch, vars, obs, x, state.tau);
  const nd::Var diff = tape.sub(v, tape.constant(std::move(target)));
  const nd::Var sq = tape.mul(diff, diff);
  const nd::Var masked =
      tape.where(tape.constant(std::move(mask)), sq,
                 tape.constant(nd::Tensor::scalar(0.0)));
  const nd::Var total = tape.sum(masked);

  MaskedError out;
  out.sum_sq = tape.value(total)[0];
  out.count = static_cast<double>((h - delay) * a);
  if (with_grads) {
    tape.backward(total);
    out.output_grad = tape.grad(v);
    out.param_grads.reserve(vars.size());
    for (nd::Var p : vars) out.param_grads.push_back(tape.grad(p));
  }
  return out;
}

double fm_loss(const PolicyParams& params, const Observation& obs,
               const ActionChunk& chunk, Rng& rng) {
  return masked_error(params, obs, chunk, 0, rng, false).loss();
}

double prefix_loss(const PolicyParams& params, const Observation& obs,
                   const ActionChunk& chunk, std::size_t delay, Rng& rng) {
  return masked_error(params, obs, chunk, delay, rng, false).loss();
}

LossGradient prefix_loss_gradient(const PolicyParams& params,
                                  const Observation& obs,
                                  const ActionChunk& chunk, std::size_t delay,
                                  Rng& rng) {
  MaskedError err = masked_error(params, obs, chunk, delay, rng, true);
  const double scale = 1.0 / (err.count + kLossGuard);
  LossGradient out;
  out.loss = err.loss();
  out.output_grad = std::move(err.output_grad);
  for (double& g : out.output_grad.mutable_data()) g *= scale;
  out.param_grads = std::move(err.param_grads);
  for (auto& t : out.param_grads) {
    for (double& g : t.mutable_data()) g *= scale;
  }
  return out;
}

namespace {

ActionChunk integrate(const VelocityModel& model, const Observation& obs,
                      const ActionChunk* prefix, std::size_t delay,
                      std::size_t num_steps, Rng& rng, InferenceCost* cost) {
  const std::size_t h = model.horizon();
  const std::size_t a = model.action_dim();
  if (num_steps == 0) throw DomainError("num_steps must be at least 1");
  if (delay > h) {
    throw DomainError("delay " + std::to_string(delay) +
                      " exceeds the prediction horizon " + std::to_string(h));
  }
  if (prefix != nullptr && (prefix->horizon() != h || prefix->action_dim() != a)) {
    throw StructuralError("prefix buffer must be padded to the full horizon");
  }

  ActionChunk x = draw_noise(h, a, rng);
  const double dt = 1.0 / static_cast<double>(num_steps);
  std::vector<double> tau(h);
  auto pin_prefix = [&] {
    for (std::size_t i = 0; i < delay; ++i) {
      auto dst = x.mutable_row(i);
      auto src = prefix->row(i);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  };

  for (std::size_t step = 0; step < num_steps; ++step) {
    const double t = static_cast<double>(step) / static_cast<double>(num_steps);
    pin_prefix();
    for (std::size_t i = 0; i < h; ++i) tau[i] = i < delay ? 1.0 : t;

    nd::Tape tape;
    nd::Var v;
    try {
      v = model.velocity(tape, obs, tape.constant(x.tensor()), tau);
    } catch (const NumericError& e) {
      throw NumericError("sampling step " + std::to_string(step) + ": " + e.what());
    }
    const auto vd = tape.value(v).data();
    auto xd = x.tensor();
    auto xs = xd.mutable_data();
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] += dt * vd[k];
    x = ActionChunk(std::move(xd));
    if (!x.tensor().all_finite()) {
      throw NumericError("non-finite sampler state at step " +
                         std::to_string(step));
    }
  }
  pin_prefix();
  if (cost != nullptr) {
    cost->forward_passes += num_steps;
    cost->chunks += 1;
  }
  return x;
}

}  // namespace

ActionChunk sample(const VelocityModel& model, const Observation& obs,
                   std::size_t num_steps, Rng& rng, InferenceCost* cost) {
  return integrate(model, obs, nullptr, 0, num_steps, rng, cost);
}

ActionChunk sample_with_prefix(const VelocityModel& model,
                               const Observation& obs,
                               const ActionChunk& prefix, std::size_t delay,
                               std::size_t num_steps, Rng& rng,
                               InferenceCost* cost) {
  return integrate(model, obs, &prefix, delay, num_steps, rng, cost);
}

}  // namespace rtc::flow
