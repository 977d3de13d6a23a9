#include "rtc/flowpolicy/network.hpp"

#include <cmath>
#include <numbers>

#include "rtc/error.hpp"
#include "rtc/random.hpp"

namespace rtc::flow {

ActionChunk::ActionChunk(nd::Tensor actions) : actions_(std::move(actions)) {
  if (actions_.rank() != 2) {
    throw StructuralError("action chunk must be rank 2, got " +
                          nd::shape_string(actions_.shape()));
  }
}

std::vector<ParamSpec> parameter_layout(const Architecture& arch) {
  const std::size_t w = arch.width;
  const std::size_t h = arch.horizon;
  std::vector<ParamSpec> specs = {
      {"in.obs.w", {arch.obs_dim, w}},
      {"in.bias", {w}},
      {"in.x.w", {arch.action_dim, w}},
      {"in.time.w", {arch.time_embed_dim, w}},
      {"in.pos", {h, w}},
  };
  for (std::size_t b = 0; b < arch.depth; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    if (arch.token_mixing) {
      const std::size_t m = arch.mix_expansion * h;
      specs.push_back({p + "mix.w1", {m, h}});
      specs.push_back({p + "mix.w2", {h, m}});
    }
    specs.push_back({p + "mlp.w1", {w, w}});
    specs.push_back({p + "mlp.b1", {w}});
    specs.push_back({p + "mlp.w2", {w, w}});
    specs.push_back({p + "mlp.b2", {w}});
  }
  specs.push_back({"out.w", {w, arch.action_dim}});
  specs.push_back({"out.b", {arch.action_dim}});
  return specs;
}

std::size_t parameter_count(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& s : parameter_layout(arch)) n += nd::element_count(s.shape);
  return n;
}

PolicyParams PolicyParams::initialize(const Architecture& arch,
                                      std::uint64_t seed) {
  if (arch.obs_dim == 0 || arch.action_dim == 0 || arch.horizon == 0 ||
      arch.width == 0 || arch.time_embed_dim % 2 != 0 ||
      (arch.token_mixing && arch.mix_expansion == 0)) {
    throw ConfigError("invalid architecture descriptor");
  }
  Rng rng(seed);
  PolicyParams params{arch, {}};
  for (const auto& spec : parameter_layout(arch)) {
    nd::Tensor t(spec.shape);
    double scale = 0.0;
    const std::string& name = spec.name;
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (spec.shape.size() == 2) {
      // Token-mixing weights multiply from the left.
      const bool left = name.find(".mix.") != std::string::npos;
      const double fan_in = static_cast<double>(left ? spec.shape[1] : spec.shape[0]);
      scale = 1.0 / std::sqrt(fan_in);
      // Residual branches and the head start small.
      if (ends_with("mlp.w2") || ends_with("mix.w2") || name == "out.w") {
        scale *= 0.1;
      }
      if (name == "in.pos") scale = 0.1;
    }
    if (scale > 0.0) {
      for (double& v : t.mutable_data()) v = scale * rng.normal();
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

void PolicyParams::validate() const {
  const auto layout = parameter_layout(arch);
  if (layout.size() != tensors.size()) {
    throw StructuralError("parameter count " + std::to_string(tensors.size()) +
                          " does not match descriptor (" +
                          std::to_string(layout.size()) + ")");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].shape() != layout[i].shape) {
      throw StructuralError("parameter " + layout[i].name + " has shape " +
                            nd::shape_string(tensors[i].shape()) + ", expected " +
                            nd::shape_string(layout[i].shape));
    }
    if (!tensors[i].all_finite()) {
      throw NumericError("parameter " + layout[i].name + " is not finite");
    }
  }
}

std::size_t PolicyParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::vector<double> time_embedding(double tau, std::size_t dim) {
  std::vector<double> out(dim);
  double freq = std::numbers::pi;
  for (std::size_t k = 0; k + 1 < dim; k += 2) {
    out[k] = std::sin(freq * tau);
    out[k + 1] = std::cos(freq * tau);
    freq *= 2.0;
  }
  return out;
}

nd::Var build_velocity(nd::Tape& tape, const Architecture& arch,
                       std::span<const nd::Var> params, const Observation& obs,
                       nd::Var x, std::span<const double> tau) {
  const std::size_t h = arch.horizon;
  const std::size_t e = arch.time_embed_dim;
  if (obs.features.size() != arch.obs_dim) {
    throw StructuralError("observation has " +
                          std::to_string(obs.features.size()) +
                          " features, policy expects " +
                          std::to_string(arch.obs_dim));
  }
  if (tau.size() != h) {
    throw StructuralError("expected one flow time per action row");
  }
  if (tape.value(x).shape() != nd::Shape{h, arch.action_dim}) {
    throw StructuralError("noisy chunk has shape " +
                          nd::shape_string(tape.value(x).shape()));
  }

  nd::Tensor temb(nd::Shape{h, e});
  for (std::size_t i = 0; i < h; ++i) {
    const double t = arch.time_conditioning == TimeConditioning::kShared
                         ? tau[0]
                         : tau[i];
    const auto row = time_embedding(t, e);
    std::copy(row.begin(), row.end(), temb.mutable_row(i).begin());
  }

  std::size_t p = 0;
  const nd::Var obs_w = params[p++];
  const nd::Var in_bias = params[p++];
  const nd::Var x_w = params[p++];
  const nd::Var time_w = params[p++];
  const nd::Var pos = params[p++];

  const nd::Var obs_var = tape.constant(
      nd::Tensor(nd::Shape{arch.obs_dim}, obs.features));
  const nd::Var context = tape.affine(obs_var, obs_w, in_bias);
  nd::Var hid = tape.matmul(x, x_w);
  hid = tape.add(hid, tape.matmul(tape.constant(std::move(temb)), time_w));
  hid = tape.add(hid, pos);
  hid = tape.add(hid, context);

  for (std::size_t b = 0; b < arch.depth; ++b) {
    if (arch.token_mixing) {
      const nd::Var w1 = params[p++];
      const nd::Var w2 = params[p++];
      const nd::Var mixed = tape.tanh(tape.matmul(w1, hid));
      hid = tape.add(hid, tape.matmul(w2, mixed));
    }
    const nd::Var w1 = params[p++];
    const nd::Var b1 = params[p++];
    const nd::Var w2 = params[p++];
    const nd::Var b2 = params[p++];
    const nd::Var inner = tape.tanh(tape.affine(hid, w1, b1));
    hid = tape.add(hid, tape.affine(inner, w2, b2));
  }
  const nd::Var out_w = params[p++];
  const nd::Var out_b = params[p++];
  return tape.affine(tape.tanh(hid), out_w, out_b);
}

Policy::Policy(const PolicyParams& params) : params_(&params) {}

nd::Var Policy::velocity(nd::Tape& tape, const Observation& obs, nd::Var x,
                         std::span<const double> tau) const {
  std::vector<nd::Var> vars;
  vars.reserve(params_->tensors.size());
  for (const auto& t : params_->tensors) vars.push_back(tape.constant(t));
  return build_velocity(tape, params_->arch, vars, obs, x, tau);
}

ActionChunk forward(const PolicyParams& params, const Observation& obs,
                    const FlowState& state) {
  nd::Tape tape;
  const nd::Var x = tape.constant(state.x.tensor());
  const nd::Var v = Policy(params).velocity(tape, obs, x, state.tau);
  return ActionChunk(tape.value(v));
}

}  // namespace rtc::flow
