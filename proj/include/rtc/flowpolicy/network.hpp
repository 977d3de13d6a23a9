#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rtc/flowpolicy/types.hpp"
#include "rtc/ndcore/tape.hpp"

namespace rtc::flow {

enum class TimeConditioning : std::uint32_t {
  // One flow time for the whole chunk (the first row's value is used).
  kShared = 0,
  // Each action row carries its own flow time.
  kPerToken = 1,
};

struct Architecture {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::size_t horizon = 0;
  std::size_t width = 32;
  std::size_t depth = 2;
  std::size_t time_embed_dim = 8;
  bool token_mixing = true;
  // Hidden size of the token-mixing layer, as a multiple of the horizon.
  std::size_t mix_expansion = 4;
  TimeConditioning time_conditioning = TimeConditioning::kPerToken;

  bool operator==(const Architecture&) const = default;
};

struct ParamSpec {
  std::string name;
  nd::Shape shape;
};

// Ordered parameter layout of the residual MLP for an architecture.
std::vector<ParamSpec> parameter_layout(const Architecture& arch);
std::size_t parameter_count(const Architecture& arch);

// Weights of the velocity network. Tensors follow parameter_layout order.
struct PolicyParams {
  Architecture arch;
  std::vector<nd::Tensor> tensors;

  static PolicyParams initialize(const Architecture& arch, std::uint64_t seed);
  // Throws StructuralError when shapes disagree with the descriptor and
  // NumericError on non-finite weights.
  void validate() const;
  std::size_t count() const;
};

// Sinusoidal features of a flow time, time_embed_dim wide.
std::vector<double> time_embedding(double tau, std::size_t dim);

// Records v(x, obs, tau) on the tape. `params` holds one Var per layout entry.
nd::Var build_velocity(nd::Tape& tape, const Architecture& arch,
                       std::span<const nd::Var> params, const Observation& obs,
                       nd::Var x, std::span<const double> tau);

// Anything the samplers can integrate: records a velocity for x on a tape.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual std::size_t horizon() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual nd::Var velocity(nd::Tape& tape, const Observation& obs, nd::Var x,
                           std::span<const double> tau) const = 0;
};

// Read-only view of PolicyParams as a VelocityModel.
class Policy final : public VelocityModel {
 public:
  explicit Policy(const PolicyParams& params);

  std::size_t horizon() const override { return params_->arch.horizon; }
  std::size_t action_dim() const override { return params_->arch.action_dim; }
  nd::Var velocity(nd::Tape& tape, const Observation& obs, nd::Var x,
                   std::span<const double> tau) const override;

  const PolicyParams& params() const { return *params_; }

 private:
  const PolicyParams* params_;
};

// Evaluates the network once without gradients.
ActionChunk forward(const PolicyParams& params, const Observation& obs,
                    const FlowState& state);

}  // namespace rtc::flow
