#include "rtc/executor/executor.hpp"

#include <cmath>
#include <optional>

#include "rtc/envkit/expert.hpp"
#include "rtc/error.hpp"
#include "rtc/flowpolicy/flow.hpp"
#include "rtc/parallel.hpp"
#include "rtc/random.hpp"

namespace rtc::exec {
namespace {

constexpr std::uint64_t kEnvSalt = 0x656e76;
constexpr std::uint64_t kChunkSalt = 0x63686e6b;
constexpr std::uint64_t kStyleSalt = 0x7374796c;
constexpr std::uint64_t kBatchSalt = 0x62617463;

double jump(const env::Vec2& a, const env::Vec2& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

bool finite_state(const env::EnvState& s) {
  return std::isfinite(s.pos[0]) && std::isfinite(s.pos[1]) && std::isfinite(s.vel[0]) &&
         std::isfinite(s.vel[1]);
}

class PolicyGenerator {
 public:
  PolicyGenerator(Strategy strategy, const train::Checkpoint& ckpt,
                  guidance::GuidanceConfig gcfg, std::size_t num_steps)
      : strategy_(strategy), ckpt_(&ckpt), gcfg_(gcfg), num_steps_(num_steps) {
    gcfg_.num_steps = num_steps;
  }

  GeneratedChunk operator()(const ChunkRequest& req) const {
    const flow::Policy model(ckpt_->params);
    const std::size_t h = ckpt_->params.arch.horizon;
    const std::size_t a = ckpt_->params.arch.action_dim;
    Rng rng(req.seed);
    GeneratedChunk out{flow::ActionChunk(h, a), {}, {}};
    switch (strategy_) {
      case Strategy::kSynchronous:
      case Strategy::kNaiveAsync:
        out.chunk = flow::sample(model, req.obs, num_steps_, rng, &out.cost);
        break;
      case Strategy::kTrainingTimeRTC: {
        if (req.prev != nullptr) {
          const flow::ActionChunk prefix = extract_prefix(*req.prev, req.offset, req.delay);
          out.chunk = flow::sample_with_prefix(model, req.obs, prefix, req.delay, num_steps_,
                                               rng, &out.cost);
        } else {
          out.chunk = flow::sample_with_prefix(model, req.obs, flow::ActionChunk(h, a), 0,
                                               num_steps_, rng, &out.cost);
        }
        break;
      }
      case Strategy::kInferenceTimeRTC: {
        // The first chunk has nothing to agree with: zero weights everywhere.
        const guidance::OverlapTarget target =
            req.prev != nullptr
                ? build_overlap_target(*req.prev, req.offset, req.delay, req.exec_horizon, h)
                : guidance::OverlapTarget{flow::ActionChunk(h, a), 0, h};
        out.chunk = guidance::guided_sample(model, req.obs, target, gcfg_, rng, &out.cost);
        break;
      }
    }
    out.actions.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
      out.actions.push_back(ckpt_->stats.denormalize_row(out.chunk, i));
    }
    return out;
  }

 private:
  Strategy strategy_;
  const train::Checkpoint* ckpt_;
  guidance::GuidanceConfig gcfg_;
  std::size_t num_steps_;
};

}  // namespace

void DelayConfig::validate() const {
  if (exec_horizon < 1 || exec_horizon > horizon) {
    throw ConfigError("execution horizon s=" + std::to_string(exec_horizon) +
                      " must lie in [1, H=" + std::to_string(horizon) + "]");
  }
  if (delay > horizon - exec_horizon) {
    throw ConfigError("delay d=" + std::to_string(delay) + " exceeds H - s = " +
                      std::to_string(horizon - exec_horizon));
  }
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kSynchronous: return "synchronous";
    case Strategy::kNaiveAsync: return "naive_async";
    case Strategy::kInferenceTimeRTC: return "inference_rtc";
    case Strategy::kTrainingTimeRTC: return "training_rtc";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::kSynchronous, Strategy::kNaiveAsync,
                     Strategy::kInferenceTimeRTC, Strategy::kTrainingTimeRTC}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + name +
                    "' (expected synchronous, naive_async, inference_rtc or training_rtc)");
}

bool is_async(Strategy s) { return s != Strategy::kSynchronous; }

void check_compatible(Strategy strategy, const PolicyBundle& bundle, const DelayConfig& cfg) {
  cfg.validate();
  const bool wants_conditioned = strategy == Strategy::kTrainingTimeRTC;
  const train::Checkpoint* ckpt = wants_conditioned ? bundle.conditioned : bundle.base;
  const std::string name = to_string(strategy);
  if (ckpt == nullptr) {
    throw ConfigError(name + " needs a" +
                      std::string(wants_conditioned ? " prefix-conditioned" : "n unconditioned") +
                      " checkpoint");
  }
  if (ckpt->conditioned() != wants_conditioned) {
    throw ConfigError(name + " cannot run a" +
                      std::string(ckpt->conditioned() ? " prefix-conditioned"
                                                      : "n unconditioned") +
                      " checkpoint");
  }
  const auto& arch = ckpt->params.arch;
  if (arch.horizon != cfg.horizon || arch.obs_dim != env::kObsDim ||
      arch.action_dim != env::kActionDim) {
    throw ConfigError(name + ": checkpoint horizon " + std::to_string(arch.horizon) +
                      " does not match H=" + std::to_string(cfg.horizon));
  }
  if (is_async(strategy) && cfg.delay > cfg.exec_horizon) {
    throw ConfigError(name + ": asynchronous execution needs d <= s (d=" +
                      std::to_string(cfg.delay) + ", s=" + std::to_string(cfg.exec_horizon) +
                      ")");
  }
  if (strategy == Strategy::kInferenceTimeRTC) bundle.guidance.validate();
}

flow::ActionChunk extract_prefix(const flow::ActionChunk& prev, std::size_t offset,
                                 std::size_t delay) {
  const std::size_t h = prev.horizon();
  if (offset > h || delay > h - offset) {
    throw DomainError("prefix rows [" + std::to_string(offset) + ", " +
                      std::to_string(offset + delay) + ") exceed horizon " +
                      std::to_string(h));
  }
  flow::ActionChunk out(h, prev.action_dim());
  for (std::size_t i = 0; i < delay; ++i) {
    const auto src = prev.row(offset + i);
    std::copy(src.begin(), src.end(), out.mutable_row(i).begin());
  }
  return out;
}

guidance::OverlapTarget build_overlap_target(const flow::ActionChunk& prev,
                                             std::size_t offset, std::size_t delay,
                                             std::size_t exec_horizon,
                                             std::size_t horizon) {
  if (prev.horizon() != horizon) {
    throw DomainError("previous chunk has " + std::to_string(prev.horizon()) +
                      " rows, expected " + std::to_string(horizon));
  }
  if (exec_horizon < 1 || exec_horizon > horizon) {
    throw DomainError("execution horizon must lie in [1, H]");
  }
  const std::size_t overlap = horizon - exec_horizon;
  if (delay > overlap) {
    throw DomainError("delay " + std::to_string(delay) + " exceeds the overlap H - s = " +
                      std::to_string(overlap));
  }
  if (offset + overlap > horizon) {
    throw DomainError("overlap rows [" + std::to_string(offset) + ", " +
                      std::to_string(offset + overlap) + ") exceed horizon " +
                      std::to_string(horizon));
  }
  flow::ActionChunk y(horizon, prev.action_dim());
  for (std::size_t i = 0; i < overlap; ++i) {
    const auto src = prev.row(offset + i);
    std::copy(src.begin(), src.end(), y.mutable_row(i).begin());
  }
  return {std::move(y), delay, exec_horizon};
}

RolloutRecord run_schedule(bool asynchronous, const ChunkGenerator& generator,
                           const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                           std::uint64_t episode_seed, std::size_t max_ticks) {
  cfg.validate();
  const std::size_t s = cfg.exec_horizon;
  const std::size_t d = cfg.delay;
  if (asynchronous && d > s) {
    throw ConfigError("asynchronous execution needs d <= s");
  }

  Rng env_rng(derive_seed(episode_seed, 0, kEnvSalt));
  env::EnvState state = env::reset(env_cfg, env_rng);
  RolloutRecord rec;
  rec.states.push_back(state);

  std::size_t chunk_index = 0;
  auto request = [&](std::size_t tick, const GeneratedChunk* prev, std::size_t offset) {
    ChunkRequest req;
    req.state = &state;
    req.obs = env::observe(env_cfg, state);
    req.prev = prev != nullptr ? &prev->chunk : nullptr;
    req.offset = offset;
    req.delay = prev != nullptr ? d : 0;
    req.exec_horizon = s;
    req.chunk_index = chunk_index;
    req.seed = derive_seed(episode_seed, chunk_index, kChunkSalt);
    ++chunk_index;
    GeneratedChunk g = generator(req);
    if (g.actions.size() != cfg.horizon) {
      throw StructuralError("chunk generator returned " + std::to_string(g.actions.size()) +
                            " actions, expected " + std::to_string(cfg.horizon));
    }
    g.cost.chunks = 1;
    rec.cost += g.cost;
    rec.source_ticks.push_back(tick);
    return g;
  };

  // Current chunk, the row it runs at its switch tick, and that tick.
  GeneratedChunk current = request(0, nullptr, 0);
  std::size_t start_row = 0;
  std::size_t switch_tick = 0;
  rec.switch_ticks.push_back(0);
  std::optional<GeneratedChunk> pending;
  long current_id = 0;

  std::size_t t = 0;
  while (!state.done() && (max_ticks == 0 || t < max_ticks)) {
    bool holding = false;
    if (asynchronous) {
      auto maybe_launch = [&] {
        if (!pending && t + d == switch_tick + s) {
          pending = request(t, &current, start_row + (t - switch_tick));
        }
      };
      maybe_launch();
      if (t == switch_tick + s) {
        current = std::move(*pending);
        pending.reset();
        start_row = d;
        switch_tick = t;
        ++current_id;
        rec.switch_ticks.push_back(t);
      }
      maybe_launch();
    } else {
      if (t == switch_tick + s) {
        // Boundary: compute from this observation, hold for d ticks.
        current = request(t, &current, s);
        start_row = 0;
        switch_tick = t + d;
        ++current_id;
        rec.switch_ticks.push_back(switch_tick);
      }
      holding = t < switch_tick;
    }

    env::Vec2 action{};
    if (holding) {
      if (!rec.actions.empty()) action = rec.actions.back();
    } else {
      action = current.actions[start_row + (t - switch_tick)];
    }
    if (!rec.actions.empty()) rec.max_jump = std::max(rec.max_jump, jump(action, rec.actions.back()));
    rec.actions.push_back(action);
    rec.action_chunk.push_back(holding ? -1 : current_id);
    state = env::step(env_cfg, state, action);
    if (!finite_state(state)) {
      throw NumericError("environment state diverged at tick " + std::to_string(t));
    }
    rec.states.push_back(state);
    ++t;
  }
  // A chunk whose execution never started is not a switch.
  while (!rec.switch_ticks.empty() && rec.switch_ticks.back() >= t && rec.switch_ticks.size() > 1) {
    rec.switch_ticks.pop_back();
  }
  rec.success = state.status == env::Status::kSuccess;
  rec.length = rec.actions.size();
  return rec;
}

RolloutRecord run_episode(Strategy strategy, const PolicyBundle& bundle,
                          const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                          std::size_t num_steps, std::uint64_t episode_seed,
                          std::size_t max_ticks) {
  check_compatible(strategy, bundle, cfg);
  const train::Checkpoint& ckpt =
      strategy == Strategy::kTrainingTimeRTC ? *bundle.conditioned : *bundle.base;
  const PolicyGenerator gen(strategy, ckpt, bundle.guidance, num_steps);
  return run_schedule(is_async(strategy), std::cref(gen), env_cfg, cfg, episode_seed,
                      max_ticks);
}

ChunkGenerator expert_generator(const env::EnvConfig& env_cfg, std::size_t horizon,
                                std::uint64_t episode_seed) {
  Rng style_rng(derive_seed(episode_seed, 0, kStyleSalt));
  env::ExpertStyle style;
  style.side = style_rng.uniform() < 0.5 ? 1 : -1;
  return [env_cfg, horizon, style](const ChunkRequest& req) {
    GeneratedChunk out{flow::ActionChunk(horizon, env::kActionDim), {}, {}};
    env::EnvState sim = *req.state;
    env::Vec2 a{};
    for (std::size_t i = 0; i < horizon; ++i) {
      if (!sim.done()) {
        a = env::expert_action(env_cfg, sim, style);
        sim = env::step(env_cfg, sim, a);
      }
      out.chunk.at(i, 0) = a[0];
      out.chunk.at(i, 1) = a[1];
      out.actions.push_back(a);
    }
    return out;
  };
}

std::uint64_t episode_seed(std::uint64_t seed_base, std::uint64_t index) {
  return derive_seed(seed_base, index, kBatchSalt);
}

std::vector<RolloutRecord> run_batch(Strategy strategy, const PolicyBundle& bundle,
                                     const env::EnvConfig& env_cfg, const DelayConfig& cfg,
                                     std::size_t num_steps, std::uint64_t seed_base,
                                     std::size_t n, std::size_t threads) {
  check_compatible(strategy, bundle, cfg);
  std::vector<RolloutRecord> out(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        out[i] = run_episode(strategy, bundle, env_cfg, cfg, num_steps,
                             episode_seed(seed_base, i));
      },
      threads);
  return out;
}

}  // namespace rtc::exec
