#include "rtc/envkit/dataset.hpp"

#include <cmath>
#include <string>

#include "rtc/binary_io.hpp"
#include "rtc/error.hpp"

namespace rtc::env {
namespace {

constexpr std::string_view kMagic{"RTCDSET\0", 8};
constexpr std::uint32_t kVersion = 1;

}  // namespace

flow::ActionChunk Normalizer::normalize(const flow::ActionChunk& chunk) const {
  flow::ActionChunk out(chunk.horizon(), chunk.action_dim());
  for (std::size_t i = 0; i < chunk.horizon(); ++i) {
    for (std::size_t j = 0; j < chunk.action_dim(); ++j) {
      out.at(i, j) = (chunk.at(i, j) - mean[j]) / std[j];
    }
  }
  return out;
}

flow::ActionChunk Normalizer::denormalize(const flow::ActionChunk& chunk) const {
  flow::ActionChunk out(chunk.horizon(), chunk.action_dim());
  for (std::size_t i = 0; i < chunk.horizon(); ++i) {
    for (std::size_t j = 0; j < chunk.action_dim(); ++j) {
      out.at(i, j) = chunk.at(i, j) * std[j] + mean[j];
    }
  }
  return out;
}

Vec2 Normalizer::denormalize_row(const flow::ActionChunk& chunk,
                                 std::size_t row) const {
  return {chunk.at(row, 0) * std[0] + mean[0], chunk.at(row, 1) * std[1] + mean[1]};
}

bool Normalizer::identical(const Normalizer& other) const {
  return mean == other.mean && std == other.std;
}

std::size_t Dataset::record_count() const {
  std::size_t n = 0;
  for (const auto& d : demos) n += d.chunks.size();
  return n;
}

std::uint64_t dataset_episode_seed(std::uint64_t seed, std::uint64_t index) {
  return derive_seed(seed, index, 0x64617461);
}

Demo run_expert_episode(const EnvConfig& cfg, std::size_t horizon,
                        std::uint64_t episode_seed, std::uint64_t episode) {
  Rng rng(episode_seed);
  EnvState state = reset(cfg, rng);
  ExpertStyle style;
  style.side = rng.uniform() < 0.5 ? 1 : -1;

  Demo demo;
  demo.episode = episode;
  std::vector<Vec2> actions;
  while (!state.done()) {
    demo.observations.push_back(observe(cfg, state));
    const Vec2 a = expert_action(cfg, state, style);
    actions.push_back(a);
    state = step(cfg, state, a);
  }
  demo.success = state.status == Status::kSuccess;
  const std::size_t n = actions.size();
  demo.chunks.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    flow::ActionChunk chunk(horizon, kActionDim);
    for (std::size_t i = 0; i < horizon; ++i) {
      const Vec2& a = actions[std::min(t + i, n - 1)];
      chunk.at(i, 0) = a[0];
      chunk.at(i, 1) = a[1];
    }
    demo.chunks.push_back(std::move(chunk));
  }
  return demo;
}

Dataset gen_dataset(const EnvConfig& cfg, std::size_t n_episodes,
                    std::size_t horizon, std::uint64_t seed) {
  if (n_episodes == 0) throw DomainError("n_episodes must be at least 1");
  if (horizon == 0) throw DomainError("horizon must be at least 1");
  cfg.validate();
  Dataset data;
  data.horizon = horizon;
  data.episodes_attempted = n_episodes;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    Demo demo = run_expert_episode(cfg, horizon, dataset_episode_seed(seed, e), e);
    if (demo.success) data.demos.push_back(std::move(demo));
  }
  if (data.demos.empty()) {
    throw DatasetError("all " + std::to_string(n_episodes) +
                       " expert episodes failed");
  }

  std::vector<double> sum(kActionDim, 0.0);
  std::vector<double> sum_sq(kActionDim, 0.0);
  double count = 0.0;
  for (const auto& demo : data.demos) {
    for (const auto& chunk : demo.chunks) {
      for (std::size_t i = 0; i < horizon; ++i) {
        for (std::size_t j = 0; j < kActionDim; ++j) sum[j] += chunk.at(i, j);
      }
      count += static_cast<double>(horizon);
    }
  }
  data.stats.mean.resize(kActionDim);
  data.stats.std.resize(kActionDim);
  for (std::size_t j = 0; j < kActionDim; ++j) data.stats.mean[j] = sum[j] / count;
  for (const auto& demo : data.demos) {
    for (const auto& chunk : demo.chunks) {
      for (std::size_t i = 0; i < horizon; ++i) {
        for (std::size_t j = 0; j < kActionDim; ++j) {
          const double c = chunk.at(i, j) - data.stats.mean[j];
          sum_sq[j] += c * c;
        }
      }
    }
  }
  for (std::size_t j = 0; j < kActionDim; ++j) {
    data.stats.std[j] = std::max(std::sqrt(sum_sq[j] / count), 1e-6);
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(data.horizon));
  w.u32(static_cast<std::uint32_t>(data.obs_dim));
  w.u32(static_cast<std::uint32_t>(data.action_dim));
  w.u64(data.episodes_attempted);
  w.u64(data.demos.size());
  w.u64(data.record_count());
  for (double m : data.stats.mean) w.f64(m);
  for (double s : data.stats.std) w.f64(s);
  for (const auto& demo : data.demos) {
    for (std::size_t t = 0; t < demo.chunks.size(); ++t) {
      w.f64(static_cast<double>(demo.episode));
      w.f64(static_cast<double>(t));
      for (double v : demo.observations[t].features) w.f64(v);
      for (double v : demo.chunks[t].tensor().data()) w.f64(v);
    }
  }
  w.finish_to_file(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r = io::Reader::open_checked(path);
  if (r.bytes(kMagic.size()) != kMagic) {
    throw FormatError(path.string() + " is not a dataset file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("dataset version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kVersion) + ")");
  }
  Dataset data;
  data.horizon = r.u32();
  data.obs_dim = r.u32();
  data.action_dim = r.u32();
  if (data.action_dim != kActionDim || data.horizon == 0) {
    throw FormatError("dataset header has unsupported dimensions");
  }
  data.episodes_attempted = r.u64();
  const std::uint64_t episodes = r.u64();
  const std::uint64_t records = r.u64();
  const std::size_t record_width = 2 + data.obs_dim + data.horizon * data.action_dim;
  if (records * record_width * 8 + 16 * data.action_dim != r.remaining()) {
    throw FormatError("dataset payload size does not match its header");
  }
  data.stats.mean.resize(data.action_dim);
  data.stats.std.resize(data.action_dim);
  for (double& m : data.stats.mean) m = r.f64();
  for (double& s : data.stats.std) s = r.f64();
  for (std::uint64_t k = 0; k < records; ++k) {
    const auto episode = static_cast<std::uint64_t>(r.f64());
    const auto tick = static_cast<std::size_t>(r.f64());
    if (data.demos.empty() || data.demos.back().episode != episode) {
      if (tick != 0) throw FormatError("episode records out of order");
      data.demos.push_back(Demo{episode, true, {}, {}});
    }
    flow::Observation obs;
    obs.features.resize(data.obs_dim);
    for (double& v : obs.features) v = r.f64();
    flow::ActionChunk chunk(data.horizon, data.action_dim);
    for (std::size_t i = 0; i < data.horizon; ++i) {
      for (std::size_t j = 0; j < data.action_dim; ++j) chunk.at(i, j) = r.f64();
    }
    data.demos.back().observations.push_back(std::move(obs));
    data.demos.back().chunks.push_back(std::move(chunk));
  }
  r.expect_end();
  if (data.demos.size() != episodes) {
    throw FormatError("dataset episode count does not match its header");
  }
  return data;
}

}  // namespace rtc::env
