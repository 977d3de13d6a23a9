#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "rtc/envkit/dataset.hpp"
#include "rtc/error.hpp"
#include "rtc/executor/executor.hpp"
#include "tiny_models.hpp"

using namespace rtc;
using namespace rtc::exec;
using rtc::testing::tiny_models;

namespace {

flow::ActionChunk numbered_chunk(std::size_t h, double base) {
  flow::ActionChunk c(h, 2);
  for (std::size_t i = 0; i < h; ++i) {
    c.at(i, 0) = base + static_cast<double>(i);
    c.at(i, 1) = -(base + static_cast<double>(i));
  }
  return c;
}

// Chunk k row i carries the action (0.01 k, 0.001 i) so the record shows
// exactly which row of which chunk ran at every tick.
struct TaggingGenerator {
  std::vector<ChunkRequest> requests;
  std::vector<flow::ActionChunk> chunks;

  GeneratedChunk operator()(const ChunkRequest& req) {
    requests.push_back(req);
    requests.back().prev = nullptr;
    GeneratedChunk g{flow::ActionChunk(8, 2), {}, {}};
    for (std::size_t i = 0; i < 8; ++i) {
      g.chunk.at(i, 0) = 0.01 * static_cast<double>(req.chunk_index);
      g.chunk.at(i, 1) = 0.001 * static_cast<double>(i);
      g.actions.push_back({g.chunk.at(i, 0), g.chunk.at(i, 1)});
    }
    chunks.push_back(g.chunk);
    return g;
  }
};

std::size_t row_of(const env::Vec2& a) {
  return static_cast<std::size_t>(a[1] * 1000.0 + 0.5);
}

long chunk_of(const env::Vec2& a) {
  return static_cast<long>(a[0] * 100.0 + 0.5);
}

bool same_trajectory(const RolloutRecord& a, const RolloutRecord& b) {
  if (a.actions.size() != b.actions.size() || a.states.size() != b.states.size()) return false;
  for (std::size_t t = 0; t < a.actions.size(); ++t) {
    if (std::memcmp(a.actions[t].data(), b.actions[t].data(), sizeof(env::Vec2)) != 0) return false;
  }
  for (std::size_t t = 0; t < a.states.size(); ++t) {
    if (std::memcmp(a.states[t].pos.data(), b.states[t].pos.data(), sizeof(env::Vec2)) != 0) {
      return false;
    }
  }
  return a.success == b.success && a.switch_ticks == b.switch_ticks;
}

}  // namespace

TEST_CASE("extract_prefix copies the committed rows") {
  const flow::ActionChunk prev = numbered_chunk(8, 10.0);
  const flow::ActionChunk p = extract_prefix(prev, 3, 2);
  REQUIRE(p.horizon() == 8);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(p.at(0, j) == prev.at(3, j));
    CHECK(p.at(1, j) == prev.at(4, j));
    for (std::size_t i = 2; i < 8; ++i) CHECK(p.at(i, j) == 0.0);
  }
  const flow::ActionChunk empty = extract_prefix(prev, 5, 0);
  CHECK(empty.tensor().identical(flow::ActionChunk(8, 2).tensor()));
  CHECK_NOTHROW(extract_prefix(prev, 6, 2));
  CHECK_THROWS_AS(extract_prefix(prev, 7, 2), DomainError);
}

TEST_CASE("overlap targets hold the previous chunk's tail") {
  const flow::ActionChunk prev = numbered_chunk(8, 1.0);
  const guidance::OverlapTarget t = build_overlap_target(prev, 3, 2, 3, 8);
  CHECK(t.delay == 2);
  CHECK(t.exec_horizon == 3);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(t.y.at(i, j) == prev.at(i + 3, j));
  }
  for (std::size_t i = 5; i < 8; ++i) CHECK(t.y.at(i, 0) == 0.0);
  const flow::ActionChunk p = extract_prefix(prev, 3, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(t.y.at(i, j) == p.at(i, j));
  }
}

TEST_CASE("overlap target boundaries") {
  const flow::ActionChunk prev = numbered_chunk(8, 0.0);
  const guidance::OverlapTarget full = build_overlap_target(prev, 8, 0, 8, 8);
  CHECK(full.y.tensor().identical(flow::ActionChunk(8, 2).tensor()));
  CHECK_THROWS_AS(build_overlap_target(prev, 8, 1, 8, 8), DomainError);
  CHECK_THROWS_AS(build_overlap_target(prev, 3, 6, 3, 8), DomainError);
  CHECK_THROWS_AS(build_overlap_target(prev, 4, 1, 3, 8), DomainError);
  CHECK_THROWS_AS(build_overlap_target(prev, 3, 1, 3, 6), DomainError);
}

TEST_CASE("delay configs are validated before any step") {
  CHECK_THROWS_AS((DelayConfig{8, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((DelayConfig{8, 9, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((DelayConfig{8, 5, 4}.validate()), ConfigError);
  CHECK_NOTHROW((DelayConfig{8, 4, 4}.validate()));

  std::size_t calls = 0;
  const ChunkGenerator counting = [&](const ChunkRequest&) {
    ++calls;
    return GeneratedChunk{flow::ActionChunk(8, 2), std::vector<env::Vec2>(8), {}};
  };
  CHECK_THROWS_AS(run_schedule(false, counting, env::EnvConfig{}, DelayConfig{8, 5, 4}, 1),
                  ConfigError);
  CHECK_THROWS_AS(run_schedule(true, counting, env::EnvConfig{}, DelayConfig{8, 2, 3}, 1),
                  ConfigError);
  CHECK(calls == 0);

  PolicyBundle bundle{&tiny_models().base, &tiny_models().conditioned, {}};
  CHECK_THROWS_AS(run_episode(Strategy::kTrainingTimeRTC, bundle, env::EnvConfig{},
                              DelayConfig{8, 3, 6}, 4, 1),
                  ConfigError);
}

TEST_CASE("strategies require the matching checkpoint family") {
  const DelayConfig cfg{8, 2, 1};
  PolicyBundle swapped{&tiny_models().conditioned, &tiny_models().base, {}};
  for (Strategy s : {Strategy::kSynchronous, Strategy::kNaiveAsync,
                     Strategy::kInferenceTimeRTC, Strategy::kTrainingTimeRTC}) {
    CHECK_THROWS_AS(check_compatible(s, swapped, cfg), ConfigError);
  }
  PolicyBundle missing{&tiny_models().base, nullptr, {}};
  CHECK_THROWS_AS(check_compatible(Strategy::kTrainingTimeRTC, missing, cfg), ConfigError);
  CHECK_NOTHROW(check_compatible(Strategy::kNaiveAsync, missing, cfg));
  CHECK(parse_strategy(to_string(Strategy::kInferenceTimeRTC)) == Strategy::kInferenceTimeRTC);
  CHECK_THROWS_AS(parse_strategy("bogus"), ConfigError);
}

TEST_CASE("asynchronous schedule timing and causality") {
  for (std::size_t s = 1; s <= 4; ++s) {
    for (std::size_t d = 0; d <= s; ++d) {
      CAPTURE(s);
      CAPTURE(d);
      TaggingGenerator gen;
      const RolloutRecord rec = run_schedule(true, std::ref(gen), env::EnvConfig{},
                                             DelayConfig{8, s, d}, 42, 30);
      REQUIRE(rec.actions.size() == rec.length);
      REQUIRE(rec.states.size() == rec.length + 1);
      REQUIRE(rec.switch_ticks.front() == 0);
      for (std::size_t k = 1; k < rec.switch_ticks.size(); ++k) {
        CHECK(rec.switch_ticks[k] - rec.switch_ticks[k - 1] == s);
        CHECK(rec.source_ticks[k] + d == rec.switch_ticks[k]);
      }
      for (std::size_t t = 0; t < rec.length; ++t) {
        const long k = chunk_of(rec.actions[t]);
        CHECK(k == rec.action_chunk[t]);
        const std::size_t sw = rec.switch_ticks.at(static_cast<std::size_t>(k));
        const std::size_t first_row = k == 0 ? 0 : d;
        CHECK(row_of(rec.actions[t]) == first_row + (t - sw));
        if (k > 0) CHECK(rec.source_ticks[static_cast<std::size_t>(k)] + d <= t);
      }
      // Each request names the rows of the previous chunk that run while it
      // is being computed.
      for (std::size_t k = 1; k < gen.requests.size(); ++k) {
        const ChunkRequest& req = gen.requests[k];
        CHECK(req.delay == d);
        CHECK(req.offset == (k == 1 ? s - d : s));
        for (std::size_t i = 0; i < d; ++i) {
          const std::size_t tick = rec.source_ticks[k] + i;
          if (tick >= rec.length) break;
          CHECK(rec.actions[tick][1] == gen.chunks[k - 1].at(req.offset + i, 1));
          CHECK(rec.actions[tick][0] == gen.chunks[k - 1].at(req.offset + i, 0));
        }
      }
    }
  }
}

TEST_CASE("synchronous schedule holds the last action during inference") {
  const std::size_t s = 3, d = 2;
  TaggingGenerator gen;
  const RolloutRecord rec =
      run_schedule(false, std::ref(gen), env::EnvConfig{}, DelayConfig{8, s, d}, 7, 30);
  REQUIRE(rec.actions.size() == 30);
  for (std::size_t t = 0; t < 3; ++t) CHECK(row_of(rec.actions[t]) == t);
  for (std::size_t t = 3; t < 5; ++t) {
    CHECK(rec.action_chunk[t] == -1);
    CHECK(rec.actions[t] == rec.actions[2]);
  }
  for (std::size_t t = 5; t < 8; ++t) {
    CHECK(chunk_of(rec.actions[t]) == 1);
    CHECK(row_of(rec.actions[t]) == t - 5);
  }
  CHECK(rec.source_ticks[1] == 3);
  CHECK(rec.switch_ticks[1] == 5);
  CHECK(rec.switch_ticks[2] == 10);
}

TEST_CASE("the scripted expert solves the environment synchronously") {
  const env::EnvConfig ecfg;
  std::size_t successes = 0;
  const std::size_t n = 64;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = episode_seed(5, i);
    const RolloutRecord rec =
        run_schedule(false, expert_generator(ecfg, 8, seed), ecfg, DelayConfig{8, 1, 0}, seed);
    successes += rec.success ? 1 : 0;
  }
  CHECK(successes == n);
}

TEST_CASE("at zero delay the asynchronous strategies coincide") {
  const env::EnvConfig ecfg;
  PolicyBundle bundle{&tiny_models().base, &tiny_models().zero_delay, {}};
  bundle.guidance.beta = 0.0;
  for (std::size_t s : {1, 3, 8}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const DelayConfig cfg{8, s, 0};
      const auto naive = run_episode(Strategy::kNaiveAsync, bundle, ecfg, cfg, 4, seed);
      const auto guided = run_episode(Strategy::kInferenceTimeRTC, bundle, ecfg, cfg, 4, seed);
      const auto trained = run_episode(Strategy::kTrainingTimeRTC, bundle, ecfg, cfg, 4, seed);
      CHECK(same_trajectory(naive, guided));
      CHECK(same_trajectory(naive, trained));
    }
  }
}

TEST_CASE("inference cost is counted per chunk") {
  const env::EnvConfig ecfg;
  PolicyBundle bundle{&tiny_models().base, &tiny_models().conditioned, {}};
  const DelayConfig cfg{8, 2, 2};
  const std::size_t steps = 5;
  const auto trained = run_episode(Strategy::kTrainingTimeRTC, bundle, ecfg, cfg, steps, 3);
  CHECK(trained.cost.vjp_passes == 0);
  CHECK(trained.cost.forward_passes == steps * trained.cost.chunks);
  const auto guided = run_episode(Strategy::kInferenceTimeRTC, bundle, ecfg, cfg, steps, 3);
  CHECK(guided.cost.vjp_passes == steps * guided.cost.chunks);
  CHECK(guided.cost.forward_passes == steps * guided.cost.chunks);
  const auto naive = run_episode(Strategy::kNaiveAsync, bundle, ecfg, cfg, steps, 3);
  CHECK(naive.cost.vjp_passes == 0);
  CHECK(naive.cost.chunks == naive.source_ticks.size());
}

TEST_CASE("training-time chunks continue the committed prefix") {
  const env::EnvConfig ecfg;
  PolicyBundle bundle{&tiny_models().base, &tiny_models().conditioned, {}};
  for (std::size_t d = 1; d <= 4; ++d) {
    const DelayConfig cfg{8, 4, d};
    const auto rec = run_episode(Strategy::kTrainingTimeRTC, bundle, ecfg, cfg, 4, 20 + d);
    for (std::size_t k = 1; k < rec.switch_ticks.size(); ++k) {
      CHECK(rec.switch_ticks[k] - rec.switch_ticks[k - 1] == 4);
      CHECK(rec.source_ticks[k] + d == rec.switch_ticks[k]);
    }
  }
}

TEST_CASE("batches are reproducible and thread-count independent") {
  const env::EnvConfig ecfg;
  PolicyBundle bundle{&tiny_models().base, &tiny_models().conditioned, {}};
  const DelayConfig cfg{8, 3, 2};
  const auto a = run_batch(Strategy::kInferenceTimeRTC, bundle, ecfg, cfg, 3, 9, 6, 1);
  const auto b = run_batch(Strategy::kInferenceTimeRTC, bundle, ecfg, cfg, 3, 9, 6, 3);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_trajectory(a[i], b[i]));
  CHECK(episode_seed(9, 0) != episode_seed(9, 1));
}
