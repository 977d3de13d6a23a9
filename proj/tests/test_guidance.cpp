#include <doctest.h>

#include <cmath>

#include "affine_model.hpp"
#include "rtc/error.hpp"
#include "rtc/flowpolicy/flow.hpp"
#include "rtc/guidance/guidance.hpp"
#include "support.hpp"

using namespace rtc;
using flow::ActionChunk;
using guidance::GuidanceConfig;
using guidance::OverlapTarget;

namespace {

flow::PolicyParams small_policy(std::uint64_t seed) {
  flow::Architecture arch;
  arch.obs_dim = 3;
  arch.action_dim = 2;
  arch.horizon = 8;
  arch.width = 8;
  arch.time_embed_dim = 4;
  return flow::PolicyParams::initialize(arch, seed);
}

const flow::Observation kObs{{0.1, -0.4, 0.7}};

}  // namespace

TEST_CASE("soft mask with d = H - s is a pure hard mask") {
  const auto w = guidance::soft_mask_weights(8, 3, 5, 0.5);
  for (std::size_t i = 0; i < 8; ++i) CHECK(w[i] == (i < 3 ? 1.0 : 0.0));
}

TEST_CASE("soft mask decays geometrically over the overlap") {
  for (double c : {0.2, 0.5, 0.9}) {
    const auto w = guidance::soft_mask_weights(8, 0, 4, c);
    CHECK(w[0] == doctest::Approx(c));
    CHECK(w[1] == doctest::Approx(c * c));
    CHECK(w[2] == doctest::Approx(c * c * c));
    CHECK(w[3] == doctest::Approx(c * c * c * c));
    for (std::size_t i = 4; i < 8; ++i) CHECK(w[i] == 0.0);
  }
}

TEST_CASE("soft mask weights lie in [0, 1] and never increase") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng.below(12);
    const std::size_t s = 1 + rng.below(h);
    const std::size_t d = rng.below(h - s + 1);
    const double c = 0.01 + 0.98 * rng.uniform();
    const auto w = guidance::soft_mask_weights(h, d, s, c);
    for (std::size_t i = 0; i < h; ++i) {
      CHECK(w[i] >= 0.0);
      CHECK(w[i] <= 1.0);
      if (i > 0) CHECK(w[i] <= w[i - 1]);
    }
  }
}

TEST_CASE("soft mask rejects violated constraints") {
  CHECK_THROWS_AS(guidance::soft_mask_weights(8, 5, 4, 0.5), DomainError);
  CHECK_THROWS_AS(guidance::soft_mask_weights(8, 0, 9, 0.5), DomainError);
  CHECK_THROWS_AS(guidance::soft_mask_weights(8, 0, 4, 1.0), DomainError);
}

TEST_CASE("guidance off reduces to plain sampling") {
  const auto params = small_policy(1);
  const flow::Policy policy(params);
  Rng rng(2);
  const OverlapTarget target{ActionChunk(testing::random_tensor({8, 2}, rng)), 0, 3};
  GuidanceConfig cfg;
  cfg.beta = 0.0;
  Rng a(9), b(9);
  CHECK(guidance::guided_sample(policy, kObs, target, cfg, a)
            .identical(flow::sample(policy, kObs, cfg.num_steps, b)));

  // Zero weights everywhere: s = H leaves no overlap.
  cfg.beta = 1.0;
  const OverlapTarget empty{ActionChunk(8, 2), 0, 8};
  Rng c(10), d(10);
  CHECK(guidance::guided_sample(policy, kObs, empty, cfg, c)
            .identical(flow::sample(policy, kObs, cfg.num_steps, d)));
}

TEST_CASE("guided samples return the target prefix exactly") {
  const auto params = small_policy(4);
  const flow::Policy policy(params);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + rng.below(8);
    const std::size_t d = rng.below(8 - s + 1);
    const OverlapTarget target{ActionChunk(testing::random_tensor({8, 2}, rng)), d, s};
    GuidanceConfig cfg;
    cfg.beta = 3.0 * rng.uniform();
    cfg.num_steps = 1 + rng.below(6);
    Rng noise(trial);
    const ActionChunk out = guidance::guided_sample(policy, kObs, target, cfg, noise);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(out.at(i, j) == target.y.at(i, j));
    }
  }
}

TEST_CASE("guided sampling costs one vjp per step") {
  const auto params = small_policy(6);
  const flow::Policy policy(params);
  const OverlapTarget target{ActionChunk(8, 2), 2, 3};
  GuidanceConfig cfg;
  cfg.num_steps = 7;
  flow::InferenceCost cost;
  Rng rng(1);
  guidance::guided_sample(policy, kObs, target, cfg, rng, &cost);
  CHECK(cost.forward_passes == 7);
  CHECK(cost.vjp_passes == 7);
}

TEST_CASE("guided sampling validates its inputs") {
  const auto params = small_policy(6);
  const flow::Policy policy(params);
  Rng rng(1);
  CHECK_THROWS_AS(guidance::guided_sample(policy, kObs, {ActionChunk(8, 2), 6, 3}, {}, rng),
                  DomainError);
  CHECK_THROWS_AS(guidance::guided_sample(policy, kObs, {ActionChunk(5, 2), 0, 3}, {}, rng),
                  StructuralError);
  GuidanceConfig bad;
  bad.decay_c = 1.5;
  CHECK_THROWS_AS(guidance::guided_sample(policy, kObs, {ActionChunk(8, 2), 0, 3}, bad, rng),
                  ConfigError);
}

TEST_CASE("guided sampling reports divergence with the step index") {
  testing::AffineModel model(nd::Tensor::full({4, 1}, 0.0), nd::Tensor::full({4, 1}, -1e200));
  GuidanceConfig cfg;
  cfg.num_steps = 4;
  Rng rng(2);
  try {
    guidance::guided_sample(model, kObs, {ActionChunk(4, 1), 0, 2}, cfg, rng);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("guided sampling of an affine field matches the closed form") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 2 + rng.below(8);
    const std::size_t s = 1 + rng.below(h);
    const std::size_t d = rng.below(h - s + 1);
    const testing::AffineModel model(testing::random_tensor({h, 1}, rng),
                                     testing::random_tensor({h, 1}, rng, 0.0, 2.0));
    const OverlapTarget target{ActionChunk(testing::random_tensor({h, 1}, rng)), d, s};
    GuidanceConfig cfg;
    cfg.beta = 2.0 * rng.uniform();
    cfg.decay_c = 0.1 + 0.8 * rng.uniform();
    cfg.gamma_max = 0.2 + rng.uniform();
    cfg.num_steps = 1 + rng.below(20);
    Rng noise(trial), replay(trial);
    const ActionChunk out = guidance::guided_sample(model, kObs, target, cfg, noise);
    const ActionChunk x0 = flow::draw_noise(h, 1, replay);
    const auto expect = testing::affine_guided_closed_form(
        model, x0, target, guidance::soft_mask_weights(h, d, s, cfg.decay_c), cfg);
    for (std::size_t i = 0; i < h; ++i) {
      CHECK(std::abs(out.at(i, 0) - static_cast<double>(expect[i])) < 1e-9);
    }
  }
}
