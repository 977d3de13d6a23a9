// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "affine_model.hpp"
#include "rtc/bench/bench.hpp"
#include "rtc/envkit/dataset.hpp"
#include "rtc/error.hpp"
#include "rtc/executor/executor.hpp"
#include "rtc/flowpolicy/flow.hpp"
#include "rtc/guidance/guidance.hpp"
#include "rtc/trainer/trainer.hpp"
#include "support.hpp"
#include "wilson_oracle.hpp"

using namespace rtc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("criterion %2d %-22s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL",
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool bit_equal(double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; }

Outcome guarded(const std::function<Outcome()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

flow::Architecture small_arch() {
  flow::Architecture arch;
  arch.obs_dim = 5;
  arch.action_dim = 2;
  arch.horizon = 8;
  arch.width = 8;
  arch.depth = 2;
  return arch;
}

flow::Observation random_obs(std::size_t dim, Rng& rng) {
  flow::Observation obs;
  for (std::size_t i = 0; i < dim; ++i) obs.features.push_back(2.0 * rng.uniform() - 1.0);
  return obs;
}

double loss_at(const flow::PolicyParams& params, const flow::Observation& obs,
               const flow::ActionChunk& chunk, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return flow::prefix_loss(params, obs, chunk, d, rng);
}

Outcome gradient_check() {
  const flow::Architecture arch = small_arch();
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const flow::PolicyParams params = flow::PolicyParams::initialize(arch, 100 + trial);
    const flow::Observation obs = random_obs(arch.obs_dim, rng);
    const flow::ActionChunk chunk(testing::random_tensor({8, 2}, rng, -1.0, 1.0));
    // Alternate plain and prefix-masked losses.
    const std::size_t d = trial % 2 == 0 ? 0 : 1 + rng.below(7);
    const std::uint64_t seed = 500 + trial;
    Rng grad_rng(seed);
    const flow::LossGradient g = flow::prefix_loss_gradient(params, obs, chunk, d, grad_rng);

    // Random direction over all parameters.
    std::vector<nd::Tensor> dir;
    double analytic = 0.0;
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      nd::Tensor u(params.tensors[k].shape());
      for (double& v : u.mutable_data()) v = rng.normal();
      for (std::size_t i = 0; i < u.size(); ++i) analytic += u[i] * g.param_grads[k][i];
      dir.push_back(std::move(u));
    }
    const double h = 1e-5;
    auto shifted = [&](double sign) {
      flow::PolicyParams p = params;
      for (std::size_t k = 0; k < p.tensors.size(); ++k) {
        auto data = p.tensors[k].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += sign * h * dir[k][i];
      }
      return loss_at(p, obs, chunk, d, seed);
    };
    const double numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
    worst = std::max(worst, testing::rel_err(analytic, numeric));
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 50 directions", worst)};
}

Outcome masking_check() {
  const flow::Architecture arch = small_arch();
  const flow::PolicyParams params = flow::PolicyParams::initialize(arch, 3);
  Rng rng(2);
  std::size_t nonzero = 0;
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const flow::Observation obs = random_obs(arch.obs_dim, rng);
    const flow::ActionChunk chunk(testing::random_tensor({8, 2}, rng, -1.0, 1.0));
    for (std::size_t d = 1; d < 8; ++d) {
      Rng r(trial * 10 + d);
      const flow::LossGradient g = flow::prefix_loss_gradient(params, obs, chunk, d, r);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < 2; ++j) nonzero += g.output_grad.at(i, j) != 0.0 ? 1 : 0;
      }
    }
    Rng a(trial), b(trial);
    const double fm = flow::fm_loss(params, obs, chunk, a);
    const double pl = flow::prefix_loss(params, obs, chunk, 0, b);
    mismatches += bit_equal(fm, pl) ? 0 : 1;
  }
  return {nonzero == 0 && mismatches == 0,
          fmt("nonzero prefix grads %zu, d=0 mismatches %zu", nonzero, mismatches)};
}

Outcome prefix_check() {
  const flow::Architecture arch = small_arch();
  const flow::PolicyParams params = flow::PolicyParams::initialize(arch, 4);
  const flow::Policy policy(params);
  Rng rng(3);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const flow::Observation obs = random_obs(arch.obs_dim, rng);
    const flow::ActionChunk prefix(testing::random_tensor({8, 2}, rng, -3.0, 3.0));
    const std::size_t steps = 1 + rng.below(6);
    const std::size_t d = rng.below(9);
    Rng r1(trial);
    const flow::ActionChunk a = flow::sample_with_prefix(policy, obs, prefix, d, steps, r1);
    const std::size_t s = 1 + rng.below(8);
    const std::size_t gd = rng.below(8 - s + 1);
    guidance::GuidanceConfig cfg;
    cfg.num_steps = steps;
    cfg.beta = 3.0 * rng.uniform();
    Rng r2(trial);
    const flow::ActionChunk b =
        guidance::guided_sample(policy, obs, {prefix, gd, s}, cfg, r2);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        if (i < d && !bit_equal(a.at(i, j), prefix.at(i, j))) ++bad;
        if (i < gd && !bit_equal(b.at(i, j), prefix.at(i, j))) ++bad;
      }
    }
  }
  return {bad == 0, fmt("1000 cases, %zu prefix entries altered", bad)};
}

bool same_trajectory(const exec::RolloutRecord& a, const exec::RolloutRecord& b) {
  if (a.actions.size() != b.actions.size() || a.success != b.success) return false;
  for (std::size_t t = 0; t < a.actions.size(); ++t) {
    if (std::memcmp(a.actions[t].data(), b.actions[t].data(), sizeof(env::Vec2)) != 0) return false;
  }
  return true;
}

Outcome zero_delay_check(const env::Dataset& data, const env::EnvConfig& ecfg) {
  train::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.width = 16;
  cfg.seed = 3;
  train::TrainConfig zero = cfg;
  zero.conditioning = true;
  zero.delays = train::DelayDistribution::uniform(0);
  const train::Checkpoint base = train::train(cfg, data).checkpoint;
  const train::Checkpoint cond = train::train(zero, data).checkpoint;
  exec::PolicyBundle bundle{&base, &cond, {}};
  bundle.guidance.beta = 0.0;

  std::size_t differing = 0;
  for (std::size_t s : {1, 2, 4}) {
    const exec::DelayConfig dc{8, s, 0};
    const auto naive = exec::run_batch(exec::Strategy::kNaiveAsync, bundle, ecfg, dc, 5, 8, 64);
    const auto guided =
        exec::run_batch(exec::Strategy::kInferenceTimeRTC, bundle, ecfg, dc, 5, 8, 64);
    const auto trained =
        exec::run_batch(exec::Strategy::kTrainingTimeRTC, bundle, ecfg, dc, 5, 8, 64);
    for (std::size_t i = 0; i < naive.size(); ++i) {
      differing += same_trajectory(naive[i], guided[i]) ? 0 : 1;
      differing += same_trajectory(naive[i], trained[i]) ? 0 : 1;
    }
  }
  bench::SweepSpec spec;
  spec.delays = {0};
  spec.strategies = {exec::Strategy::kNaiveAsync, exec::Strategy::kInferenceTimeRTC,
                     exec::Strategy::kTrainingTimeRTC};
  spec.n_rollouts = 128;
  spec.num_steps = 5;
  spec.guidance = bundle.guidance;
  const bench::SweepResult r = bench::sweep(spec, bundle, ecfg);
  const auto& n = r.at("naive_async", 0);
  const auto& g = r.at("inference_rtc", 0);
  const auto& t = r.at("training_rtc", 0);
  const bool rates = n.successes == g.successes && n.successes == t.successes;
  return {differing == 0 && rates,
          fmt("%zu differing trajectories of 384 pairs; sweep successes %zu/%zu/%zu of %zu",
              differing, n.successes, g.successes, t.successes, n.n)};
}

Outcome guidance_oracle_check() {
  Rng rng(5);
  const flow::Observation obs{{0.0}};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 2 + rng.below(10);
    const std::size_t s = 1 + rng.below(h);
    const std::size_t d = rng.below(h - s + 1);
    const testing::AffineModel model(testing::random_tensor({h, 1}, rng),
                                     testing::random_tensor({h, 1}, rng, 0.0, 2.0));
    const guidance::OverlapTarget target{flow::ActionChunk(testing::random_tensor({h, 1}, rng)),
                                         d, s};
    guidance::GuidanceConfig cfg;
    cfg.beta = 3.0 * rng.uniform();
    cfg.decay_c = 0.05 + 0.9 * rng.uniform();
    cfg.gamma_max = 0.1 + 2.0 * rng.uniform();
    cfg.num_steps = 1 + rng.below(30);
    Rng noise(trial), replay(trial);
    const flow::ActionChunk out = guidance::guided_sample(model, obs, target, cfg, noise);
    const flow::ActionChunk x0 = flow::draw_noise(h, 1, replay);
    const auto expect = testing::affine_guided_closed_form(
        model, x0, target, guidance::soft_mask_weights(h, d, s, cfg.decay_c), cfg);
    for (std::size_t i = 0; i < h; ++i) {
      worst = std::max(worst, std::abs(out.at(i, 0) - static_cast<double>(expect[i])));
    }
  }
  return {worst < 1e-6, fmt("max L-inf deviation %.2e over 200 cases", worst)};
}

Outcome wilson_check() {
  Rng rng(9);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(10000);
    const std::size_t k = rng.below(n + 1);
    const bench::Interval got = bench::wilson_interval(k, n);
    const auto want = testing::wilson_reference(k, n, 1.96);
    worst = std::max({worst, std::abs(got.lower - want.first), std::abs(got.upper - want.second)});
  }
  bool bounds = true;
  for (std::size_t n : {1, 2, 10, 512, 2048}) {
    bounds = bounds && bench::wilson_interval(0, n).lower == 0.0 &&
             bench::wilson_interval(n, n).upper == 1.0;
    const auto zero = testing::wilson_reference(0, n, 1.96);
    const auto full = testing::wilson_reference(n, n, 1.96);
    worst = std::max({worst, std::abs(bench::wilson_interval(0, n).upper - zero.second),
                      std::abs(bench::wilson_interval(n, n).lower - full.first)});
  }
  return {worst < 1e-12 && bounds, fmt("max deviation %.2e, boundaries %s", worst,
                                       bounds ? "exact" : "wrong")};
}

struct TrendModels {
  train::Checkpoint base;
  train::Checkpoint conditioned;
};

TrendModels build_models(const env::Dataset& data, const fs::path& dir, bool reuse) {
  const fs::path base_path = dir / "base.ckpt";
  const fs::path cond_path = dir / "conditioned.ckpt";
  if (reuse && fs::exists(base_path) && fs::exists(cond_path)) {
    std::printf("reusing checkpoints in %s\n", dir.string().c_str());
    return {train::load_checkpoint(base_path), train::load_checkpoint(cond_path)};
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  // 24 shared epochs, then 8 more either plain or with prefix conditioning.
  train::TrainConfig cfg;
  cfg.epochs = 24;
  cfg.schedule_epochs = 32;
  cfg.seed = 7;
  const train::TrainResult head = train::train(cfg, data);
  std::printf("shared epochs done (%.0fs, loss %.4f)\n", elapsed(), head.epoch_losses.back());
  train::TrainConfig tail = cfg;
  tail.epochs = 8;
  const train::TrainResult base = train::train(tail, data, &head.checkpoint);
  tail.conditioning = true;
  tail.delays = train::DelayDistribution::uniform(4);
  const train::TrainResult cond = train::train(tail, data, &head.checkpoint);
  std::printf("fine-tuning done (%.0fs, losses %.4f / %.4f)\n", elapsed(),
              base.epoch_losses.back(), cond.epoch_losses.back());
  train::save_checkpoint(base.checkpoint, base_path);
  train::save_checkpoint(cond.checkpoint, cond_path);
  return {base.checkpoint, cond.checkpoint};
}

bool overlaps(const bench::CellResult& a, const bench::CellResult& b) {
  return a.rate >= b.wilson_lo && a.rate <= b.wilson_hi && b.rate >= a.wilson_lo &&
         b.rate <= a.wilson_hi;
}

Outcome trend_check(const bench::SweepResult& r) {
  const char* names[] = {"synchronous", "naive_async", "inference_rtc", "training_rtc"};
  bool a = true;
  for (const char* x : names) {
    for (const char* y : names) a = a && overlaps(r.at(x, 0), r.at(y, 0));
  }
  const auto& t4 = r.at("training_rtc", 4);
  const auto& n4 = r.at("naive_async", 4);
  const bool b = t4.wilson_lo > n4.wilson_hi;
  bool c = true;
  for (std::size_t d : {3, 4}) c = c && r.at("training_rtc", d).rate >= r.at("inference_rtc", d).rate;
  return {a && b && c,
          fmt("(a) d=0 overlap %s; (b) d=4 training lo %.3f vs naive hi %.3f; "
              "(c) training %.3f/%.3f vs inference %.3f/%.3f at d=3/4",
              a ? "yes" : "no", t4.wilson_lo, n4.wilson_hi, r.at("training_rtc", 3).rate,
              t4.rate, r.at("inference_rtc", 3).rate, r.at("inference_rtc", 4).rate)};
}

Outcome continuity_check(const bench::SweepResult& r) {
  bool ok = true;
  double worst_ratio = 0.0;
  for (const auto& c : r.cells) {
    if (c.strategy != "training_rtc" || c.s < 2) continue;
    const double ratio = c.mean_switch_jump / c.mean_within_jump;
    worst_ratio = std::max(worst_ratio, ratio);
    ok = ok && c.mean_switch_jump <= 2.0 * c.mean_within_jump;
  }
  const auto& n4 = r.at("naive_async", 4);
  const bool jerk = n4.mean_switch_jump > n4.mean_within_jump;
  return {ok && jerk, fmt("training switch/within ratio <= %.2f for s>=2; naive d=4 switch %.3f vs "
                          "within %.3f",
                          worst_ratio, n4.mean_switch_jump, n4.mean_within_jump)};
}

Outcome cost_check(const bench::SweepResult& r, std::size_t num_steps) {
  bool ok = true;
  for (const auto& c : r.cells) {
    if (c.strategy == "training_rtc") ok = ok && c.vjp_passes == 0.0;
    if (c.strategy == "inference_rtc") ok = ok && c.vjp_passes == static_cast<double>(num_steps);
  }
  return {ok, fmt("vjp/chunk training %.1f, inference %.1f (num_steps %zu)",
                  r.at("training_rtc", 4).vjp_passes, r.at("inference_rtc", 4).vjp_passes,
                  num_steps)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::size_t episodes = 600;
  std::size_t rollouts = 512;
  bool reuse = false;
  std::string out = std::getenv("RTC_OUT_DIR") != nullptr ? std::getenv("RTC_OUT_DIR")
                                                            : "acceptance_out";
  app.add_option("--episodes", episodes, "expert episodes for the trend dataset");
  app.add_option("--rollouts", rollouts, "rollouts per sweep cell");
  app.add_option("--out", out, "directory for checkpoints, CSV and SVG");
  app.add_flag("--reuse", reuse, "load checkpoints from --out when present");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);

  report(1, "gradients", guarded(gradient_check));
  report(2, "masking", guarded(masking_check));
  report(3, "prefix preservation", guarded(prefix_check));

  const env::EnvConfig ecfg;
  std::optional<env::Dataset> data;
  const Outcome data_status = guarded([&] {
    data = env::gen_dataset(ecfg, episodes, 8, 1);
    return Outcome{true, ""};
  });
  if (!data) {
    std::printf("dataset generation failed: %s\n", data_status.detail.c_str());
    return 1;
  }
  std::printf("dataset: %zu records from %zu episodes\n", data->record_count(), episodes);

  report(4, "zero-delay equivalence", guarded([&] { return zero_delay_check(*data, ecfg); }));
  report(5, "guidance oracle", guarded(guidance_oracle_check));

  std::optional<TrendModels> models;
  std::optional<bench::SweepResult> result;
  bench::SweepSpec spec;
  spec.n_rollouts = rollouts;
  spec.seed_base = 2024;
  const Outcome sweep_status = guarded([&] {
    models = build_models(*data, out, reuse);
    const exec::PolicyBundle bundle{&models->base, &models->conditioned, spec.guidance};
    const auto t0 = std::chrono::steady_clock::now();
    result = bench::sweep(spec, bundle, ecfg);
    std::printf("sweep done (%.0fs)\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    bench::write_csv(*result, fs::path(out) / "sweep.csv");
    bench::write_svg(*result, fs::path(out) / "sweep.svg");
    std::fputs(bench::to_csv(*result).c_str(), stdout);
    return Outcome{true, ""};
  });
  if (!result) {
    report(6, "trend", sweep_status);
    report(7, "continuity", sweep_status);
    report(8, "cost accounting", sweep_status);
  } else {
    report(6, "trend", trend_check(*result));
    report(7, "continuity", continuity_check(*result));
    report(8, "cost accounting", cost_check(*result, spec.num_steps));
  }

  report(9, "wilson oracle", guarded(wilson_check));
  report(10, "determinism", guarded([&] {
           if (!models) return Outcome{false, "no checkpoints"};
           bench::SweepSpec small;
           small.n_rollouts = 16;
           small.num_steps = 4;
           small.seed_base = 77;
           const exec::PolicyBundle bundle{&models->base, &models->conditioned, small.guidance};
           small.threads = 1;
           const std::string a = bench::to_csv(bench::sweep(small, bundle, ecfg));
           small.threads = 0;
           const std::string b = bench::to_csv(bench::sweep(small, bundle, ecfg));
           const fs::path p = fs::path(out) / "rerun.csv";
           bench::write_csv(bench::parse_csv(b), p);
           const std::string c = bench::to_csv(bench::read_csv(p));
           return Outcome{a == b && b == c,
                          fmt("%zu-byte CSV, reruns %s", a.size(), a == b && b == c ? "identical" : "differ")};
         }));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
