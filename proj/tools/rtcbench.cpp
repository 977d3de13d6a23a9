// rtcbench: dataset generation, training, evaluation and delay sweeps.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtc/bench/bench.hpp"
#include "rtc/error.hpp"
#include "rtc/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace rtc;

namespace {

// Output paths are placed under $RTC_OUT_DIR when it is set.
fs::path out_path(const std::string& name) {
  fs::path p(name);
  const char* dir = std::getenv("RTC_OUT_DIR");
  if (dir != nullptr && *dir != '\0' && p.is_relative()) {
    fs::create_directories(dir);
    p = fs::path(dir) / p;
  }
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

// Relative inputs fall back to $RTC_OUT_DIR when absent from the working dir.
fs::path in_path(const std::string& name) {
  fs::path p(name);
  const char* dir = std::getenv("RTC_OUT_DIR");
  if (!fs::exists(p) && dir != nullptr && *dir != '\0' && p.is_relative() &&
      fs::exists(fs::path(dir) / p)) {
    return fs::path(dir) / p;
  }
  return p;
}

env::EnvConfig load_env(const std::string& path) {
  if (path.empty()) return env::EnvConfig{};
  return env::EnvConfig::load(in_path(path));
}

struct GuidanceFlags {
  double beta = guidance::GuidanceConfig{}.beta;
  double decay_c = guidance::GuidanceConfig{}.decay_c;
  double gamma_max = guidance::GuidanceConfig{}.gamma_max;

  void attach(CLI::App* app) {
    app->add_option("--beta", beta, "guidance scale for inference_rtc")->capture_default_str();
    app->add_option("--decay-c", decay_c, "soft-mask decay base")->capture_default_str();
    app->add_option("--gamma-max", gamma_max, "guidance coefficient clip")
        ->capture_default_str();
  }
  guidance::GuidanceConfig config(std::size_t steps) const {
    guidance::GuidanceConfig g;
    g.beta = beta;
    g.decay_c = decay_c;
    g.gamma_max = gamma_max;
    g.num_steps = steps;
    return g;
  }
};

struct Checkpoints {
  std::optional<train::Checkpoint> base;
  std::optional<train::Checkpoint> conditioned;

  void load(const std::string& base_path, const std::string& cond_path) {
    if (!base_path.empty()) base = train::load_checkpoint(in_path(base_path));
    if (!cond_path.empty()) conditioned = train::load_checkpoint(in_path(cond_path));
  }
  std::size_t horizon() const {
    if (base) return base->params.arch.horizon;
    if (conditioned) return conditioned->params.arch.horizon;
    throw ConfigError("at least one of --base or --conditioned is required");
  }
  exec::PolicyBundle bundle(const guidance::GuidanceConfig& g) const {
    return {base ? &*base : nullptr, conditioned ? &*conditioned : nullptr, g};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-time action chunking benchmark"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "run the scripted expert and save demonstrations");
  std::size_t gen_episodes = 600;
  std::size_t gen_horizon = 8;
  std::uint64_t gen_seed = 1;
  std::string gen_env;
  std::string gen_out = "dataset.bin";
  gen->add_option("--episodes", gen_episodes, "expert episodes to attempt")->capture_default_str();
  gen->add_option("--horizon", gen_horizon, "chunk length H")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--env-config", gen_env, "environment JSON (defaults built in)");
  gen->add_option("--out", gen_out)->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train a flow policy checkpoint");
  std::string tr_data = "dataset.bin";
  std::string tr_config;
  std::string tr_out = "policy.ckpt";
  std::string tr_losses;
  train::TrainConfig tcfg;
  std::string delay_kind = "geometric";
  std::size_t delay_max = 4;
  double delay_base = 0.5;
  std::string warm;
  tr->add_option("--data", tr_data)->capture_default_str();
  tr->add_option("--config", tr_config, "training config JSON; flags below override it");
  tr->add_option("--out", tr_out)->capture_default_str();
  tr->add_option("--loss-csv", tr_losses, "write per-epoch losses here");
  auto* o_epochs = tr->add_option("--epochs", tcfg.epochs);
  auto* o_batch = tr->add_option("--batch-size", tcfg.batch_size);
  auto* o_sched = tr->add_option("--schedule-epochs", tcfg.schedule_epochs);
  auto* o_lr = tr->add_option("--lr", tcfg.optimizer.lr);
  auto* o_lrmin = tr->add_option("--lr-min", tcfg.optimizer.lr_min);
  auto* o_seed = tr->add_option("--seed", tcfg.seed);
  auto* o_cond = tr->add_flag("--conditioning", tcfg.conditioning,
                              "train with simulated-delay prefix conditioning");
  auto* o_kind = tr->add_option("--delay-kind", delay_kind, "uniform or geometric")
                     ->check(CLI::IsMember({"uniform", "geometric"}));
  auto* o_dmax = tr->add_option("--delay-max", delay_max, "largest delay (inclusive)");
  auto* o_dbase = tr->add_option("--delay-base", delay_base, "geometric weight base");
  auto* o_warm = tr->add_option("--warm-start", warm, "checkpoint to continue from");
  auto* o_width = tr->add_option("--width", tcfg.width);
  auto* o_depth = tr->add_option("--depth", tcfg.depth);
  auto* o_threads = tr->add_option("--threads", tcfg.threads);

  // eval
  auto* ev = app.add_subcommand("eval", "roll out one strategy at one delay");
  std::string ev_strategy;
  std::string ev_base, ev_cond, ev_env, ev_out;
  std::size_t ev_delay = 0;
  std::size_t ev_s = 0;
  std::size_t ev_n = 512;
  std::size_t ev_steps = 10;
  std::uint64_t ev_seed = 0;
  std::size_t ev_threads = 0;
  GuidanceFlags ev_guid;
  ev->add_option("--strategy", ev_strategy,
                 "synchronous, naive_async, inference_rtc or training_rtc")
      ->required();
  ev->add_option("--base", ev_base, "unconditioned checkpoint");
  ev->add_option("--conditioned", ev_cond, "prefix-conditioned checkpoint");
  ev->add_option("--delay", ev_delay)->capture_default_str();
  ev->add_option("--exec-horizon", ev_s, "s; defaults to max(d, 1)");
  ev->add_option("--n", ev_n, "rollouts")->capture_default_str();
  ev->add_option("--steps", ev_steps, "denoising steps")->capture_default_str();
  ev->add_option("--seed", ev_seed, "seed base")->capture_default_str();
  ev->add_option("--threads", ev_threads);
  ev->add_option("--env-config", ev_env);
  ev->add_option("--out", ev_out, "also write the CSV row here");
  ev_guid.attach(ev);

  // sweep
  auto* sw = app.add_subcommand("sweep", "solve rate against delay for several strategies");
  std::string sw_base, sw_cond, sw_env;
  std::string sw_csv = "sweep.csv";
  std::string sw_svg = "sweep.svg";
  std::vector<std::size_t> sw_delays = {0, 1, 2, 3, 4};
  std::vector<std::string> sw_strategies = {"synchronous", "naive_async", "inference_rtc",
                                            "training_rtc"};
  std::string sw_rule = "max";
  bench::SweepSpec spec;
  GuidanceFlags sw_guid;
  sw->add_option("--base", sw_base, "unconditioned checkpoint");
  sw->add_option("--conditioned", sw_cond, "prefix-conditioned checkpoint");
  sw->add_option("--delays", sw_delays)->delimiter(',')->capture_default_str();
  sw->add_option("--strategies", sw_strategies)->delimiter(',')->capture_default_str();
  sw->add_option("--n", spec.n_rollouts, "rollouts per cell")->capture_default_str();
  sw->add_option("--s-rule", sw_rule, "max: s = max(d, 1); fixed: s = --s")
      ->check(CLI::IsMember({"max", "fixed"}))
      ->capture_default_str();
  sw->add_option("--s", spec.fixed_s, "execution horizon for --s-rule fixed");
  sw->add_option("--steps", spec.num_steps, "denoising steps")->capture_default_str();
  sw->add_option("--seed", spec.seed_base, "seed base")->capture_default_str();
  sw->add_option("--threads", spec.threads);
  sw->add_option("--env-config", sw_env);
  sw->add_option("--csv", sw_csv)->capture_default_str();
  sw->add_option("--svg", sw_svg)->capture_default_str();
  sw_guid.attach(sw);

  // plot
  auto* pl = app.add_subcommand("plot", "render a sweep CSV as SVG");
  std::string pl_csv = "sweep.csv";
  std::string pl_out = "sweep.svg";
  pl->add_option("--csv", pl_csv)->capture_default_str();
  pl->add_option("--out", pl_out)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const env::EnvConfig ecfg = load_env(gen_env);
      const env::Dataset data = env::gen_dataset(ecfg, gen_episodes, gen_horizon, gen_seed);
      const fs::path out = out_path(gen_out);
      env::save_dataset(data, out);
      std::printf("kept %zu of %llu episodes, %zu chunks -> %s\n", data.demos.size(),
                  static_cast<unsigned long long>(data.episodes_attempted),
                  data.record_count(), out.string().c_str());
    } else if (tr->parsed()) {
      train::TrainConfig cfg;
      if (!tr_config.empty()) cfg = train::TrainConfig::load(in_path(tr_config));
      if (o_epochs->count()) cfg.epochs = tcfg.epochs;
      if (o_batch->count()) cfg.batch_size = tcfg.batch_size;
      if (o_sched->count()) cfg.schedule_epochs = tcfg.schedule_epochs;
      if (o_lr->count()) cfg.optimizer.lr = tcfg.optimizer.lr;
      if (o_lrmin->count()) cfg.optimizer.lr_min = tcfg.optimizer.lr_min;
      if (o_seed->count()) cfg.seed = tcfg.seed;
      if (o_cond->count()) cfg.conditioning = true;
      if (o_width->count()) cfg.width = tcfg.width;
      if (o_depth->count()) cfg.depth = tcfg.depth;
      if (o_threads->count()) cfg.threads = tcfg.threads;
      if (o_warm->count()) cfg.warm_start = in_path(warm);
      if (o_kind->count() || o_dmax->count() || o_dbase->count() ||
          (cfg.conditioning && !cfg.delays)) {
        cfg.delays = delay_kind == "uniform"
                         ? train::DelayDistribution::uniform(delay_max)
                         : train::DelayDistribution::geometric(delay_max, delay_base);
      }
      const env::Dataset data = env::load_dataset(in_path(tr_data));
      const train::TrainResult result = train::train_from_config(cfg, data);
      const fs::path out = out_path(tr_out);
      train::save_checkpoint(result.checkpoint, out);
      if (!tr_losses.empty()) {
        std::ofstream losses(out_path(tr_losses));
        losses << "epoch,loss\n";
        const std::size_t first = result.checkpoint.meta.epochs_seen - result.epoch_losses.size();
        for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%zu,%.9g\n", first + i, result.epoch_losses[i]);
          losses << buf;
        }
      }
      std::printf("trained to epoch %llu, final loss %.6f -> %s\n",
                  static_cast<unsigned long long>(result.checkpoint.meta.epochs_seen),
                  result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back(),
                  out.string().c_str());
    } else if (ev->parsed()) {
      Checkpoints ck;
      ck.load(ev_base, ev_cond);
      const exec::Strategy strategy = exec::parse_strategy(ev_strategy);
      const exec::DelayConfig dcfg{ck.horizon(), ev_s > 0 ? ev_s : std::max<std::size_t>(ev_delay, 1),
                                   ev_delay};
      const exec::PolicyBundle bundle = ck.bundle(ev_guid.config(ev_steps));
      const auto records = exec::run_batch(strategy, bundle, load_env(ev_env), dcfg, ev_steps,
                                           ev_seed, ev_n, ev_threads);
      bench::SweepResult result;
      result.cells.push_back(bench::summarize(strategy, dcfg, ev_seed, records));
      const std::string csv = bench::to_csv(result);
      std::fputs(csv.c_str(), stdout);
      if (!ev_out.empty()) bench::write_csv(result, out_path(ev_out));
    } else if (sw->parsed()) {
      Checkpoints ck;
      ck.load(sw_base, sw_cond);
      spec.delays = sw_delays;
      spec.strategies.clear();
      for (const auto& s : sw_strategies) spec.strategies.push_back(exec::parse_strategy(s));
      spec.rule = sw_rule == "fixed" ? bench::ExecRule::kFixed : bench::ExecRule::kMaxDelayOne;
      spec.horizon = ck.horizon();
      spec.guidance = sw_guid.config(spec.num_steps);
      const bench::SweepResult result = bench::sweep(spec, ck.bundle(spec.guidance),
                                                     load_env(sw_env));
      bench::write_csv(result, out_path(sw_csv));
      if (!sw_svg.empty()) bench::write_svg(result, out_path(sw_svg));
      std::fputs(bench::to_csv(result).c_str(), stdout);
    } else if (pl->parsed()) {
      bench::write_svg(bench::read_csv(in_path(pl_csv)), out_path(pl_out));
    }
  } catch (const rtc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
