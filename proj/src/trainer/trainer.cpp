#include "rtc/trainer/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include <json.hpp>

#include "rtc/error.hpp"
#include "rtc/flowpolicy/flow.hpp"
#include "rtc/parallel.hpp"

namespace rtc::train {
namespace {

constexpr std::uint64_t kShuffleSalt = 0x73687566;
constexpr std::uint64_t kNoiseSalt = 0x6e6f6973;
constexpr std::uint64_t kDelaySalt = 0x64656c61;

struct Example {
  const flow::Observation* obs;
  flow::ActionChunk chunk;  // normalized
};

std::vector<Example> flatten(const env::Dataset& data, const env::Normalizer& stats) {
  std::vector<Example> out;
  out.reserve(data.record_count());
  for (const auto& demo : data.demos) {
    for (std::size_t t = 0; t < demo.chunks.size(); ++t) {
      out.push_back({&demo.observations[t], stats.normalize(demo.chunks[t])});
    }
  }
  return out;
}

void check_compatible(const flow::Architecture& arch, const env::Dataset& data) {
  if (arch.obs_dim != data.obs_dim || arch.action_dim != data.action_dim ||
      arch.horizon != data.horizon) {
    throw ConfigError("checkpoint architecture (obs " + std::to_string(arch.obs_dim) +
                      ", action " + std::to_string(arch.action_dim) + ", H " +
                      std::to_string(arch.horizon) +
                      ") is incompatible with the dataset");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (conditioning && !delays) {
    throw ConfigError("prefix conditioning requires a delay distribution");
  }
  if (delays) delays->validate();
  if (!(optimizer.lr > 0.0) || optimizer.lr_min < 0.0 || optimizer.lr_min > optimizer.lr) {
    throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr, lr > 0");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (width == 0 || time_embed_dim == 0 || time_embed_dim % 2 != 0 ||
      (token_mixing && mix_expansion == 0)) {
    throw ConfigError("invalid architecture settings");
  }
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open training config " + path.string());
  TrainConfig cfg;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
      else if (key == "schedule_epochs") cfg.schedule_epochs = value.get<std::size_t>();
      else if (key == "lr") cfg.optimizer.lr = value.get<double>();
      else if (key == "lr_min") cfg.optimizer.lr_min = value.get<double>();
      else if (key == "beta1") cfg.optimizer.beta1 = value.get<double>();
      else if (key == "beta2") cfg.optimizer.beta2 = value.get<double>();
      else if (key == "adam_eps") cfg.optimizer.eps = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "conditioning") cfg.conditioning = value.get<bool>();
      else if (key == "warm_start") cfg.warm_start = value.get<std::string>();
      else if (key == "width") cfg.width = value.get<std::size_t>();
      else if (key == "depth") cfg.depth = value.get<std::size_t>();
      else if (key == "time_embed_dim") cfg.time_embed_dim = value.get<std::size_t>();
      else if (key == "token_mixing") cfg.token_mixing = value.get<bool>();
      else if (key == "mix_expansion") cfg.mix_expansion = value.get<std::size_t>();
      else if (key == "threads") cfg.threads = value.get<std::size_t>();
      else if (key == "delay_distribution") {
        DelayDistribution d;
        const std::string kind = value.at("kind").get<std::string>();
        if (kind == "uniform") d.kind = DelayDistribution::Kind::kUniformInt;
        else if (kind == "geometric") d.kind = DelayDistribution::Kind::kGeometric;
        else throw ConfigError("unknown delay distribution kind '" + kind + "'");
        d.d_max = value.at("d_max").get<std::size_t>();
        if (value.contains("base")) d.base = value.at("base").get<double>();
        cfg.delays = d;
      } else {
        throw ConfigError("unknown training config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("training config " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void TrainConfig::save(const std::filesystem::path& path) const {
  nlohmann::json j = {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"schedule_epochs", schedule_epochs},
      {"lr", optimizer.lr},
      {"lr_min", optimizer.lr_min},
      {"beta1", optimizer.beta1},
      {"beta2", optimizer.beta2},
      {"adam_eps", optimizer.eps},
      {"seed", seed},
      {"conditioning", conditioning},
      {"width", width},
      {"depth", depth},
      {"time_embed_dim", time_embed_dim},
      {"token_mixing", token_mixing},
      {"mix_expansion", mix_expansion},
      {"threads", threads},
  };
  if (warm_start) j["warm_start"] = warm_start->string();
  if (delays) {
    j["delay_distribution"] = {
        {"kind", delays->kind == DelayDistribution::Kind::kUniformInt ? "uniform"
                                                                       : "geometric"},
        {"d_max", delays->d_max},
        {"base", delays->base},
    };
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training config " + path.string());
  out << j.dump(2) << "\n";
}

double cosine_lr(const OptimizerConfig& opt, std::uint64_t step,
                 std::uint64_t total_steps) {
  if (total_steps == 0) return opt.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return opt.lr_min +
         0.5 * (opt.lr - opt.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t steps_per_epoch(std::size_t records, std::size_t batch_size) {
  return (records + batch_size - 1) / batch_size;
}

TrainResult train(const TrainConfig& config, const env::Dataset& data,
                  const Checkpoint* warm_start) {
  config.validate();
  if (data.record_count() == 0) throw DatasetError("training dataset is empty");

  flow::PolicyParams params;
  env::Normalizer stats;
  std::uint64_t start_epoch = 0;
  std::uint64_t steps_done = 0;
  if (warm_start != nullptr) {
    check_compatible(warm_start->params.arch, data);
    params = warm_start->params;
    stats = warm_start->stats;
    start_epoch = warm_start->meta.epochs_seen;
    steps_done = warm_start->meta.gradient_steps;
  } else {
    flow::Architecture arch;
    arch.obs_dim = data.obs_dim;
    arch.action_dim = data.action_dim;
    arch.horizon = data.horizon;
    arch.width = config.width;
    arch.depth = config.depth;
    arch.time_embed_dim = config.time_embed_dim;
    arch.token_mixing = config.token_mixing;
    arch.mix_expansion = config.mix_expansion;
    params = flow::PolicyParams::initialize(arch, derive_seed(config.seed, 0x696e6974));
    stats = data.stats;
  }

  const std::vector<Example> examples = flatten(data, stats);
  const std::size_t n = examples.size();
  const std::size_t per_epoch = steps_per_epoch(n, config.batch_size);
  const std::uint64_t schedule_epochs =
      config.schedule_epochs > 0 ? config.schedule_epochs : start_epoch + config.epochs;
  const std::uint64_t total_steps = schedule_epochs * per_epoch;

  std::vector<nd::Tensor> m1;
  std::vector<nd::Tensor> m2;
  for (const auto& t : params.tensors) {
    m1.emplace_back(t.shape());
    m2.emplace_back(t.shape());
  }
  std::uint64_t adam_t = 0;

  std::vector<double> epoch_losses;
  std::vector<std::size_t> order(n);
  std::vector<flow::MaskedError> results(config.batch_size);

  for (std::uint64_t epoch = start_epoch; epoch < start_epoch + config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(config.seed, epoch, kShuffleSalt));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }

    double loss_sum = 0.0;
    for (std::size_t batch = 0; batch < per_epoch; ++batch) {
      const std::size_t begin = batch * config.batch_size;
      const std::size_t count = std::min(config.batch_size, n - begin);
      try {
        parallel_for(
            count,
            [&](std::size_t j) {
              const std::uint64_t slot = epoch * n + begin + j;
              const Example& ex = examples[order[begin + j]];
              std::size_t delay = 0;
              if (config.conditioning) {
                Rng delay_rng(derive_seed(config.seed, slot, kDelaySalt));
                delay = sample_delay(*config.delays, delay_rng);
              }
              Rng noise(derive_seed(config.seed, slot, kNoiseSalt));
              results[j] = flow::masked_error(params, *ex.obs, ex.chunk, delay, noise, true);
            },
            config.threads);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + e.what());
      }

      double sse = 0.0;
      double elements = 0.0;
      std::vector<nd::Tensor> grads = std::move(results[0].param_grads);
      sse += results[0].sum_sq;
      elements += results[0].count;
      for (std::size_t j = 1; j < count; ++j) {
        sse += results[j].sum_sq;
        elements += results[j].count;
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto g = grads[p].mutable_data();
          const auto src = results[j].param_grads[p].data();
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
        }
      }
      const double scale = 1.0 / (elements + flow::kLossGuard);
      const double loss = sse * scale;
      if (!std::isfinite(loss)) {
        throw NumericError("training loss is not finite at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch));
      }
      loss_sum += loss;

      const OptimizerConfig& opt = config.optimizer;
      const double lr = cosine_lr(opt, steps_done, total_steps);
      ++adam_t;
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(adam_t));
      for (std::size_t p = 0; p < grads.size(); ++p) {
        auto w = params.tensors[p].mutable_data();
        auto a = m1[p].mutable_data();
        auto b = m2[p].mutable_data();
        const auto g = grads[p].data();
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double gk = g[k] * scale;
          a[k] = opt.beta1 * a[k] + (1.0 - opt.beta1) * gk;
          b[k] = opt.beta2 * b[k] + (1.0 - opt.beta2) * gk * gk;
          w[k] -= lr * (a[k] / bc1) / (std::sqrt(b[k] / bc2) + opt.eps);
        }
      }
      ++steps_done;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(per_epoch));
  }

  TrainingMetadata meta;
  meta.epochs_seen = start_epoch + config.epochs;
  meta.gradient_steps = steps_done;
  meta.seed = config.seed;
  meta.batch_size = config.batch_size;
  meta.schedule_epochs = schedule_epochs;
  meta.optimizer = config.optimizer;
  if (config.conditioning) meta.delays = config.delays;
  return TrainResult{Checkpoint(std::move(params), std::move(stats), config.conditioning,
                                std::move(meta)),
                     std::move(epoch_losses)};
}

TrainResult train_from_config(const TrainConfig& config, const env::Dataset& data) {
  if (!config.warm_start) return train(config, data);
  const Checkpoint parent = load_checkpoint(*config.warm_start);
  return train(config, data, &parent);
}

double dataset_loss(const Checkpoint& ckpt, const env::Dataset& data,
                    std::size_t delay, std::uint64_t seed) {
  const std::vector<Example> examples = flatten(data, ckpt.stats);
  double sse = 0.0;
  double elements = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Rng noise(derive_seed(seed, i, kNoiseSalt));
    const auto err =
        flow::masked_error(ckpt.params, *examples[i].obs, examples[i].chunk, delay, noise, false);
    sse += err.sum_sq;
    elements += err.count;
  }
  return sse / (elements + flow::kLossGuard);
}

}  // namespace rtc::train
