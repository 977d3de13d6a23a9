#include "rtc/trainer/checkpoint.hpp"

#include <string>

#include "rtc/binary_io.hpp"
#include "rtc/error.hpp"

namespace rtc::train {
namespace {

constexpr std::string_view kMagic{"RTCCKPT\0", 8};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Checkpoint::Checkpoint(flow::PolicyParams params_in, env::Normalizer stats_in,
                       bool conditioned, TrainingMetadata meta_in)
    : params(std::move(params_in)),
      stats(std::move(stats_in)),
      meta(std::move(meta_in)),
      conditioned_(conditioned) {
  params.validate();
  if (stats.mean.size() != params.arch.action_dim ||
      stats.std.size() != params.arch.action_dim) {
    throw StructuralError("normalization stats do not match the action dimension");
  }
  if (conditioned_ && !meta.delays) {
    throw ConfigError("a prefix-conditioned checkpoint needs a delay distribution");
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);

  const flow::Architecture& a = ckpt.params.arch;
  w.u32(static_cast<std::uint32_t>(a.obs_dim));
  w.u32(static_cast<std::uint32_t>(a.action_dim));
  w.u32(static_cast<std::uint32_t>(a.horizon));
  w.u32(static_cast<std::uint32_t>(a.width));
  w.u32(static_cast<std::uint32_t>(a.depth));
  w.u32(static_cast<std::uint32_t>(a.time_embed_dim));
  w.u8(a.token_mixing ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(a.mix_expansion));
  w.u32(static_cast<std::uint32_t>(a.time_conditioning));

  w.u32(static_cast<std::uint32_t>(ckpt.stats.mean.size()));
  for (double m : ckpt.stats.mean) w.f64(m);
  for (double s : ckpt.stats.std) w.f64(s);

  w.u8(ckpt.conditioned() ? 1 : 0);

  const TrainingMetadata& m = ckpt.meta;
  w.u64(m.epochs_seen);
  w.u64(m.gradient_steps);
  w.u64(m.seed);
  w.u64(m.batch_size);
  w.u64(m.schedule_epochs);
  w.u8(m.delays ? 1 : 0);
  const DelayDistribution dist = m.delays.value_or(DelayDistribution{});
  w.u32(static_cast<std::uint32_t>(dist.kind));
  w.u32(static_cast<std::uint32_t>(dist.d_max));
  w.f64(dist.base);
  w.f64(m.optimizer.lr);
  w.f64(m.optimizer.lr_min);
  w.f64(m.optimizer.beta1);
  w.f64(m.optimizer.beta2);
  w.f64(m.optimizer.eps);

  const auto layout = flow::parameter_layout(a);
  w.u32(static_cast<std::uint32_t>(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const nd::Tensor& t = ckpt.params.tensors[i];
    w.str(layout[i].name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  w.finish_to_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r = io::Reader::open_checked(path);
  if (r.bytes(kMagic.size()) != kMagic) {
    throw FormatError(path.string() + " is not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kVersion) + ")");
  }

  flow::Architecture a;
  a.obs_dim = r.u32();
  a.action_dim = r.u32();
  a.horizon = r.u32();
  a.width = r.u32();
  a.depth = r.u32();
  a.time_embed_dim = r.u32();
  a.token_mixing = r.u8() != 0;
  a.mix_expansion = r.u32();
  const std::uint32_t tc = r.u32();
  if (tc > 1) throw FormatError("unknown time conditioning mode");
  a.time_conditioning = static_cast<flow::TimeConditioning>(tc);

  env::Normalizer stats;
  const std::uint32_t n = r.u32();
  stats.mean.resize(n);
  stats.std.resize(n);
  for (double& v : stats.mean) v = r.f64();
  for (double& v : stats.std) v = r.f64();

  const bool conditioned = r.u8() != 0;

  TrainingMetadata m;
  m.epochs_seen = r.u64();
  m.gradient_steps = r.u64();
  m.seed = r.u64();
  m.batch_size = r.u64();
  m.schedule_epochs = r.u64();
  const bool has_delays = r.u8() != 0;
  DelayDistribution dist;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw FormatError("unknown delay distribution kind");
  dist.kind = static_cast<DelayDistribution::Kind>(kind);
  dist.d_max = r.u32();
  dist.base = r.f64();
  if (has_delays) m.delays = dist;
  m.optimizer.lr = r.f64();
  m.optimizer.lr_min = r.f64();
  m.optimizer.beta1 = r.f64();
  m.optimizer.beta2 = r.f64();
  m.optimizer.eps = r.f64();

  const auto layout = flow::parameter_layout(a);
  if (r.u32() != layout.size()) {
    throw FormatError("checkpoint tensor count does not match its descriptor");
  }
  flow::PolicyParams params{a, {}};
  for (const auto& spec : layout) {
    if (r.str() != spec.name) {
      throw FormatError("checkpoint tensor order differs from descriptor at " + spec.name);
    }
    nd::Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != spec.shape) {
      throw FormatError("tensor " + spec.name + " has shape " + nd::shape_string(shape));
    }
    std::vector<double> data(nd::element_count(shape));
    for (double& v : data) v = r.f64();
    params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  r.expect_end();
  try {
    return Checkpoint(std::move(params), std::move(stats), conditioned, std::move(m));
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace rtc::train
