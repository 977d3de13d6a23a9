#include "rtc/bench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rtc/error.hpp"
#include "rtc/parallel.hpp"

namespace rtc::bench {
namespace {

const char* const kColumns[] = {
    "strategy",  "d",          "s",         "n",
    "successes", "rate",       "wilson_lo", "wilson_hi",
    "mean_ticks", "sem_ticks", "mean_switch_jump", "mean_within_jump",
    "fwd_passes", "vjp_passes", "seed_base"};
constexpr std::size_t kColumnCount = sizeof(kColumns) / sizeof(kColumns[0]);

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Interval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) throw DomainError("wilson_interval needs n >= 1");
  if (successes > n) {
    throw DomainError("successes (" + std::to_string(successes) + ") exceed n (" +
                      std::to_string(n) + ")");
  }
  if (!(z > 0.0) || !std::isfinite(z)) throw DomainError("z must be positive");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval iv{std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
  if (successes == 0) iv.lower = 0.0;
  if (successes == n) iv.upper = 1.0;
  return iv;
}

Continuity continuity_metric(const exec::RolloutRecord& record) {
  Continuity c;
  const std::set<std::size_t> switches(record.switch_ticks.begin(), record.switch_ticks.end());
  for (std::size_t t = 1; t < record.actions.size(); ++t) {
    const auto& a = record.actions[t];
    const auto& b = record.actions[t - 1];
    const double j = std::hypot(a[0] - b[0], a[1] - b[1]);
    c.max_jump = std::max(c.max_jump, j);
    if (switches.contains(t)) {
      c.switch_sum += j;
      ++c.switch_count;
    } else {
      c.within_sum += j;
      ++c.within_count;
    }
  }
  if (c.switch_count > 0) c.mean_jump_at_switch = c.switch_sum / c.switch_count;
  if (c.within_count > 0) c.mean_jump_within_chunk = c.within_sum / c.within_count;
  return c;
}

std::size_t SweepSpec::exec_horizon(std::size_t delay) const {
  return rule == ExecRule::kFixed ? fixed_s : std::max<std::size_t>(delay, 1);
}

void SweepSpec::validate() const {
  if (delays.empty() || strategies.empty()) {
    throw ConfigError("sweep needs at least one delay and one strategy");
  }
  if (n_rollouts == 0) throw ConfigError("sweep needs n_rollouts >= 1");
  if (num_steps == 0) throw ConfigError("sweep needs num_steps >= 1");
  std::vector<std::string> bad;
  for (std::size_t d : delays) {
    const std::size_t s = exec_horizon(d);
    for (exec::Strategy st : strategies) {
      const bool timing_ok = s >= 1 && s <= horizon && d <= horizon - s;
      const bool async_ok = !exec::is_async(st) || d <= s;
      if (!timing_ok || !async_ok) {
        bad.push_back(exec::to_string(st) + "(d=" + std::to_string(d) +
                      ",s=" + std::to_string(s) + ")");
      }
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid sweep cells for H=" + std::to_string(horizon) + ":";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
}

const CellResult& SweepResult::at(const std::string& strategy, std::size_t d) const {
  for (const auto& c : cells) {
    if (c.strategy == strategy && c.d == d) return c;
  }
  throw ConfigError("no sweep cell for " + strategy + " at d=" + std::to_string(d));
}

CellResult summarize(exec::Strategy strategy, const exec::DelayConfig& cfg,
                     std::uint64_t seed_base,
                     const std::vector<exec::RolloutRecord>& records) {
  CellResult c;
  c.strategy = exec::to_string(strategy);
  c.d = cfg.delay;
  c.s = cfg.exec_horizon;
  c.n = records.size();
  c.seed_base = seed_base;
  double tick_sum = 0.0;
  double switch_sum = 0.0;
  double within_sum = 0.0;
  std::size_t switch_count = 0;
  std::size_t within_count = 0;
  flow::InferenceCost cost;
  for (const auto& r : records) {
    c.successes += r.success ? 1 : 0;
    tick_sum += static_cast<double>(r.length);
    const Continuity k = continuity_metric(r);
    switch_sum += k.switch_sum;
    within_sum += k.within_sum;
    switch_count += k.switch_count;
    within_count += k.within_count;
    c.max_jump = std::max(c.max_jump, k.max_jump);
    cost += r.cost;
  }
  if (c.n == 0) return c;
  const double n = static_cast<double>(c.n);
  c.rate = static_cast<double>(c.successes) / n;
  const Interval iv = wilson_interval(c.successes, c.n);
  c.wilson_lo = iv.lower;
  c.wilson_hi = iv.upper;
  c.mean_ticks = tick_sum / n;
  if (c.n > 1) {
    double ss = 0.0;
    for (const auto& r : records) {
      const double e = static_cast<double>(r.length) - c.mean_ticks;
      ss += e * e;
    }
    c.sem_ticks = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  if (switch_count > 0) c.mean_switch_jump = switch_sum / switch_count;
  if (within_count > 0) c.mean_within_jump = within_sum / within_count;
  if (cost.chunks > 0) {
    c.fwd_passes = static_cast<double>(cost.forward_passes) / cost.chunks;
    c.vjp_passes = static_cast<double>(cost.vjp_passes) / cost.chunks;
  }
  return c;
}

SweepResult sweep(const SweepSpec& spec, const exec::PolicyBundle& bundle,
                  const env::EnvConfig& env_cfg) {
  spec.validate();
  env_cfg.validate();
  struct Cell {
    exec::Strategy strategy;
    exec::DelayConfig cfg;
  };
  std::vector<Cell> cells;
  for (exec::Strategy st : spec.strategies) {
    for (std::size_t d : spec.delays) {
      Cell cell{st, {spec.horizon, spec.exec_horizon(d), d}};
      exec::check_compatible(st, bundle, cell.cfg);
      cells.push_back(cell);
    }
  }
  const std::size_t n = spec.n_rollouts;
  std::vector<exec::RolloutRecord> records(cells.size() * n);
  parallel_for(
      records.size(),
      [&](std::size_t k) {
        const Cell& cell = cells[k / n];
        records[k] = exec::run_episode(cell.strategy, bundle, env_cfg, cell.cfg,
                                       spec.num_steps, exec::episode_seed(spec.seed_base, k % n));
      },
      spec.threads);

  SweepResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<exec::RolloutRecord> part(std::make_move_iterator(records.begin() + c * n),
                                          std::make_move_iterator(records.begin() + (c + 1) * n));
    result.cells.push_back(summarize(cells[c].strategy, cells[c].cfg, spec.seed_base, part));
  }
  return result;
}

std::string to_csv(const SweepResult& result) {
  std::string out;
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    out += kColumns[i];
    out += i + 1 < kColumnCount ? ',' : '\n';
  }
  for (const auto& c : result.cells) {
    out += c.strategy + "," + std::to_string(c.d) + "," + std::to_string(c.s) + "," +
           std::to_string(c.n) + "," + std::to_string(c.successes) + "," + fixed(c.rate) +
           "," + fixed(c.wilson_lo) + "," + fixed(c.wilson_hi) + "," + fixed(c.mean_ticks) +
           "," + fixed(c.sem_ticks) + "," + fixed(c.mean_switch_jump) + "," +
           fixed(c.mean_within_jump) + "," + fixed(c.fwd_passes) + "," + fixed(c.vjp_passes) +
           "," + std::to_string(c.seed_base) + "\n";
  }
  return out;
}

SweepResult parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty sweep CSV");
  const auto header = split(line, ',');
  if (header.size() != kColumnCount) throw FormatError("unexpected sweep CSV header");
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (header[i] != kColumns[i]) {
      throw FormatError("sweep CSV column " + std::to_string(i) + " is '" + header[i] +
                        "', expected '" + kColumns[i] + "'");
    }
  }
  SweepResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != kColumnCount) {
      throw FormatError("sweep CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(f.size()) + " fields");
    }
    try {
      CellResult c;
      c.strategy = f[0];
      c.d = std::stoul(f[1]);
      c.s = std::stoul(f[2]);
      c.n = std::stoul(f[3]);
      c.successes = std::stoul(f[4]);
      c.rate = std::stod(f[5]);
      c.wilson_lo = std::stod(f[6]);
      c.wilson_hi = std::stod(f[7]);
      c.mean_ticks = std::stod(f[8]);
      c.sem_ticks = std::stod(f[9]);
      c.mean_switch_jump = std::stod(f[10]);
      c.mean_within_jump = std::stod(f[11]);
      c.fwd_passes = std::stod(f[12]);
      c.vjp_passes = std::stod(f[13]);
      c.seed_base = std::stoull(f[14]);
      result.cells.push_back(std::move(c));
    } catch (const std::logic_error&) {
      throw FormatError("sweep CSV line " + std::to_string(line_no) + " is malformed");
    }
  }
  return result;
}

void write_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_csv(result);
}

SweepResult read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

std::string render_svg(const SweepResult& result) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::vector<std::string> order;
  std::map<std::string, std::vector<const CellResult*>> series;
  std::size_t d_min = SIZE_MAX, d_max = 0;
  for (const auto& c : result.cells) {
    if (!series.contains(c.strategy)) order.push_back(c.strategy);
    series[c.strategy].push_back(&c);
    d_min = std::min(d_min, c.d);
    d_max = std::max(d_max, c.d);
  }
  if (order.empty()) d_min = 0;
  const double span = d_max > d_min ? static_cast<double>(d_max - d_min) : 1.0;
  auto px = [&](double d) { return kLeft + (d - static_cast<double>(d_min)) / span * plot_w; };
  auto py = [&](double r) { return kTop + (1.0 - r) * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                         "#ff7f0e", "#8c564b"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double r = k / 4.0;
    svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(r)) + "\" x2=\"" +
           num(kLeft + plot_w) + "\" y2=\"" + num(py(r)) + "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(r) + 4) +
           "\" text-anchor=\"end\">" + num(r) + "</text>\n";
  }
  for (std::size_t d = d_min; !order.empty() && d <= d_max; ++d) {
    svg += "<text x=\"" + num(px(static_cast<double>(d))) + "\" y=\"" +
           num(kTop + plot_h + 18) + "\" text-anchor=\"middle\">" + std::to_string(d) +
           "</text>\n";
  }
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(plot_w) +
         "\" height=\"" + num(plot_h) + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 12) +
         "\" text-anchor=\"middle\">inference delay d (ticks)</text>\n";
  svg += "<text transform=\"translate(16," + num(kTop + plot_h / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">solve rate</text>\n";

  for (std::size_t k = 0; k < order.size(); ++k) {
    auto cells = series[order[k]];
    std::sort(cells.begin(), cells.end(),
              [](const CellResult* a, const CellResult* b) { return a->d < b->d; });
    const std::string color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string band;
    for (const auto* c : cells) {
      band += num(px(static_cast<double>(c->d))) + "," + num(py(c->wilson_hi)) + " ";
    }
    for (auto it = cells.rbegin(); it != cells.rend(); ++it) {
      band += num(px(static_cast<double>((*it)->d))) + "," + num(py((*it)->wilson_lo)) + " ";
    }
    svg += "<polygon points=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    std::string line;
    for (const auto* c : cells) {
      line += num(px(static_cast<double>(c->d))) + "," + num(py(c->rate)) + " ";
    }
    svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    for (const auto* c : cells) {
      svg += "<circle cx=\"" + num(px(static_cast<double>(c->d))) + "\" cy=\"" +
             num(py(c->rate)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    svg += "<line x1=\"" + num(kLeft + plot_w + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kLeft + plot_w + 32) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + plot_w + 38) + "\" y=\"" + num(ly + 4) + "\">" +
           xml_escape(order[k]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << render_svg(result);
}

}  // namespace rtc::bench
