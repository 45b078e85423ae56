#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cmd_util.hpp"
#include "hot/memory.hpp"

namespace hot {

namespace {

struct Series {
  AttentionVariant variant;
  std::vector<std::vector<std::size_t>> shapes;
  double slope_min, slope_max;
  bool memory = false;
};

std::vector<Series> default_series() {
  return {{AttentionVariant::kFactoredLinear, {{16, 16}, {32, 32}, {64, 64}, {128, 128}}, 0.8, 1.3, true},
          {AttentionVariant::kFullSoftmax, {{8, 8}, {16, 16}, {32, 32}}, 1.7, 2.3, false}};
}

Series parse_series(const cmd::json& j, const std::string& where) {
  reject_unknown_keys(j, {"variant", "shapes", "slope_min", "slope_max", "memory"}, where);
  Series s{};
  try {
    s.variant = parse_variant(get_required<std::string>(j, "variant", where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".variant: " + e.what());
  }
  s.shapes = get_required<std::vector<std::vector<std::size_t>>>(j, "shapes", where);
  s.slope_min = get_or(j, "slope_min", -std::numeric_limits<double>::infinity(), where);
  s.slope_max = get_or(j, "slope_max", std::numeric_limits<double>::infinity(), where);
  s.memory = get_or(j, "memory", false, where);
  if (s.shapes.size() < 2) throw ConfigError(where + ".shapes: need at least two sizes to fit a slope");
  for (const auto& d : s.shapes)
    if (d.empty() || std::find(d.begin(), d.end(), 0u) != d.end())
      throw ConfigError(where + ".shapes: empty or zero-sized shape");
  return s;
}

// Least-squares line y = a + b x.
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {(sy - b * sx) / n, b};
}

}  // namespace

CommandReport run_bench(const cmd::json& j, const RunOptions& opt) {
  const std::string where = "bench";
  cmd::check_keys(j, {"reps", "warmup", "model_dim", "heads", "features", "series", "memory_ratio", "oracle_cap"},
                  where);
  const auto seeds = cmd::seed_list(j, opt, 1, where);
  const auto reps = get_or<std::size_t>(j, "reps", 5, where);
  const auto warmup = get_or<std::size_t>(j, "warmup", 2, where);
  const auto model_dim = get_or<std::size_t>(j, "model_dim", 16, where);
  const auto heads = get_or<std::size_t>(j, "heads", 1, where);
  const auto features = get_or<std::size_t>(j, "features", 16, where);
  const double memory_ratio = get_or(j, "memory_ratio", 1.3, where);
  const auto cap = opt.cap.value_or(get_or<std::size_t>(j, "oracle_cap", 1u << 14, where));
  std::vector<Series> series;
  if (j.contains("series")) {
    if (!j.at("series").is_array() || j.at("series").empty()) throw ConfigError(where + ".series: non-empty array");
    for (std::size_t i = 0; i < j.at("series").size(); ++i)
      series.push_back(parse_series(j.at("series")[i], where + ".series[" + std::to_string(i) + "]"));
  } else {
    series = default_series();
  }
  if (reps < 3) throw ConfigError(where + ".reps: at least 3");
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0 || features == 0)
    throw ConfigError(where + ": model_dim must be a positive multiple of heads, features >= 1");

  CommandReport report;
  report.command = "bench";
  CsvWriter csv({"variant", "shape", "order", "tokens", "seed", "peak_bytes"});
  CsvWriter timing({"variant", "shape", "tokens", "seed", "median_ns", "raw_ns"});
  for (const Series& s : series) {
    const std::string name = to_string(s.variant);
    for (std::uint64_t seed : seeds) {
      std::vector<double> log_tokens, log_time, tokens_v, bytes_v;
      for (const auto& dims : s.shapes) {
        std::mt19937_64 rng(seed);
        const AttentionWeights w = AttentionWeights::glorot(model_dim, heads, rng);
        const FeatureMap fm({features, seed, model_dim / heads});
        std::vector<std::size_t> full = dims;
        full.push_back(model_dim);
        DenseTensor x{Shape(full)};
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : x.values()) v = normal(rng);
        const std::size_t tokens = x.numel() / model_dim;
        AttentionOptions aopt;
        aopt.oracle_cap = cap;
        std::vector<double> samples;
        std::size_t peak = 0;
        for (std::size_t r = 0; r < warmup + reps; ++r) {
          const std::size_t live = MemoryTracker::current();
          MemoryTracker::reset_peak();
          const auto t0 = std::chrono::steady_clock::now();
          const DenseTensor y = attention_forward(s.variant, x, w, &fm, aopt);
          const auto t1 = std::chrono::steady_clock::now();
          peak = std::max(peak, MemoryTracker::peak() - live);
          if (r >= warmup) samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
        std::vector<double> sorted = samples;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                                : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
        std::string raw;
        for (double t : samples) raw += (raw.empty() ? "" : ";") + format_double(t);
        csv.field(name).field(cmd::shape_str(dims)).field(dims.size()).field(tokens).field(seed).field(peak).end_row();
        timing.field(name).field(cmd::shape_str(dims)).field(tokens).field(seed).field(median).field(raw).end_row();
        log_tokens.push_back(std::log(static_cast<double>(tokens)));
        log_time.push_back(std::log(median));
        tokens_v.push_back(static_cast<double>(tokens));
        bytes_v.push_back(static_cast<double>(peak));
      }
      const double slope = fit_line(log_tokens, log_time).second;
      const std::string key = name + "/seed" + std::to_string(seed);
      report.check(key + "/time-slope", slope >= s.slope_min && slope <= s.slope_max,
                   "slope " + format_double(slope) + " in [" + format_double(s.slope_min) + ", " +
                       format_double(s.slope_max) + "]");
      report.timing[key] = {{"time_slope", slope}};
      if (s.memory) {
        const auto [a, b] = fit_line(tokens_v, bytes_v);
        double worst = 1.0;
        for (std::size_t i = 0; i < tokens_v.size(); ++i) {
          const double fit = a + b * tokens_v[i];
          const double ratio = std::max(bytes_v[i] / fit, fit / bytes_v[i]);
          worst = std::max(worst, fit > 0 ? ratio : std::numeric_limits<double>::infinity());
        }
        const double mem_slope = fit_line(log_tokens, [&] {
                                   std::vector<double> l;
                                   for (double v : bytes_v) l.push_back(std::log(v));
                                   return l;
                                 }()).second;
        report.check(key + "/memory-linear", worst <= memory_ratio,
                     "max deviation from linear fit " + format_double(worst) + "x, log-log slope " +
                         format_double(mem_slope));
        report.results[key] = {{"memory_fit_ratio", worst}, {"memory_slope", mem_slope}};
      }
    }
  }
  cmd::emit(report, opt, "bench.csv", csv);
  cmd::emit(report, opt, "bench_timing.csv", timing);
  return report;
}

}  // namespace hot
