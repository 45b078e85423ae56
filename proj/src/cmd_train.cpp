#include <cmath>
#include <map>

#include "cmd_util.hpp"
#include "hot/oracles.hpp"
#include "hot/training.hpp"

namespace hot {

namespace {

using cmd::json;

ForecastTaskSpec parse_forecast(const json& j, const std::string& where) {
  ForecastTaskSpec s;
  if (j.is_null()) return s;
  reject_unknown_keys(j, {"variates", "lookback", "horizon", "train", "val", "sigma", "rho", "gamma", "noise"}, where);
  s.variates = get_or(j, "variates", s.variates, where);
  s.lookback = get_or(j, "lookback", s.lookback, where);
  s.horizon = get_or(j, "horizon", s.horizon, where);
  s.train = get_or(j, "train", s.train, where);
  s.val = get_or(j, "val", s.val, where);
  s.sigma = get_or(j, "sigma", s.sigma, where);
  s.rho = get_or(j, "rho", s.rho, where);
  s.gamma = get_or(j, "gamma", s.gamma, where);
  s.noise = get_or(j, "noise", s.noise, where);
  if (s.variates == 0 || s.lookback < 2 || s.horizon == 0 || s.train == 0 || s.val == 0)
    throw ConfigError(where + ": degenerate task dimensions");
  return s;
}

VoxelTaskSpec parse_voxel(const json& j, const std::string& where) {
  VoxelTaskSpec s;
  if (j.is_null()) return s;
  reject_unknown_keys(j, {"side", "train", "val", "noise"}, where);
  s.side = get_or(j, "side", s.side, where);
  s.train = get_or(j, "train", s.train, where);
  s.val = get_or(j, "val", s.val, where);
  s.noise = get_or(j, "noise", s.noise, where);
  if (s.side < 4 || s.side % 2 || s.train == 0 || s.val == 0)
    throw ConfigError(where + ": side must be even and >= 4, splits non-empty");
  return s;
}

TrainOptions parse_train(const json& j, const std::string& where) {
  TrainOptions t;
  if (j.is_null()) return t;
  reject_unknown_keys(j, {"steps", "batch", "lr", "beta1", "beta2", "eps", "eval_every"}, where);
  t.steps = get_or(j, "steps", t.steps, where);
  t.batch = get_or(j, "batch", t.batch, where);
  t.adam.lr = get_or(j, "lr", t.adam.lr, where);
  t.adam.beta1 = get_or(j, "beta1", t.adam.beta1, where);
  t.adam.beta2 = get_or(j, "beta2", t.adam.beta2, where);
  t.adam.eps = get_or(j, "eps", t.adam.eps, where);
  t.eval_every = get_or(j, "eval_every", t.eval_every, where);
  if (t.steps == 0 || t.batch == 0 || t.eval_every == 0) throw ConfigError(where + ": steps, batch, eval_every >= 1");
  if (!(t.adam.lr > 0.0) || t.adam.beta1 < 0.0 || t.adam.beta1 >= 1.0 || t.adam.beta2 < 0.0 || t.adam.beta2 >= 1.0 ||
      !(t.adam.eps > 0.0))
    throw ConfigError(where + ": invalid Adam hyperparameters");
  return t;
}

ModelConfig default_forecast_model(const ForecastTaskSpec& task) {
  ModelConfig cfg;
  cfg.embed.input_dims = {task.variates, task.lookback};
  cfg.embed.channels = 1;
  const std::size_t patch = task.lookback % 4 == 0 ? 4 : 1;
  cfg.embed.stages = {{1, patch}};
  cfg.block.model_dim = 16;
  cfg.block.heads = 2;
  cfg.block.dims = cfg.embed.token_dims();
  cfg.head.pooling = HeadPooling::kFlatten;
  cfg.head.task = TaskKind::kForecast;
  cfg.head.horizon = task.horizon;
  cfg.head.variates = task.variates;
  return cfg;
}

ModelConfig default_voxel_model(const VoxelTaskSpec& task) {
  ModelConfig cfg;
  cfg.embed.input_dims = {task.side, task.side, task.side};
  cfg.embed.channels = 1;
  cfg.embed.stages = {{2, 2, 2}};
  cfg.block.model_dim = 8;
  cfg.block.heads = 1;
  cfg.block.dims = cfg.embed.token_dims();
  cfg.head.pooling = HeadPooling::kFlatten;
  cfg.head.task = TaskKind::kClassify;
  cfg.head.classes = 8;
  return cfg;
}

void check_model(const ModelConfig& cfg, const std::vector<std::size_t>& input_dims, TaskKind task,
                 const std::string& where) {
  if (cfg.embed.input_dims != input_dims || cfg.embed.channels != 1)
    throw ConfigError(where + ".model: embed.input_dims must match the task and channels must be 1");
  if (cfg.head.task != task) throw ConfigError(where + ".model: head task does not match the task");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".model: " + e.what());
  }
}

std::string mask_str(const std::vector<bool>& mask, std::size_t order) {
  std::string s;
  for (std::size_t i = 0; i < order; ++i) s += mask.empty() || mask[i] ? '1' : '0';
  return s;
}

void log_rows(CsvWriter& csv, const std::vector<std::string>& prefix, const TrainResult& r) {
  for (const auto& row : r.log) {
    for (const auto& p : prefix) csv.field(p);
    csv.field(row.step).field(row.batch_loss).field(row.train_loss).field(row.val_loss).field(row.val_mae);
    csv.field(row.val_smape).field(row.val_acc).field(row.val_auc).end_row();
  }
}

const std::vector<std::string> kLogColumns = {"step",      "batch_loss", "train_loss", "val_loss",  "val_mae",
                                              "val_smape", "val_acc",    "val_auc"};

// Wall-clock per logged step goes to timing.json so the CSV logs stay reproducible.
nlohmann::ordered_json elapsed_ms(const TrainResult& r) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& row : r.log) out.push_back(row.elapsed_ms);
  return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

CommandReport run_ablate(const json& j, const RunOptions& opt) {
  const std::string where = "ablate";
  cmd::check_keys(j, {"task", "model", "train", "masks", "heads", "variants"}, where);
  const auto seeds = cmd::seed_list(j, opt, 5, where);
  const ForecastTaskSpec task = parse_forecast(j.value("task", json()), where + ".task");
  TrainOptions train = parse_train(j.value("train", json()), where + ".train");
  ModelConfig base = j.contains("model") ? model_config_from_json(j.at("model")) : default_forecast_model(task);
  check_model(base, {task.variates, task.lookback}, TaskKind::kForecast, where);
  const std::size_t order = base.block.order();
  std::vector<std::vector<bool>> masks;
  if (j.contains("masks")) {
    masks = get_or<std::vector<std::vector<bool>>>(j, "masks", {}, where);
  } else {
    for (std::size_t bits = (1u << order); bits-- > 0;) {
      std::vector<bool> m(order);
      for (std::size_t i = 0; i < order; ++i) m[i] = (bits >> (order - 1 - i)) & 1u;
      masks.push_back(m);
    }
  }
  for (const auto& m : masks)
    if (m.size() != order) throw ConfigError(where + ".masks: every mask needs " + std::to_string(order) + " entries");
  const auto heads = get_or(j, "heads", std::vector<std::size_t>{base.block.heads}, where);
  const auto variants = j.contains("variants") ? cmd::variant_list(j, "variants", where)
                                               : std::vector<AttentionVariant>{base.block.variant};
  for (std::size_t h : heads)
    if (h == 0 || base.block.model_dim % h != 0) throw ConfigError(where + ".heads: must divide model_dim");
  if (masks.empty()) throw ConfigError(where + ".masks: empty list");

  const auto start = std::chrono::steady_clock::now();
  CommandReport report;
  report.command = "ablate";
  CsvWriter table({"variant", "heads", "mask", "seed", "parameters", "initial_train_mse", "final_train_mse",
                   "val_mse", "val_mae", "val_smape", "best_step_by_mae", "best_step_by_mse"});
  CsvWriter log(concat({"variant", "heads", "mask", "seed"}, kLogColumns));
  std::map<std::string, double> mean_mse;
  std::map<std::string, std::size_t> params;
  std::size_t selections = 0, agreements = 0;
  for (AttentionVariant v : variants) {
    for (std::size_t h : heads) {
      for (const auto& mask : masks) {
        ModelConfig cfg = base;
        cfg.block.variant = v;
        cfg.block.heads = h;
        cfg.block.mode_mask = mask;
        const std::string cell = to_string(v) + "/h" + std::to_string(h) + "/mask" + mask_str(mask, order);
        double total = 0.0;
        for (std::uint64_t seed : seeds) {
          ForecastTaskSpec t = task;
          t.seed = seed;
          TrainOptions o = train;
          o.seed = seed;
          const TrainResult r = train_forecast(cfg, make_forecast_task(t), o);
          const TrainLogRow& last = r.log.back();
          table.field(to_string(v)).field(h).field(mask_str(mask, order)).field(seed).field(r.parameters);
          table.field(r.initial_train).field(r.final_train).field(last.val_loss).field(last.val_mae);
          table.field(last.val_smape).field(r.best_step_by_mae).field(r.best_step_by_loss).end_row();
          log_rows(log, {to_string(v), std::to_string(h), mask_str(mask, order), std::to_string(seed)}, r);
          report.timing["elapsed_ms"][cell + "/seed" + std::to_string(seed)] = elapsed_ms(r);
          total += r.final_train;
          params[cell] = r.parameters;
          ++selections;
          agreements += r.best_step_by_mae == r.best_step_by_loss;
        }
        mean_mse[cell] = total / static_cast<double>(seeds.size());
        report.results["cells"][cell] = {{"mean_final_train_mse", mean_mse[cell]}, {"parameters", params[cell]}};
      }
      // Ordering: every mode on beats each single mode, which beats none.
      const std::string prefix = to_string(v) + "/h" + std::to_string(h) + "/mask";
      const std::string all(order, '1'), none(order, '0');
      if (!mean_mse.count(prefix + all)) continue;
      std::vector<std::string> singles;
      for (std::size_t i = 0; i < order; ++i) {
        std::string m = none;
        m[i] = '1';
        if (mean_mse.count(prefix + m)) singles.push_back(m);
      }
      if (singles.empty()) continue;
      bool both_best = true, singles_beat_none = true;
      std::string detail = "mean train MSE " + all + "=" + format_double(mean_mse[prefix + all]);
      for (const auto& m : singles) {
        both_best = both_best && mean_mse[prefix + all] < mean_mse[prefix + m];
        detail += ", " + m + "=" + format_double(mean_mse[prefix + m]);
        if (mean_mse.count(prefix + none)) singles_beat_none = singles_beat_none && mean_mse[prefix + m] < mean_mse[prefix + none];
      }
      report.check(prefix + "/all-modes-beat-single-modes", both_best, detail);
      if (mean_mse.count(prefix + none))
        report.check(prefix + "/single-modes-beat-no-attention", singles_beat_none,
                     detail + ", " + none + "=" + format_double(mean_mse[prefix + none]));
    }
  }
  const std::size_t first = params.begin()->second;
  const bool equal_params =
      std::all_of(params.begin(), params.end(), [&](const auto& p) { return p.second == first; });
  report.check("equal-parameter-counts", equal_params, std::to_string(first) + " parameters in the first cell");
  // All modes masked off must collapse to the residual MLP.
  double mlp_err = 0.0;
  for (AttentionVariant v : variants) {
    HOTBlockConfig cfg = base.block;
    cfg.variant = v;
    cfg.pre_norm = false;
    cfg.mode_mask.assign(order, false);
    std::mt19937_64 rng(seeds.front());
    const HOTBlockWeights w = HOTBlockWeights::glorot(cfg, rng);
    std::vector<std::size_t> dims = cfg.dims;
    dims.push_back(cfg.model_dim);
    DenseTensor x{Shape(dims)};
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& e : x.values()) e = normal(rng);
    mlp_err = std::max(mlp_err, max_abs_diff(hot_block_forward(x, cfg, w), residual_mlp_reference(x, cfg, w)));
  }
  report.check("all-off-equals-residual-mlp", mlp_err <= 1e-12, "max |error| " + format_double(mlp_err));
  report.results["selection_rules_agree"] = {{"runs", selections}, {"same_best_step", agreements}};
  cmd::emit(report, opt, "ablate.csv", table);
  cmd::emit(report, opt, "ablate_log.csv", log);
  report.timing["runtime_s"] = cmd::seconds_since(start);
  return report;
}

CommandReport run_train(const json& j, const RunOptions& opt) {
  const std::string where = "train";
  cmd::check_keys(j, {"task", "task_spec", "model", "train", "checkpoint"}, where);
  const auto seed = cmd::seed_list(j, opt, 1, where).front();
  const auto task = get_or<std::string>(j, "task", "forecast", where);
  TrainOptions train = parse_train(j.value("train", json()), where + ".train");
  train.seed = seed;
  const bool checkpoint = get_or(j, "checkpoint", true, where);
  CommandReport report;
  report.command = "train";
  const auto start = std::chrono::steady_clock::now();
  TrainResult r;
  ModelConfig cfg;
  if (task == "forecast") {
    ForecastTaskSpec spec = parse_forecast(j.value("task_spec", json()), where + ".task_spec");
    spec.seed = seed;
    cfg = j.contains("model") ? model_config_from_json(j.at("model")) : default_forecast_model(spec);
    check_model(cfg, {spec.variates, spec.lookback}, TaskKind::kForecast, where);
    r = train_forecast(cfg, make_forecast_task(spec), train);
  } else if (task == "voxel") {
    VoxelTaskSpec spec = parse_voxel(j.value("task_spec", json()), where + ".task_spec");
    spec.seed = seed;
    cfg = j.contains("model") ? model_config_from_json(j.at("model")) : default_voxel_model(spec);
    check_model(cfg, {spec.side, spec.side, spec.side}, TaskKind::kClassify, where);
    r = train_classifier(cfg, make_voxel_task(spec), train);
  } else {
    throw ConfigError(where + ".task: 'forecast' or 'voxel', got '" + task + "'");
  }
  CsvWriter log(kLogColumns);
  log_rows(log, {}, r);
  cmd::emit(report, opt, "train_log.csv", log);
  if (checkpoint) {
    save_checkpoint((opt.out_dir / "checkpoint").string(), cfg, r.weights);
    report.files.push_back("checkpoint/manifest.json");
  }
  const TrainLogRow& last = r.log.back();
  report.check("loss-finite", std::isfinite(r.final_train), "final train loss " + format_double(r.final_train));
  report.check("loss-decreased", r.final_train < r.initial_train,
               format_double(r.initial_train) + " -> " + format_double(r.final_train));
  report.results = {{"task", task},
                    {"parameters", r.parameters},
                    {"initial_train_loss", r.initial_train},
                    {"final_train_loss", r.final_train},
                    {"final_val_loss", last.val_loss},
                    {task == "voxel" ? "best_step_by_error_rate" : "best_step_by_mae", r.best_step_by_mae},
                    {"best_step_by_loss", r.best_step_by_loss}};
  if (task == "voxel") {
    report.results["final_val_acc"] = last.val_acc;
    report.results["final_val_auc"] = last.val_auc;
  } else {
    report.results["final_val_mae"] = last.val_mae;
    report.results["final_val_smape"] = last.val_smape;
  }
  report.timing["runtime_s"] = cmd::seconds_since(start);
  report.timing["elapsed_ms"] = elapsed_ms(r);
  return report;
}

}  // namespace hot
