#include "hot/config_json.hpp"

#include <algorithm>

namespace hot {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

Pooling parse_pooling(const std::string& s) {
  if (s == "sum") return Pooling::kSum;
  if (s == "mean") return Pooling::kMean;
  throw ConfigError("pooling must be 'sum' or 'mean', got '" + s + "'");
}

std::string to_string(Pooling p) { return p == Pooling::kSum ? "sum" : "mean"; }

ordered_json block_config_to_json(const HOTBlockConfig& cfg) {
  ordered_json j;
  j["model_dim"] = cfg.model_dim;
  j["heads"] = cfg.heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["variant"] = to_string(cfg.variant);
  j["mode_mask"] = cfg.mode_mask;
  j["features"] = cfg.features;
  j["feature_seed"] = cfg.feature_seed;
  j["ln_eps"] = cfg.ln_eps;
  j["pre_norm"] = cfg.pre_norm;
  j["pooling"] = to_string(cfg.pooling);
  if (cfg.rotary) j["rotary"] = {{"modes", cfg.rotary->modes}, {"base", cfg.rotary->base}};
  return j;
}

void block_config_from_json(const json& j, HOTBlockConfig& cfg, const std::string& where) {
  reject_unknown_keys(j, {"model_dim", "heads", "ffn_dim", "variant", "mode_mask", "features", "feature_seed",
                          "ln_eps", "pre_norm", "pooling", "rotary"},
                      where);
  cfg.model_dim = get_or(j, "model_dim", cfg.model_dim, where);
  cfg.heads = get_or(j, "heads", cfg.heads, where);
  cfg.ffn_dim = get_or(j, "ffn_dim", cfg.ffn_dim, where);
  try {
    cfg.variant = parse_variant(get_or<std::string>(j, "variant", to_string(cfg.variant), where));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".variant: " + e.what());
  }
  cfg.mode_mask = get_or(j, "mode_mask", cfg.mode_mask, where);
  cfg.features = get_or(j, "features", cfg.features, where);
  cfg.feature_seed = get_or(j, "feature_seed", cfg.feature_seed, where);
  cfg.ln_eps = get_or(j, "ln_eps", cfg.ln_eps, where);
  cfg.pre_norm = get_or(j, "pre_norm", cfg.pre_norm, where);
  cfg.pooling = parse_pooling(get_or<std::string>(j, "pooling", to_string(cfg.pooling), where));
  if (j.contains("rotary") && !j.at("rotary").is_null()) {
    const json& r = j.at("rotary");
    reject_unknown_keys(r, {"modes", "base"}, where + ".rotary");
    RotaryConfig rc;
    rc.modes = get_required<std::vector<bool>>(r, "modes", where + ".rotary");
    rc.base = get_or(r, "base", rc.base, where + ".rotary");
    cfg.rotary = rc;
  }
}

ordered_json model_config_to_json(const ModelConfig& cfg) {
  ordered_json j;
  j["embed"] = {{"input_dims", cfg.embed.input_dims},
                {"channels", cfg.embed.channels},
                {"stages", cfg.embed.stages}};
  j["block"] = block_config_to_json(cfg.block);
  j["blocks"] = cfg.blocks;
  j["head"] = {{"pooling", cfg.head.pooling == HeadPooling::kMean ? "mean" : "flatten"},
               {"task", cfg.head.task == TaskKind::kForecast ? "forecast" : "classify"},
               {"horizon", cfg.head.horizon},
               {"variates", cfg.head.variates},
               {"classes", cfg.head.classes},
               {"flatten_cap", cfg.head.flatten_cap}};
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown_keys(j, {"embed", "block", "blocks", "head"}, "model");
  ModelConfig cfg;
  const json& e = j.contains("embed") ? j.at("embed") : throw ConfigError("model: missing 'embed'");
  reject_unknown_keys(e, {"input_dims", "channels", "stages"}, "model.embed");
  cfg.embed.input_dims = get_required<std::vector<std::size_t>>(e, "input_dims", "model.embed");
  cfg.embed.channels = get_or(e, "channels", cfg.embed.channels, "model.embed");
  cfg.embed.stages = get_or(e, "stages",
                            std::vector<std::vector<std::size_t>>{
                                std::vector<std::size_t>(cfg.embed.input_dims.size(), 1)},
                            "model.embed");
  if (j.contains("block")) block_config_from_json(j.at("block"), cfg.block, "model.block");
  cfg.blocks = get_or(j, "blocks", cfg.blocks, "model");
  if (j.contains("head")) {
    const json& h = j.at("head");
    reject_unknown_keys(h, {"pooling", "task", "horizon", "variates", "classes", "flatten_cap"}, "model.head");
    const auto pooling = get_or<std::string>(h, "pooling", "mean", "model.head");
    if (pooling != "mean" && pooling != "flatten") throw ConfigError("model.head.pooling: '" + pooling + "'");
    cfg.head.pooling = pooling == "mean" ? HeadPooling::kMean : HeadPooling::kFlatten;
    const auto task = get_or<std::string>(h, "task", "forecast", "model.head");
    if (task != "forecast" && task != "classify") throw ConfigError("model.head.task: '" + task + "'");
    cfg.head.task = task == "forecast" ? TaskKind::kForecast : TaskKind::kClassify;
    cfg.head.horizon = get_or(h, "horizon", cfg.head.horizon, "model.head");
    cfg.head.variates = get_or(h, "variates", cfg.head.variates, "model.head");
    cfg.head.classes = get_or(h, "classes", cfg.head.classes, "model.head");
    cfg.head.flatten_cap = get_or(h, "flatten_cap", cfg.head.flatten_cap, "model.head");
  }
  try {
    cfg.embed.validate();
    cfg.block.dims = cfg.embed.token_dims();
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e2) {
    throw ConfigError(e2.what());
  }
  return cfg;
}

}  // namespace hot
