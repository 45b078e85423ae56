#include "hot/layer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "hot/config_json.hpp"
#include "hot/linalg.hpp"
#include "hot/tensor_io.hpp"

namespace hot {

namespace {

void fill_glorot(DenseTensor& m, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& v : m.values()) v = u(rng);
}

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (std::size_t x : v) p *= x;
  return p;
}

}  // namespace

bool HOTBlockConfig::linear() const {
  return variant == AttentionVariant::kFullLinear || variant == AttentionVariant::kFactoredLinear;
}

void HOTBlockConfig::validate() const {
  if (dims.empty()) throw std::invalid_argument("block: need at least one positional mode");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("block: zero-length positional mode");
  if (heads == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("block: model dim " + std::to_string(model_dim) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  if (!mode_mask.empty() && mode_mask.size() != dims.size()) {
    throw std::invalid_argument("block: mode mask length " + std::to_string(mode_mask.size()) +
                                " for order " + std::to_string(dims.size()));
  }
  if (rotary) {
    if (rotary->modes.size() != dims.size()) throw std::invalid_argument("block: rotary flag count");
    if (rotary->any() && head_dim() % 2 != 0) throw std::invalid_argument("block: rotary needs even head dim");
  }
  if (linear() && features == 0) throw std::invalid_argument("block: feature count must be >= 1");
  if (!(ln_eps > 0.0)) throw std::invalid_argument("block: layer-norm epsilon must be positive");
}

AttentionOptions HOTBlockConfig::attention_options() const {
  AttentionOptions opt;
  opt.pooling = pooling;
  opt.mode_mask = mode_mask;
  opt.rotary = rotary;
  return opt;
}

FeatureMap HOTBlockConfig::feature_map() const {
  return FeatureMap({features, feature_seed, head_dim()});
}

Affine Affine::glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Affine a{DenseTensor(Shape{in, out}), DenseTensor(Shape{out})};
  fill_glorot(a.weight, rng);
  return a;
}

LayerNormWeights LayerNormWeights::identity(std::size_t d) {
  return {DenseTensor(Shape{d}, 1.0), DenseTensor(Shape{d})};
}

HOTBlockWeights HOTBlockWeights::glorot(const HOTBlockConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  HOTBlockWeights w;
  w.attention = AttentionWeights::glorot(cfg.model_dim, cfg.heads, rng);
  w.norm1 = LayerNormWeights::identity(cfg.model_dim);
  w.norm2 = LayerNormWeights::identity(cfg.model_dim);
  w.ffn_in = Affine::glorot(cfg.model_dim, cfg.ffn_width(), rng);
  w.ffn_out = Affine::glorot(cfg.ffn_width(), cfg.model_dim, rng);
  return w;
}

DenseTensor layer_norm(const DenseTensor& x, const LayerNormWeights& ln, double eps) {
  const std::size_t d = x.dim(x.order() - 1);
  if (ln.gamma.numel() != d || ln.beta.numel() != d) throw std::invalid_argument("layer_norm: width");
  DenseTensor out(x.shape());
  for (std::size_t r = 0; r < x.numel() / d; ++r) {
    const double* in = x.data() + r * d;
    double* o = out.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) o[c] = (in[c] - mean) * inv * ln.gamma[c] + ln.beta[c];
  }
  return out;
}

DenseTensor gelu(const DenseTensor& x) {
  DenseTensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
  return out;
}

DenseTensor affine_last(const DenseTensor& x, const Affine& a) {
  DenseTensor y = project_last(x, a.weight);
  const std::size_t out = a.out();
  for (std::size_t r = 0; r < y.numel() / out; ++r)
    for (std::size_t c = 0; c < out; ++c) y[r * out + c] += a.bias[c];
  return y;
}

DenseTensor hot_block_forward(const DenseTensor& x, const HOTBlockConfig& cfg, const HOTBlockWeights& w) {
  cfg.validate();
  std::vector<std::size_t> expected = cfg.dims;
  expected.push_back(cfg.model_dim);
  if (!(x.shape() == Shape(expected))) {
    throw std::invalid_argument("block: input " + x.shape().str() + " expected " + Shape(expected).str());
  }
  const AttentionOptions opt = cfg.attention_options();
  std::optional<FeatureMap> fm;
  if (cfg.linear()) fm.emplace(cfg.feature_map());
  auto attend = [&](const DenseTensor& t) {
    return attention_forward(cfg.variant, t, w.attention, fm ? &*fm : nullptr, opt);
  };
  auto ffn = [&](const DenseTensor& t) { return affine_last(gelu(affine_last(t, w.ffn_in)), w.ffn_out); };
  if (cfg.pre_norm) {
    const DenseTensor y1 = add(x, attend(layer_norm(x, w.norm1, cfg.ln_eps)));
    return add(y1, ffn(layer_norm(y1, w.norm2, cfg.ln_eps)));
  }
  const DenseTensor y1 = layer_norm(add(x, attend(x)), w.norm1, cfg.ln_eps);
  return layer_norm(add(y1, ffn(y1)), w.norm2, cfg.ln_eps);
}

DenseTensor patchify(const DenseTensor& x, const std::vector<std::size_t>& patch) {
  const std::size_t k = x.order() - 1;
  if (patch.size() != k) throw std::invalid_argument("patchify: patch sizes for " + std::to_string(k) + " modes");
  std::vector<std::size_t> out_dims(k), in_dims(x.shape().dims().begin(), x.shape().dims().end());
  std::size_t offsets = 1;
  for (std::size_t m = 0; m < k; ++m) {
    if (patch[m] == 0 || in_dims[m] % patch[m] != 0) {
      throw std::invalid_argument("patchify: mode " + std::to_string(m) + " length " +
                                  std::to_string(in_dims[m]) + " not divisible by patch " +
                                  std::to_string(patch[m]));
    }
    out_dims[m] = in_dims[m] / patch[m];
    offsets *= patch[m];
  }
  const std::size_t c = in_dims[k];
  out_dims.push_back(offsets * c);
  DenseTensor out{Shape(out_dims)};
  IndexCounter it(x.shape());
  const Shape& os = out.shape();
  std::vector<std::size_t> oi(k + 1);
  do {
    const auto& idx = it.index();
    std::size_t off = 0;
    for (std::size_t m = 0; m < k; ++m) {
      oi[m] = idx[m] / patch[m];
      off = off * patch[m] + idx[m] % patch[m];
    }
    oi[k] = off * c + idx[k];
    std::size_t flat = 0;
    for (std::size_t m = 0; m <= k; ++m) flat = flat * os[m] + oi[m];
    out[flat] = x.at(idx);
  } while (it.next());
  return out;
}

std::vector<std::size_t> PatchEmbedConfig::token_dims() const {
  std::vector<std::size_t> d = input_dims;
  for (const auto& stage : stages)
    for (std::size_t m = 0; m < d.size(); ++m) d[m] /= stage[m];
  return d;
}

void PatchEmbedConfig::validate() const {
  if (input_dims.empty()) throw std::invalid_argument("embed: no positional modes");
  if (channels == 0) throw std::invalid_argument("embed: zero channels");
  if (stages.empty()) throw std::invalid_argument("embed: need at least one stage");
  std::vector<std::size_t> d = input_dims;
  for (const auto& stage : stages) {
    if (stage.size() != d.size()) throw std::invalid_argument("embed: stage patch count");
    for (std::size_t m = 0; m < d.size(); ++m) {
      if (stage[m] == 0 || d[m] % stage[m] != 0) {
        throw std::invalid_argument("embed: mode " + std::to_string(m) + " length " + std::to_string(d[m]) +
                                    " not divisible by patch " + std::to_string(stage[m]));
      }
      d[m] /= stage[m];
    }
  }
}

std::vector<std::size_t> HeadConfig::output_shape() const {
  if (task == TaskKind::kForecast) return {horizon, variates};
  return {classes};
}

std::size_t HeadConfig::outputs() const { return product(output_shape()); }

void ModelConfig::validate() const {
  embed.validate();
  if (block.dims != embed.token_dims()) throw std::invalid_argument("model: block dims differ from token dims");
  block.validate();
  if (blocks == 0) throw std::invalid_argument("model: need at least one block");
  if (head.outputs() == 0) throw std::invalid_argument("model: head has no outputs");
  if (head.pooling == HeadPooling::kFlatten && head_inputs() > head.flatten_cap) {
    throw std::invalid_argument("model: flatten head input " + std::to_string(head_inputs()) +
                                " above cap " + std::to_string(head.flatten_cap));
  }
}

std::size_t ModelConfig::head_inputs() const {
  const std::size_t d = block.model_dim;
  return head.pooling == HeadPooling::kMean ? d : product(block.dims) * d;
}

ModelWeights ModelWeights::glorot(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ModelWeights w;
  std::size_t in = cfg.embed.channels;
  for (const auto& stage : cfg.embed.stages) {
    w.embed.push_back(Affine::glorot(in * product(stage), cfg.block.model_dim, rng));
    in = cfg.block.model_dim;
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) w.blocks.push_back(HOTBlockWeights::glorot(cfg.block, rng));
  w.head = Affine::glorot(cfg.head_inputs(), cfg.head.outputs(), rng);
  return w;
}

DenseTensor patch_embed(const DenseTensor& raw, const PatchEmbedConfig& cfg, const std::vector<Affine>& w) {
  cfg.validate();
  std::vector<std::size_t> expected = cfg.input_dims;
  expected.push_back(cfg.channels);
  if (!(raw.shape() == Shape(expected))) {
    throw std::invalid_argument("embed: input " + raw.shape().str() + " expected " + Shape(expected).str());
  }
  if (w.size() != cfg.stages.size()) throw std::invalid_argument("embed: weight count differs from stages");
  DenseTensor t = raw;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) t = affine_last(patchify(t, cfg.stages[s]), w[s]);
  return t;
}

DenseTensor model_forward(const DenseTensor& raw, const ModelConfig& cfg, const ModelWeights& w) {
  cfg.validate();
  DenseTensor t = patch_embed(raw, cfg.embed, w.embed);
  for (const auto& b : w.blocks) t = hot_block_forward(t, cfg.block, b);
  const std::size_t d = cfg.block.model_dim;
  DenseTensor pooled;
  if (cfg.head.pooling == HeadPooling::kMean) {
    pooled = DenseTensor(Shape{1, d});
    const std::size_t tokens = t.numel() / d;
    for (std::size_t p = 0; p < tokens; ++p)
      for (std::size_t c = 0; c < d; ++c) pooled[c] += t[p * d + c];
    pooled = scaled(pooled, 1.0 / static_cast<double>(tokens));
  } else {
    pooled = t.reshaped(Shape{1, t.numel()});
  }
  return affine_last(pooled, w.head).reshaped(Shape(cfg.head.output_shape()));
}

std::vector<NamedParameter> named_parameters(HOTBlockWeights& w, const std::string& prefix) {
  std::vector<NamedParameter> out;
  for (std::size_t h = 0; h < w.attention.head_count(); ++h) {
    HeadWeights& hw = w.attention.head(h);
    const std::string p = prefix + "attn.h" + std::to_string(h) + ".";
    out.push_back({p + "query", &hw.query});
    out.push_back({p + "key", &hw.key});
    out.push_back({p + "value", &hw.value});
    out.push_back({p + "output", &hw.output});
  }
  out.push_back({prefix + "norm1.gamma", &w.norm1.gamma});
  out.push_back({prefix + "norm1.beta", &w.norm1.beta});
  out.push_back({prefix + "ffn_in.weight", &w.ffn_in.weight});
  out.push_back({prefix + "ffn_in.bias", &w.ffn_in.bias});
  out.push_back({prefix + "ffn_out.weight", &w.ffn_out.weight});
  out.push_back({prefix + "ffn_out.bias", &w.ffn_out.bias});
  out.push_back({prefix + "norm2.gamma", &w.norm2.gamma});
  out.push_back({prefix + "norm2.beta", &w.norm2.beta});
  return out;
}

std::vector<NamedParameter> named_parameters(ModelWeights& w) {
  std::vector<NamedParameter> out;
  for (std::size_t s = 0; s < w.embed.size(); ++s) {
    out.push_back({"embed." + std::to_string(s) + ".weight", &w.embed[s].weight});
    out.push_back({"embed." + std::to_string(s) + ".bias", &w.embed[s].bias});
  }
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    auto block = named_parameters(w.blocks[b], "blocks." + std::to_string(b) + ".");
    out.insert(out.end(), block.begin(), block.end());
  }
  out.push_back({"head.weight", &w.head.weight});
  out.push_back({"head.bias", &w.head.bias});
  return out;
}

std::vector<ConstNamedParameter> named_parameters(const ModelWeights& w) {
  std::vector<ConstNamedParameter> out;
  for (const auto& p : named_parameters(const_cast<ModelWeights&>(w))) out.push_back({p.name, p.tensor});
  return out;
}

std::size_t parameter_count(const ModelWeights& w) {
  std::size_t n = 0;
  for (const auto& p : named_parameters(w)) n += p.tensor->numel();
  return n;
}

void save_checkpoint(const std::string& dir, const ModelConfig& cfg, const ModelWeights& w) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["config"] = model_config_to_json(cfg);
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (const auto& p : named_parameters(w)) {
    const std::string file = p.name + ".hot";
    write_tensor((std::filesystem::path(dir) / file).string(), *p.tensor);
    files[p.name] = file;
  }
  manifest["parameters"] = files;
  std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: no manifest in " + dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("checkpoint manifest: ") + e.what());
  }
  reject_unknown_keys(manifest, {"config", "parameters"}, "manifest");
  Checkpoint ck{model_config_from_json(manifest.at("config")), {}};
  std::mt19937_64 rng(0);
  ck.weights = ModelWeights::glorot(ck.config, rng);
  const auto& files = manifest.at("parameters");
  auto params = named_parameters(ck.weights);
  if (files.size() != params.size()) throw ConfigError("checkpoint: parameter count differs from config");
  for (auto& p : params) {
    if (!files.contains(p.name)) throw ConfigError("checkpoint: missing parameter " + p.name);
    DenseTensor t = read_tensor((std::filesystem::path(dir) / files.at(p.name).get<std::string>()).string());
    if (!(t.shape() == p.tensor->shape())) {
      throw ConfigError("checkpoint: " + p.name + " has shape " + t.shape().str() + ", config implies " +
                        p.tensor->shape().str());
    }
    *p.tensor = std::move(t);
  }
  return ck;
}

}  // namespace hot
