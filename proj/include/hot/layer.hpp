#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hot/attention.hpp"
#include "hot/rotary.hpp"
#include "hot/tensor.hpp"

namespace hot {

struct HOTBlockConfig {
  std::vector<std::size_t> dims;  // positional N_1..N_k
  std::size_t model_dim = 8;
  std::size_t heads = 1;
  std::size_t ffn_dim = 0;  // 0 means 4 * model_dim
  AttentionVariant variant = AttentionVariant::kFactoredSoftmax;
  std::vector<bool> mode_mask;  // empty: all modes attend
  std::size_t features = 64;
  std::uint64_t feature_seed = 0;
  double ln_eps = 1e-5;
  bool pre_norm = false;
  Pooling pooling = Pooling::kSum;
  std::optional<RotaryConfig> rotary;

  std::size_t order() const { return dims.size(); }
  std::size_t head_dim() const { return model_dim / heads; }
  std::size_t ffn_width() const { return ffn_dim == 0 ? 4 * model_dim : ffn_dim; }
  bool linear() const;
  void validate() const;
  AttentionOptions attention_options() const;
  FeatureMap feature_map() const;
};

struct Affine {
  DenseTensor weight;  // in x out
  DenseTensor bias;    // out

  static Affine glorot(std::size_t in, std::size_t out, std::mt19937_64& rng);
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

struct LayerNormWeights {
  DenseTensor gamma;
  DenseTensor beta;

  static LayerNormWeights identity(std::size_t d);
};

struct HOTBlockWeights {
  AttentionWeights attention;
  LayerNormWeights norm1, norm2;
  Affine ffn_in, ffn_out;

  static HOTBlockWeights glorot(const HOTBlockConfig& cfg, std::mt19937_64& rng);
};

/// Normalises every hidden vector (last mode) and applies gamma/beta.
DenseTensor layer_norm(const DenseTensor& x, const LayerNormWeights& ln, double eps);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
DenseTensor gelu(const DenseTensor& x);
/// x W + b along the last mode.
DenseTensor affine_last(const DenseTensor& x, const Affine& a);

/// Post-norm: Y1 = LN(X + Attn(X)), Y2 = LN(Y1 + FFN(Y1)).
/// Pre-norm:  Y1 = X + Attn(LN(X)), Y2 = Y1 + FFN(LN(Y1)).
DenseTensor hot_block_forward(const DenseTensor& x, const HOTBlockConfig& cfg, const HOTBlockWeights& w);

/// Splits every positional mode into non-overlapping patches of the given size
/// and moves the within-patch offsets into the channel mode
/// (offsets row-major, then the original channel).
DenseTensor patchify(const DenseTensor& x, const std::vector<std::size_t>& patch);

struct PatchEmbedConfig {
  std::vector<std::size_t> input_dims;  // raw positional extents
  std::size_t channels = 1;
  std::vector<std::vector<std::size_t>> stages;  // per-stage patch size per mode

  std::vector<std::size_t> token_dims() const;
  void validate() const;
};

enum class HeadPooling { kMean, kFlatten };
enum class TaskKind { kForecast, kClassify };

struct HeadConfig {
  HeadPooling pooling = HeadPooling::kMean;
  TaskKind task = TaskKind::kForecast;
  std::size_t horizon = 1;   // forecast S
  std::size_t variates = 1;  // forecast N
  std::size_t classes = 2;
  std::size_t flatten_cap = 1 << 20;

  std::vector<std::size_t> output_shape() const;
  std::size_t outputs() const;
};

struct ModelConfig {
  PatchEmbedConfig embed;
  HOTBlockConfig block;  // dims are filled from embed.token_dims()
  std::size_t blocks = 1;
  HeadConfig head;

  void validate() const;
  std::size_t head_inputs() const;
};

struct ModelWeights {
  std::vector<Affine> embed;
  std::vector<HOTBlockWeights> blocks;
  Affine head;

  static ModelWeights glorot(const ModelConfig& cfg, std::mt19937_64& rng);
};

/// Raw positional modes plus channels -> (N_1..N_k, D) tokens.
DenseTensor patch_embed(const DenseTensor& raw, const PatchEmbedConfig& cfg, const std::vector<Affine>& w);

/// patch_embed -> blocks -> pooling head -> affine to S x N or C.
DenseTensor model_forward(const DenseTensor& raw, const ModelConfig& cfg, const ModelWeights& w);

struct NamedParameter {
  std::string name;
  DenseTensor* tensor;
};
struct ConstNamedParameter {
  std::string name;
  const DenseTensor* tensor;
};

/// Stable ordering: embed stages, blocks (attention heads, norms, ffn), head.
std::vector<NamedParameter> named_parameters(ModelWeights& w);
std::vector<ConstNamedParameter> named_parameters(const ModelWeights& w);
std::size_t parameter_count(const ModelWeights& w);
std::vector<NamedParameter> named_parameters(HOTBlockWeights& w, const std::string& prefix = "");

/// One tensor file per parameter plus manifest.json (name -> file, config).
void save_checkpoint(const std::string& dir, const ModelConfig& cfg, const ModelWeights& w);
struct Checkpoint {
  ModelConfig config;
  ModelWeights weights;
};
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace hot
