#pragma once

#include <vector>

#include "hot/autodiff.hpp"
#include "hot/layer.hpp"

namespace hot::ad {

struct HeadVars {
  Var query, key, value, output;
};

struct BlockVars {
  std::vector<HeadVars> heads;
  Var norm1_gamma, norm1_beta;
  Var ffn_in_weight, ffn_in_bias, ffn_out_weight, ffn_out_bias;
  Var norm2_gamma, norm2_beta;
};

/// Leaves for every model parameter, in named_parameters() order.
struct ModelVars {
  std::vector<Var> params;
  std::vector<Var> embed_weight, embed_bias;
  std::vector<BlockVars> blocks;
  Var head_weight, head_bias;
};

BlockVars bind_block(Tape& tape, const HOTBlockWeights& w);
ModelVars bind_model(Tape& tape, const ModelWeights& w);
/// Params of a block as a flat list (named_parameters(HOTBlockWeights&) order).
std::vector<Var> block_params(const BlockVars& b);

/// Differentiable counterpart of attention_forward for one sample.
Var attention(Var x, const std::vector<HeadVars>& heads, AttentionVariant variant, const FeatureMap* fm,
              const AttentionOptions& opt);

/// One HOT block. With `batched` the leading mode of x is a batch mode that
/// never attends: attention runs per sample, everything else is token-wise.
Var block_forward(Var x, const HOTBlockConfig& cfg, const BlockVars& w, bool batched = false);

/// Batched model: raw is (B, input dims..., channels); returns B x outputs.
Var model_forward(Tape& tape, const DenseTensor& raw, const ModelConfig& cfg, const ModelVars& w);

}  // namespace hot::ad
