#include "hot/ad_model.hpp"

#include <cmath>
#include <optional>

namespace hot::ad {

namespace {

// Per-group attention for the full variants: tokens sharing their indices on
// masked-off modes form one group; each group is a T x D_H matrix.
template <typename Attend>
Var over_token_groups(Var q, Var k, Var v, const AttentionOptions& opt, Attend attend) {
  const Shape& s = v.shape();
  const std::size_t order = s.order() - 1;
  std::vector<std::size_t> perm, permuted_dims;
  std::size_t groups = 1, tokens = 1;
  for (std::size_t m = 0; m < order; ++m)
    if (!mode_enabled(opt, m)) {
      perm.push_back(m);
      groups *= s[m];
    }
  for (std::size_t m = 0; m < order; ++m)
    if (mode_enabled(opt, m)) {
      perm.push_back(m);
      tokens *= s[m];
    }
  if (groups == s.numel() / s[order]) return v;  // every mode disabled
  perm.push_back(order);
  for (std::size_t m : perm) permuted_dims.push_back(s[m]);
  bool identity = true;
  for (std::size_t m = 0; m <= order; ++m) identity = identity && perm[m] == m;

  const std::size_t dh = s[order], qd = q.shape()[order];
  auto grouped = [&](Var t, std::size_t width) {
    return reshape(identity ? t : permute(t, perm), Shape{groups, tokens, width});
  };
  const Var qg = grouped(q, qd), kg = grouped(k, qd), vg = grouped(v, dh);
  Var out;
  if (groups == 1) {
    out = reshape(attend(select(qg, 0), select(kg, 0), select(vg, 0)), Shape(permuted_dims));
  } else {
    std::vector<Var> parts;
    for (std::size_t g = 0; g < groups; ++g) parts.push_back(attend(select(qg, g), select(kg, g), select(vg, g)));
    out = reshape(stack(parts), Shape(permuted_dims));
  }
  if (identity) return out;
  std::vector<std::size_t> inverse(order + 1);
  for (std::size_t m = 0; m <= order; ++m) inverse[perm[m]] = m;
  return permute(out, inverse);
}

Var kernel_apply(Var v, Var qt, Var kt, std::size_t mode, const FeatureMap& fm, double score_scale,
                 KernelDiagnostics* diag) {
  Tape& tape = *v.tape;
  const double pre = std::sqrt(score_scale);
  const Var sq = scale(qt, pre), sk = scale(kt, pre);
  const FeatureShifts shift = feature_shifts(fm, sq.value(), sk.value());
  const Var pq = feature_map(sq, fm, shift.query);
  const Var pk = feature_map(sk, fm, shift.key);
  const Var reduced = mode_product(v, transpose(pk), mode);
  const Var expanded = mode_product(reduced, pq, mode);
  const std::size_t n = qt.shape()[0];
  const Var ones = tape.constant(DenseTensor(Shape{n, 1}, 1.0));
  const Var key_sum = matmul(transpose(pk), ones);
  const Var z = reshape(matmul(pq, key_sum), Shape{n});
  return scale_mode(expanded, floor_reciprocal(z, kNormalizerFloor, diag), mode);
}

}  // namespace

BlockVars bind_block(Tape& tape, const HOTBlockWeights& w) {
  BlockVars b;
  for (const auto& h : w.attention.heads()) {
    b.heads.push_back({tape.leaf(h.query), tape.leaf(h.key), tape.leaf(h.value), tape.leaf(h.output)});
  }
  b.norm1_gamma = tape.leaf(w.norm1.gamma);
  b.norm1_beta = tape.leaf(w.norm1.beta);
  b.ffn_in_weight = tape.leaf(w.ffn_in.weight);
  b.ffn_in_bias = tape.leaf(w.ffn_in.bias);
  b.ffn_out_weight = tape.leaf(w.ffn_out.weight);
  b.ffn_out_bias = tape.leaf(w.ffn_out.bias);
  b.norm2_gamma = tape.leaf(w.norm2.gamma);
  b.norm2_beta = tape.leaf(w.norm2.beta);
  return b;
}

std::vector<Var> block_params(const BlockVars& b) {
  std::vector<Var> out;
  for (const auto& h : b.heads) out.insert(out.end(), {h.query, h.key, h.value, h.output});
  out.insert(out.end(), {b.norm1_gamma, b.norm1_beta, b.ffn_in_weight, b.ffn_in_bias, b.ffn_out_weight,
                         b.ffn_out_bias, b.norm2_gamma, b.norm2_beta});
  return out;
}

ModelVars bind_model(Tape& tape, const ModelWeights& w) {
  ModelVars m;
  for (const auto& e : w.embed) {
    m.embed_weight.push_back(tape.leaf(e.weight));
    m.embed_bias.push_back(tape.leaf(e.bias));
    m.params.push_back(m.embed_weight.back());
    m.params.push_back(m.embed_bias.back());
  }
  for (const auto& b : w.blocks) {
    m.blocks.push_back(bind_block(tape, b));
    const auto p = block_params(m.blocks.back());
    m.params.insert(m.params.end(), p.begin(), p.end());
  }
  m.head_weight = tape.leaf(w.head.weight);
  m.head_bias = tape.leaf(w.head.bias);
  m.params.push_back(m.head_weight);
  m.params.push_back(m.head_bias);
  return m;
}

Var attention(Var x, const std::vector<HeadVars>& heads, AttentionVariant variant, const FeatureMap* fm,
              const AttentionOptions& opt) {
  const std::size_t order = x.shape().order() - 1;
  if (!opt.mode_mask.empty() && opt.mode_mask.size() != order) {
    throw std::invalid_argument("attention: mode mask length");
  }
  const bool linear = variant == AttentionVariant::kFullLinear || variant == AttentionVariant::kFactoredLinear;
  if (linear && !fm) throw std::invalid_argument("attention: linear variant needs a feature map");
  std::optional<Var> y;
  for (const auto& h : heads) {
    Var q = project_last(x, h.query), k = project_last(x, h.key);
    const Var v = project_last(x, h.value);
    if (opt.rotary && opt.rotary->any()) {
      q = rotary(q, *opt.rotary);
      k = rotary(k, *opt.rotary);
    }
    const double sc = opt.score_scale.value_or(default_score_scale(q.shape()[order]));
    Var p = v;
    switch (variant) {
      case AttentionVariant::kFactoredSoftmax:
        for (std::size_t i = 0; i < order; ++i) {
          if (!mode_enabled(opt, i)) continue;
          const Var s = softmax_rows(
              scale(matmul_nt(pool_except(q, i, opt.pooling), pool_except(k, i, opt.pooling)), sc));
          p = mode_product(p, s, i);
        }
        break;
      case AttentionVariant::kFactoredLinear:
        for (std::size_t i = 0; i < order; ++i) {
          if (!mode_enabled(opt, i)) continue;
          p = kernel_apply(p, pool_except(q, i, opt.pooling), pool_except(k, i, opt.pooling), i, *fm, sc,
                           opt.diagnostics);
        }
        break;
      case AttentionVariant::kFullSoftmax:
        p = over_token_groups(q, k, v, opt, [sc](Var qg, Var kg, Var vg) {
          return matmul(softmax_rows(scale(matmul_nt(qg, kg), sc)), vg);
        });
        break;
      case AttentionVariant::kFullLinear:
        p = over_token_groups(q, k, v, opt, [&](Var qg, Var kg, Var vg) {
          return kernel_apply(vg, qg, kg, 0, *fm, sc, opt.diagnostics);
        });
        break;
    }
    const Var out = project_last(p, h.output);
    y = y ? add(*y, out) : out;
  }
  return *y;
}

Var block_forward(Var x, const HOTBlockConfig& cfg, const BlockVars& w, bool batched) {
  cfg.validate();
  const AttentionOptions opt = cfg.attention_options();
  std::optional<FeatureMap> fm;
  if (cfg.linear()) fm.emplace(cfg.feature_map());
  auto attend = [&](Var t) {
    if (!batched) return attention(t, w.heads, cfg.variant, fm ? &*fm : nullptr, opt);
    std::vector<Var> parts;
    for (std::size_t b = 0; b < t.shape()[0]; ++b)
      parts.push_back(attention(select(t, b), w.heads, cfg.variant, fm ? &*fm : nullptr, opt));
    return stack(parts);
  };
  auto ffn = [&](Var t) {
    return affine_last(gelu(affine_last(t, w.ffn_in_weight, w.ffn_in_bias)), w.ffn_out_weight, w.ffn_out_bias);
  };
  if (cfg.pre_norm) {
    const Var y1 = add(x, attend(layer_norm(x, w.norm1_gamma, w.norm1_beta, cfg.ln_eps)));
    return add(y1, ffn(layer_norm(y1, w.norm2_gamma, w.norm2_beta, cfg.ln_eps)));
  }
  const Var y1 = layer_norm(add(x, attend(x)), w.norm1_gamma, w.norm1_beta, cfg.ln_eps);
  return layer_norm(add(y1, ffn(y1)), w.norm2_gamma, w.norm2_beta, cfg.ln_eps);
}

Var model_forward(Tape& tape, const DenseTensor& raw, const ModelConfig& cfg, const ModelVars& w) {
  const std::size_t batch = raw.dim(0);
  Var t = tape.constant(raw);
  for (std::size_t s = 0; s < cfg.embed.stages.size(); ++s) {
    std::vector<std::size_t> patch{1};
    patch.insert(patch.end(), cfg.embed.stages[s].begin(), cfg.embed.stages[s].end());
    t = affine_last(patchify(t, patch), w.embed_weight[s], w.embed_bias[s]);
  }
  for (const auto& b : w.blocks) t = block_forward(t, cfg.block, b, true);
  const std::size_t d = cfg.block.model_dim;
  const std::size_t tokens = t.value().numel() / (batch * d);
  Var pooled;
  if (cfg.head.pooling == HeadPooling::kMean) {
    const Var avg = tape.constant(DenseTensor(Shape{1, tokens}, 1.0 / static_cast<double>(tokens)));
    pooled = reshape(mode_product(reshape(t, Shape{batch, tokens, d}), avg, 1), Shape{batch, d});
  } else {
    pooled = reshape(t, Shape{batch, tokens * d});
  }
  return affine_last(pooled, w.head_weight, w.head_bias);
}

}  // namespace hot::ad
