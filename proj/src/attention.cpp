#include "hot/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hot/linalg.hpp"

namespace hot {

namespace {

void check_input(const DenseTensor& x, const AttentionWeights& w, const char* op) {
  if (w.head_count() == 0) throw std::invalid_argument(std::string(op) + ": no heads");
  if (x.order() < 2 || x.dim(x.order() - 1) != w.model_dim()) {
    throw std::invalid_argument(std::string(op) + ": input " + x.shape().str() +
                                " does not end in model dim " + std::to_string(w.model_dim()));
  }
}

void check_mask(const AttentionOptions& opt, std::size_t positional_modes) {
  if (!opt.mode_mask.empty() && opt.mode_mask.size() != positional_modes) {
    throw std::invalid_argument("attention: mode mask has " + std::to_string(opt.mode_mask.size()) +
                                " entries for " + std::to_string(positional_modes) + " modes");
  }
}

double scale_of(const AttentionOptions& opt, std::size_t head_dim) {
  return opt.score_scale.value_or(default_score_scale(head_dim));
}

struct HeadTensors {
  DenseTensor q, k, v;
};

HeadTensors project_head(const DenseTensor& x, const HeadWeights& hw, const AttentionOptions& opt) {
  HeadTensors t{project_last(x, hw.query), project_last(x, hw.key), project_last(x, hw.value)};
  if (opt.rotary && opt.rotary->any()) {
    t.q = rotary_encode(t.q, *opt.rotary);
    t.k = rotary_encode(t.k, *opt.rotary);
  }
  return t;
}

// Runs `attend(Q_g, K_g, V_g) -> P_g` on every group of tokens that share
// their indices along masked-off modes. Each group is a T x D_H matrix whose
// rows enumerate the enabled modes in row-major order.
template <typename Attend>
DenseTensor over_token_groups(const HeadTensors& h, const AttentionOptions& opt, Attend attend) {
  const std::size_t k = h.v.order() - 1;
  std::vector<std::size_t> perm, enabled_dims;
  std::size_t groups = 1;
  for (std::size_t m = 0; m < k; ++m)
    if (!mode_enabled(opt, m)) {
      perm.push_back(m);
      groups *= h.v.dim(m);
    }
  for (std::size_t m = 0; m < k; ++m)
    if (mode_enabled(opt, m)) {
      perm.push_back(m);
      enabled_dims.push_back(h.v.dim(m));
    }
  if (enabled_dims.empty()) return h.v;
  perm.push_back(k);
  bool identity = true;
  for (std::size_t m = 0; m <= k; ++m) identity = identity && perm[m] == m;

  const std::size_t dh = h.v.dim(k);
  const std::size_t tokens = h.v.numel() / dh / groups;
  auto grouped = [&](const DenseTensor& t) { return identity ? t : permute(t, perm); };
  const DenseTensor q = grouped(h.q), kk = grouped(h.k), v = grouped(h.v);
  const Shape permuted_shape = v.shape();

  DenseTensor out(Shape{groups * tokens, dh});
  const std::size_t qd = q.dim(k);
  for (std::size_t g = 0; g < groups; ++g) {
    auto slice = [&](const DenseTensor& t, std::size_t width) {
      const double* base = t.data() + g * tokens * width;
      return DenseTensor(Shape{tokens, width}, std::span<const double>(base, tokens * width));
    };
    const DenseTensor pg = attend(slice(q, qd), slice(kk, qd), slice(v, dh));
    std::copy(pg.values().begin(), pg.values().end(), out.data() + g * tokens * dh);
  }
  DenseTensor result = out.reshaped(permuted_shape);
  if (identity) return result;
  std::vector<std::size_t> inverse(k + 1);
  for (std::size_t m = 0; m <= k; ++m) inverse[perm[m]] = m;
  return permute(result, inverse);
}

std::vector<double> inverse_normalizer(const DenseTensor& phi_q, const DenseTensor& phi_k,
                                       KernelDiagnostics* diag) {
  const std::size_t features = phi_k.cols();
  std::vector<double> key_sum(features, 0.0);
  for (std::size_t l = 0; l < phi_k.rows(); ++l)
    for (std::size_t m = 0; m < features; ++m) key_sum[m] += phi_k(l, m);
  std::vector<double> inv(phi_q.rows());
  for (std::size_t j = 0; j < phi_q.rows(); ++j) {
    double z = 0.0;
    for (std::size_t m = 0; m < features; ++m) z += phi_q(j, m) * key_sum[m];
    if (diag) ++diag->rows;
    if (!(z >= kNormalizerFloor)) {
      z = kNormalizerFloor;
      if (diag) ++diag->floored;
    }
    inv[j] = 1.0 / z;
  }
  return inv;
}

}  // namespace

AttentionWeights::AttentionWeights(std::vector<HeadWeights> heads) : heads_(std::move(heads)) {
  if (heads_.empty()) throw std::invalid_argument("AttentionWeights: need at least one head");
  const std::size_t d = heads_.front().query.rows();
  const std::size_t dh = heads_.front().query.cols();
  for (const auto& h : heads_) {
    const bool ok = h.query.shape() == Shape{d, dh} && h.key.shape() == Shape{d, dh} &&
                    h.value.shape() == Shape{d, dh} && h.output.shape() == Shape{dh, d};
    if (!ok) throw std::invalid_argument("AttentionWeights: inconsistent head shapes");
  }
}

AttentionWeights AttentionWeights::zeros(std::size_t model_dim, std::size_t heads) {
  if (heads == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("AttentionWeights: model dim " + std::to_string(model_dim) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = model_dim / heads;
  std::vector<HeadWeights> hs;
  for (std::size_t h = 0; h < heads; ++h) {
    hs.push_back({DenseTensor(Shape{model_dim, dh}), DenseTensor(Shape{model_dim, dh}),
                  DenseTensor(Shape{model_dim, dh}), DenseTensor(Shape{dh, model_dim})});
  }
  return AttentionWeights(std::move(hs));
}

AttentionWeights AttentionWeights::glorot(std::size_t model_dim, std::size_t heads,
                                          std::mt19937_64& rng) {
  AttentionWeights w = zeros(model_dim, heads);
  auto fill = [&](DenseTensor& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : m.values()) v = u(rng);
  };
  for (auto& h : w.heads_) {
    fill(h.query);
    fill(h.key);
    fill(h.value);
    fill(h.output);
  }
  return w;
}

FeatureMap::FeatureMap(const FeatureMapSpec& spec) : spec_(spec) {
  if (spec.features == 0) throw std::invalid_argument("FeatureMap: feature count must be >= 1");
  if (spec.input_dim == 0) throw std::invalid_argument("FeatureMap: input dim must be >= 1");
  const std::size_t d = spec.input_dim, m = spec.features;
  omega_ = DenseTensor(Shape{m, d});
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t row = 0;
  while (row < m) {
    std::vector<double> block(d * d);
    for (double& v : block) v = normal(rng);
    // Gram-Schmidt (modified) on the rows of the block.
    for (std::size_t i = 0; i < d; ++i) {
      double* ri = &block[i * d];
      for (std::size_t j = 0; j < i; ++j) {
        const double* rj = &block[j * d];
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += ri[c] * rj[c];
        for (std::size_t c = 0; c < d; ++c) ri[c] -= dot * rj[c];
      }
      double norm = 0.0;
      for (std::size_t c = 0; c < d; ++c) norm += ri[c] * ri[c];
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < d; ++c) ri[c] /= norm;
    }
    for (std::size_t i = 0; i < d && row < m; ++i, ++row) {
      double chi = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double g = normal(rng);
        chi += g * g;
      }
      chi = std::sqrt(chi);
      for (std::size_t c = 0; c < d; ++c) omega_(row, c) = block[i * d + c] * chi;
    }
  }
}

DenseTensor FeatureMap::exponents(const DenseTensor& x) const {
  if (x.order() != 2 || x.cols() != spec_.input_dim) {
    throw std::invalid_argument("FeatureMap: input " + x.shape().str() + " vs dim " +
                                std::to_string(spec_.input_dim));
  }
  const std::size_t n = x.rows(), d = x.cols(), m = spec_.features;
  DenseTensor out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * d;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += xi[c] * xi[c];
    sq *= 0.5;
    for (std::size_t r = 0; r < m; ++r) {
      const double* w = omega_.data() + r * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += w[c] * xi[c];
      out(i, r) = dot - sq;
    }
  }
  return out;
}

DenseTensor FeatureMap::apply(const DenseTensor& x, const std::vector<double>& shift) const {
  DenseTensor out = exponents(x);
  if (!shift.empty() && shift.size() != out.rows())
    throw std::invalid_argument("FeatureMap: shift length " + std::to_string(shift.size()));
  const double norm = 1.0 / std::sqrt(static_cast<double>(spec_.features));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double c = shift.empty() ? 0.0 : shift[i];
    for (std::size_t r = 0; r < out.cols(); ++r) out(i, r) = norm * std::exp(out(i, r) - c);
  }
  return out;
}

FeatureShifts feature_shifts(const FeatureMap& fm, const DenseTensor& q, const DenseTensor& k) {
  const DenseTensor eq = fm.exponents(q), ek = fm.exponents(k);
  const std::size_t m = ek.cols();
  double key = -std::numeric_limits<double>::infinity();
  for (double e : ek.values()) key = std::max(key, e);
  // log of sum_j exp(ek[j,r] - key); -inf where every term underflows
  std::vector<double> log_sum(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < ek.rows(); ++j) s += std::exp(ek(j, r) - key);
    log_sum[r] = std::log(s);
  }
  FeatureShifts out{std::vector<double>(eq.rows()), std::vector<double>(ek.rows(), key)};
  for (std::size_t i = 0; i < eq.rows(); ++i) {
    double c = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) c = std::max(c, eq(i, r) + log_sum[r]);
    out.query[i] = c;
  }
  return out;
}

std::vector<double> FeatureMap::apply(std::span<const double> x) const {
  const DenseTensor row(Shape{1, x.size()}, x);
  const DenseTensor out = apply(row);
  return {out.values().begin(), out.values().end()};
}

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kFullSoftmax: return "full-softmax";
    case AttentionVariant::kFullLinear: return "full-linear";
    case AttentionVariant::kFactoredSoftmax: return "factored-softmax";
    case AttentionVariant::kFactoredLinear: return "factored-linear";
  }
  return "unknown";
}

AttentionVariant parse_variant(const std::string& name) {
  for (AttentionVariant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown attention variant '" + name + "'");
}

double default_score_scale(std::size_t head_dim) {
  return 1.0 / std::sqrt(static_cast<double>(head_dim));
}

bool mode_enabled(const AttentionOptions& opt, std::size_t mode) {
  return opt.mode_mask.empty() || opt.mode_mask[mode];
}

DenseTensor softmax_rows(const DenseTensor& m) {
  if (m.order() != 2) throw std::invalid_argument("softmax_rows: expected a matrix");
  DenseTensor out(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* in = m.data() + i * m.cols();
    double* o = out.data() + i * m.cols();
    const double mx = *std::max_element(in, in + m.cols());
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < m.cols(); ++j) o[j] /= sum;
  }
  return out;
}

DenseTensor project_last(const DenseTensor& x, const DenseTensor& w) {
  const std::size_t d = x.dim(x.order() - 1);
  if (w.order() != 2 || w.rows() != d) {
    throw std::invalid_argument("project_last: " + x.shape().str() + " x " + w.shape().str());
  }
  const DenseTensor flat = x.reshaped(Shape{x.numel() / d, d});
  const DenseTensor y = linalg::matmul(flat, w);
  return y.reshaped(x.shape().with_dim(x.order() - 1, w.cols()));
}

DenseTensor standard_attention(const DenseTensor& x, const AttentionWeights& w,
                               const AttentionOptions& opt) {
  check_input(x, w, "standard_attention");
  if (x.order() != 2) throw std::invalid_argument("standard_attention: expected N x D input");
  const double scale = scale_of(opt, w.head_dim());
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    const DenseTensor s = softmax_rows(scaled(linalg::matmul_nt(h.q, h.k), scale));
    y = add(y, linalg::matmul(linalg::matmul(s, h.v), hw.output));
  }
  return y;
}

DenseTensor standard_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                      const FeatureMap& fm, const AttentionOptions& opt) {
  check_input(x, w, "standard_attention_linear");
  if (x.order() != 2) throw std::invalid_argument("standard_attention_linear: expected N x D input");
  const double pre = std::sqrt(scale_of(opt, w.head_dim()));
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    const DenseTensor sq = scaled(h.q, pre), sk = scaled(h.k, pre);
    const FeatureShifts shift = feature_shifts(fm, sq, sk);
    const DenseTensor phi_q = fm.apply(sq, shift.query);
    const DenseTensor phi_k = fm.apply(sk, shift.key);
    const DenseTensor kv = linalg::matmul(linalg::transpose(phi_k), h.v);  // M x D_H
    DenseTensor out = linalg::matmul(phi_q, kv);
    const std::vector<double> inv = inverse_normalizer(phi_q, phi_k, opt.diagnostics);
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) *= inv[i];
    y = add(y, linalg::matmul(out, hw.output));
  }
  return y;
}

DenseTensor mode_attention_matrix(const DenseTensor& q, const DenseTensor& k, std::size_t mode,
                                  const AttentionOptions& opt) {
  if (!(q.shape() == k.shape())) throw std::invalid_argument("mode_attention_matrix: Q/K shapes differ");
  const std::size_t dh = q.dim(q.order() - 1);
  const DenseTensor qt = pool_except(q, mode, opt.pooling);
  const DenseTensor kt = pool_except(k, mode, opt.pooling);
  return softmax_rows(scaled(linalg::matmul_nt(qt, kt), scale_of(opt, dh)));
}

DenseTensor full_high_order_attention(const DenseTensor& x, const AttentionWeights& w,
                                      const AttentionOptions& opt) {
  check_input(x, w, "full_high_order_attention");
  const std::size_t k = x.order() - 1;
  check_mask(opt, k);
  const std::size_t tokens = x.shape().span_product(0, k);
  if (tokens > opt.oracle_cap) {
    throw OracleCapError("full_high_order_attention: " + std::to_string(tokens) +
                         " tokens exceeds oracle cap " + std::to_string(opt.oracle_cap));
  }
  const double scale = scale_of(opt, w.head_dim());
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    const DenseTensor p = over_token_groups(
        h, opt, [&](const DenseTensor& q, const DenseTensor& kk, const DenseTensor& v) {
          return linalg::matmul(softmax_rows(scaled(linalg::matmul_nt(q, kk), scale)), v);
        });
    y = add(y, project_last(p, hw.output));
  }
  return y;
}

std::vector<KronFactors> factorized_softmax_factors(const DenseTensor& x, const AttentionWeights& w,
                                                    const AttentionOptions& opt) {
  check_input(x, w, "factorized_softmax_factors");
  const std::size_t k = x.order() - 1;
  check_mask(opt, k);
  std::vector<KronFactors> out;
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    std::vector<DenseTensor> factors;
    for (std::size_t i = 0; i < k; ++i) {
      factors.push_back(mode_enabled(opt, i) ? mode_attention_matrix(h.q, h.k, i, opt)
                                                : DenseTensor::identity(x.dim(i)));
    }
    out.emplace_back(std::move(factors));
  }
  return out;
}

DenseTensor factorized_attention_softmax(const DenseTensor& x, const AttentionWeights& w,
                                         const AttentionOptions& opt) {
  check_input(x, w, "factorized_attention_softmax");
  const std::size_t k = x.order() - 1;
  check_mask(opt, k);
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    DenseTensor p = h.v;
    for (std::size_t i = 0; i < k; ++i) {
      if (!mode_enabled(opt, i)) continue;
      p = mode_product(p, mode_attention_matrix(h.q, h.k, i, opt), i);
    }
    y = add(y, project_last(p, hw.output));
  }
  return y;
}

DenseTensor kernel_attention_matrix(const DenseTensor& q_pooled, const DenseTensor& k_pooled,
                                    const FeatureMap& fm, const AttentionOptions& opt) {
  const double pre = std::sqrt(scale_of(opt, q_pooled.cols()));
  const DenseTensor sq = scaled(q_pooled, pre), sk = scaled(k_pooled, pre);
  const FeatureShifts shift = feature_shifts(fm, sq, sk);
  const DenseTensor phi_q = fm.apply(sq, shift.query);
  const DenseTensor phi_k = fm.apply(sk, shift.key);
  const std::vector<double> inv = inverse_normalizer(phi_q, phi_k, nullptr);
  DenseTensor s = linalg::matmul_nt(phi_q, phi_k);
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) *= inv[i];
  return s;
}

DenseTensor kernelized_mode_apply(const DenseTensor& v, const DenseTensor& q_pooled,
                                  const DenseTensor& k_pooled, std::size_t mode,
                                  const FeatureMap& fm, const AttentionOptions& opt) {
  if (mode >= v.order() - 1) throw std::out_of_range("kernelized_mode_apply: mode out of range");
  if (q_pooled.order() != 2 || !(q_pooled.shape() == k_pooled.shape()) ||
      q_pooled.rows() != v.dim(mode)) {
    throw std::invalid_argument("kernelized_mode_apply: pooled Q/K " + q_pooled.shape().str() +
                                " incompatible with " + v.shape().str());
  }
  const double pre = std::sqrt(scale_of(opt, q_pooled.cols()));
  const DenseTensor sq = scaled(q_pooled, pre), sk = scaled(k_pooled, pre);
  const FeatureShifts shift = feature_shifts(fm, sq, sk);
  const DenseTensor phi_q = fm.apply(sq, shift.query);
  const DenseTensor phi_k = fm.apply(sk, shift.key);
  // Key side first: mode extent goes N_i -> M -> N_i, never N_i x N_i.
  const DenseTensor reduced = mode_product(v, linalg::transpose(phi_k), mode);
  const DenseTensor expanded = mode_product(reduced, phi_q, mode);
  const std::vector<double> inv = inverse_normalizer(phi_q, phi_k, opt.diagnostics);
  return scale_mode(expanded, inv, mode);
}

DenseTensor factorized_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                        const FeatureMap& fm, const AttentionOptions& opt) {
  check_input(x, w, "factorized_attention_linear");
  const std::size_t k = x.order() - 1;
  check_mask(opt, k);
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    DenseTensor p = h.v;
    for (std::size_t i = 0; i < k; ++i) {
      if (!mode_enabled(opt, i)) continue;
      const DenseTensor qt = pool_except(h.q, i, opt.pooling);
      const DenseTensor kt = pool_except(h.k, i, opt.pooling);
      p = kernelized_mode_apply(p, qt, kt, i, fm, opt);
    }
    y = add(y, project_last(p, hw.output));
  }
  return y;
}

DenseTensor full_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                  const FeatureMap& fm, const AttentionOptions& opt) {
  check_input(x, w, "full_attention_linear");
  check_mask(opt, x.order() - 1);
  DenseTensor y(x.shape());
  for (const auto& hw : w.heads()) {
    const HeadTensors h = project_head(x, hw, opt);
    const DenseTensor p = over_token_groups(
        h, opt, [&](const DenseTensor& q, const DenseTensor& kk, const DenseTensor& v) {
          return kernelized_mode_apply(v, q, kk, 0, fm, opt);
        });
    y = add(y, project_last(p, hw.output));
  }
  return y;
}

DenseTensor attention_forward(AttentionVariant variant, const DenseTensor& x,
                              const AttentionWeights& w, const FeatureMap* fm,
                              const AttentionOptions& opt) {
  auto need_fm = [&]() -> const FeatureMap& {
    if (!fm) throw std::invalid_argument("attention_forward: linear variant needs a feature map");
    return *fm;
  };
  switch (variant) {
    case AttentionVariant::kFullSoftmax: return full_high_order_attention(x, w, opt);
    case AttentionVariant::kFullLinear: return full_attention_linear(x, w, need_fm(), opt);
    case AttentionVariant::kFactoredSoftmax: return factorized_attention_softmax(x, w, opt);
    case AttentionVariant::kFactoredLinear: return factorized_attention_linear(x, w, need_fm(), opt);
  }
  throw std::invalid_argument("attention_forward: bad variant");
}

}  // namespace hot
