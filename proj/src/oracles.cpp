#include "hot/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "hot/kron.hpp"
#include "hot/linalg.hpp"

namespace hot {

namespace {

DenseTensor tokens_by_hidden(const DenseTensor& t) {
  const std::size_t d = t.dim(t.order() - 1);
  return t.reshaped(Shape{t.numel() / d, d});
}

// sum_h A_h V_h W_O,h where A_h is built from the head's token matrices.
template <typename Matrix>
DenseTensor apply_per_head(const DenseTensor& x, const AttentionWeights& w, Matrix matrix) {
  const DenseTensor flat = tokens_by_hidden(x);
  DenseTensor y(flat.shape());
  for (const auto& h : w.heads()) {
    const DenseTensor q = linalg::matmul(flat, h.query), k = linalg::matmul(flat, h.key);
    const DenseTensor v = linalg::matmul(flat, h.value);
    y = add(y, linalg::matmul(linalg::matmul(matrix(q, k, x), v), h.output));
  }
  return y.reshaped(x.shape());
}

template <typename Factor>
DenseTensor kron_attention(const DenseTensor& x, const AttentionWeights& w, Pooling pooling, Factor factor) {
  return apply_per_head(x, w, [&](const DenseTensor& q, const DenseTensor& k, const DenseTensor& xs) {
    std::vector<std::size_t> dims(xs.shape().dims().begin(), xs.shape().dims().end() - 1);
    dims.push_back(q.cols());
    const DenseTensor qt = q.reshaped(Shape(dims)), kt = k.reshaped(Shape(dims));
    DenseTensor s = DenseTensor::identity(1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      s = kron(s, factor(pool_except(qt, i, pooling), pool_except(kt, i, pooling)));
    return s;
  });
}

}  // namespace

DenseTensor explicit_softmax_matrix(const DenseTensor& q, const DenseTensor& k, double scale) {
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols();
  DenseTensor s(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double hi = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      s(i, j) = dot * scale;
      hi = std::max(hi, s(i, j));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (s(i, j) = std::exp(s(i, j) - hi));
    for (std::size_t j = 0; j < m; ++j) s(i, j) /= z;
  }
  return s;
}

DenseTensor naive_softmax_attention(const DenseTensor& x, const AttentionWeights& w, double score_scale) {
  return apply_per_head(x, w, [&](const DenseTensor& q, const DenseTensor& k, const DenseTensor&) {
    return explicit_softmax_matrix(q, k, score_scale);
  });
}

DenseTensor explicit_kernel_matrix(const DenseTensor& q, const DenseTensor& k, const FeatureMap& fm,
                                   double score_scale) {
  const double pre = std::sqrt(score_scale);
  const DenseTensor sq = scaled(q, pre), sk = scaled(k, pre);
  const FeatureShifts shift = feature_shifts(fm, sq, sk);
  const DenseTensor pq = fm.apply(sq, shift.query), pk = fm.apply(sk, shift.key);
  DenseTensor a = linalg::matmul_nt(pq, pk);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) z += a(i, j);
    z = std::max(z, kNormalizerFloor);
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) /= z;
  }
  return a;
}

DenseTensor naive_kernel_attention(const DenseTensor& x, const AttentionWeights& w, const FeatureMap& fm,
                                   double score_scale) {
  return apply_per_head(x, w, [&](const DenseTensor& q, const DenseTensor& k, const DenseTensor&) {
    return explicit_kernel_matrix(q, k, fm, score_scale);
  });
}

DenseTensor kron_softmax_attention(const DenseTensor& x, const AttentionWeights& w, double score_scale,
                                   Pooling pooling) {
  return kron_attention(x, w, pooling, [&](const DenseTensor& qp, const DenseTensor& kp) {
    return explicit_softmax_matrix(qp, kp, score_scale);
  });
}

DenseTensor kron_kernel_attention(const DenseTensor& x, const AttentionWeights& w, const FeatureMap& fm,
                                  double score_scale, Pooling pooling) {
  return kron_attention(x, w, pooling, [&](const DenseTensor& qp, const DenseTensor& kp) {
    return explicit_kernel_matrix(qp, kp, fm, score_scale);
  });
}

double matricization_identity_error(const DenseTensor& t, const std::vector<DenseTensor>& factors) {
  const std::size_t k = factors.size();
  if (t.order() != k + 1) throw std::invalid_argument("matricization_identity_error: need one factor per mode");
  DenseTensor lhs = t;
  DenseTensor s = DenseTensor::identity(1);
  for (std::size_t i = 0; i < k; ++i) {
    lhs = mode_product(lhs, factors[i], i);
    s = kron(s, factors[i]);
  }
  return max_abs_diff(matricize(lhs, k), linalg::matmul_nt(matricize(t, k), s));
}

DenseTensor residual_mlp_reference(const DenseTensor& x, const HOTBlockConfig& cfg, const HOTBlockWeights& w) {
  DenseTensor attn(x.shape());
  for (const auto& h : w.attention.heads()) attn = add(attn, project_last(project_last(x, h.value), h.output));
  const DenseTensor y1 = layer_norm(add(x, attn), w.norm1, cfg.ln_eps);
  return layer_norm(add(y1, affine_last(gelu(affine_last(y1, w.ffn_in)), w.ffn_out)), w.norm2, cfg.ln_eps);
}

}  // namespace hot
