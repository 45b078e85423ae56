#pragma once

#include <vector>

#include "hot/attention.hpp"
#include "hot/layer.hpp"

namespace hot {

// Explicit-matrix references for the verification suites. Each one forms the
// full token-by-token attention matrix, so cost is quadratic in tokens.

/// softmax(q k^T * scale) with explicit loops; n x m for n x d and m x d inputs.
DenseTensor explicit_softmax_matrix(const DenseTensor& q, const DenseTensor& k, double scale);

/// Softmax attention over all positional tokens of x, summed over heads.
DenseTensor naive_softmax_attention(const DenseTensor& x, const AttentionWeights& w, double score_scale);

/// Z^{-1} phi(Q) phi(K)^T V W_O over all positional tokens.
DenseTensor naive_kernel_attention(const DenseTensor& x, const AttentionWeights& w, const FeatureMap& fm,
                                   double score_scale);

/// Per-mode softmax factors of pooled Q/K, Kronecker product materialised
/// and applied to the flattened values.
DenseTensor kron_softmax_attention(const DenseTensor& x, const AttentionWeights& w, double score_scale,
                                   Pooling pooling = Pooling::kSum);

/// Same with explicit kernel matrices as the per-mode factors.
DenseTensor kron_kernel_attention(const DenseTensor& x, const AttentionWeights& w, const FeatureMap& fm,
                                  double score_scale, Pooling pooling = Pooling::kSum);

/// Explicit N x N kernel attention matrix Z^{-1} phi(q') phi(k')^T with
/// q' = sqrt(scale) q, floored like the production path.
DenseTensor explicit_kernel_matrix(const DenseTensor& q, const DenseTensor& k, const FeatureMap& fm,
                                   double score_scale);

/// max |matricize(T x_0 A_0 ... x_{k-1} A_{k-1}, k) - matricize(T, k) (A_0 (x) ... (x) A_{k-1})^T|
/// for an order-(k+1) tensor T.
double matricization_identity_error(const DenseTensor& t, const std::vector<DenseTensor>& factors);

/// Post-norm block with the attention term replaced by X W_V W_O summed over
/// heads: what every block reduces to with all modes masked off.
DenseTensor residual_mlp_reference(const DenseTensor& x, const HOTBlockConfig& cfg, const HOTBlockWeights& w);

}  // namespace hot
