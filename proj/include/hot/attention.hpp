#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hot/kron.hpp"
#include "hot/rotary.hpp"
#include "hot/tensor.hpp"

namespace hot {

/// Projections for one head. query/key/value are D x D_H, output is D_H x D.
struct HeadWeights {
  DenseTensor query;
  DenseTensor key;
  DenseTensor value;
  DenseTensor output;
};

class AttentionWeights {
 public:
  AttentionWeights() = default;
  explicit AttentionWeights(std::vector<HeadWeights> heads);

  /// Glorot-uniform initialisation; D must be divisible by `heads`.
  static AttentionWeights glorot(std::size_t model_dim, std::size_t heads, std::mt19937_64& rng);
  static AttentionWeights zeros(std::size_t model_dim, std::size_t heads);

  std::size_t head_count() const { return heads_.size(); }
  std::size_t model_dim() const { return heads_.front().query.rows(); }
  std::size_t head_dim() const { return heads_.front().query.cols(); }
  const HeadWeights& head(std::size_t h) const { return heads_[h]; }
  HeadWeights& head(std::size_t h) { return heads_[h]; }
  const std::vector<HeadWeights>& heads() const { return heads_; }

 private:
  std::vector<HeadWeights> heads_;
};

/// Positive random features approximating exp(q.k):
///   phi(x)_m = M^{-1/2} exp(w_m . x - |x|^2 / 2).
/// w is drawn block-orthogonally: each block of D_H rows is an orthonormalised
/// Gaussian matrix whose rows are rescaled by independent chi(D_H) norms, so
/// every row is still marginally N(0, I).
struct FeatureMapSpec {
  std::size_t features = 64;
  std::uint64_t seed = 0;
  std::size_t input_dim = 0;
};

class FeatureMap {
 public:
  explicit FeatureMap(const FeatureMapSpec& spec);

  const FeatureMapSpec& spec() const { return spec_; }
  /// M x D_H projection matrix.
  const DenseTensor& omega() const { return omega_; }
  /// Maps every row of an n x D_H matrix; returns n x M.
  /// Exponents w.x - |x|^2/2 (no 1/sqrt(M) factor), n x M.
  DenseTensor exponents(const DenseTensor& x) const;
  /// `shift` is empty or one constant per row, subtracted from the exponent.
  DenseTensor apply(const DenseTensor& x, const std::vector<double>& shift = {}) const;
  std::vector<double> apply(std::span<const double> x) const;

 private:
  FeatureMapSpec spec_;
  DenseTensor omega_;
};

/// Exponent offsets for a query/key pair. A per-query-row constant and a
/// single key constant both cancel in the normalised kernel; these are chosen
/// so the largest term of every Z row is 1/sqrt(M).
struct FeatureShifts {
  std::vector<double> query;
  std::vector<double> key;  // one value repeated per key row
};
FeatureShifts feature_shifts(const FeatureMap& fm, const DenseTensor& q, const DenseTensor& k);

/// Counts Z entries lifted to the floor. Accumulates across calls.
struct KernelDiagnostics {
  std::size_t rows = 0;
  std::size_t floored = 0;
};

inline constexpr double kNormalizerFloor = 1e-6;
inline constexpr std::size_t kDefaultOracleCap = 4096;

class OracleCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AttentionVariant { kFullSoftmax, kFullLinear, kFactoredSoftmax, kFactoredLinear };

std::string to_string(AttentionVariant v);
AttentionVariant parse_variant(const std::string& name);
inline constexpr AttentionVariant kAllVariants[] = {
    AttentionVariant::kFullSoftmax, AttentionVariant::kFullLinear,
    AttentionVariant::kFactoredSoftmax, AttentionVariant::kFactoredLinear};

struct AttentionOptions {
  Pooling pooling = Pooling::kSum;
  /// Per positional mode; empty means every mode attends. A disabled mode is
  /// left untouched (identity attention along it).
  std::vector<bool> mode_mask;
  /// Logit scale; defaults to 1/sqrt(D_H).
  std::optional<double> score_scale;
  std::optional<RotaryConfig> rotary;
  std::size_t oracle_cap = kDefaultOracleCap;
  KernelDiagnostics* diagnostics = nullptr;
};

/// Row-wise softmax with per-row max subtraction.
DenseTensor softmax_rows(const DenseTensor& m);

/// X (tokens... , D) times W (D x D_out) along the last mode.
DenseTensor project_last(const DenseTensor& x, const DenseTensor& w);

/// sum_h softmax(Q K^T * scale) V W_O for X of shape N x D.
DenseTensor standard_attention(const DenseTensor& x, const AttentionWeights& w,
                               const AttentionOptions& opt = {});

/// Same with the softmax replaced by the random-feature kernel; the sequence
/// reference for the linear variants.
DenseTensor standard_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                      const FeatureMap& fm, const AttentionOptions& opt = {});

/// softmax(pool(Q, i) pool(K, i)^T * scale): an N_i x N_i row-stochastic matrix.
DenseTensor mode_attention_matrix(const DenseTensor& q, const DenseTensor& k, std::size_t mode,
                                  const AttentionOptions& opt = {});

/// Exact attention over all positional tokens jointly (quadratic). Refuses
/// inputs above opt.oracle_cap tokens.
DenseTensor full_high_order_attention(const DenseTensor& x, const AttentionWeights& w,
                                      const AttentionOptions& opt = {});

/// Per-head Kronecker factors S_h^(i) for the softmax factorised path.
std::vector<KronFactors> factorized_softmax_factors(const DenseTensor& x, const AttentionWeights& w,
                                                    const AttentionOptions& opt = {});

/// Kronecker-factorised softmax attention, applied mode by mode.
DenseTensor factorized_attention_softmax(const DenseTensor& x, const AttentionWeights& w,
                                         const AttentionOptions& opt = {});

/// Z^{-1} phi(Q) phi(K)^T as an explicit matrix (test oracle), with the same
/// pre-scaling and floor as kernelized_mode_apply.
DenseTensor kernel_attention_matrix(const DenseTensor& q_pooled, const DenseTensor& k_pooled,
                                    const FeatureMap& fm, const AttentionOptions& opt = {});

/// ((V x_i phi(K)^T) x_i phi(Q)) x_i Z^{-1}. q/k are N_i x D_H and are scaled by
/// sqrt(score_scale) before the feature map so phi(q).phi(k) estimates
/// exp(q.k * score_scale). Cost is linear in N_i.
DenseTensor kernelized_mode_apply(const DenseTensor& v, const DenseTensor& q_pooled,
                                  const DenseTensor& k_pooled, std::size_t mode,
                                  const FeatureMap& fm, const AttentionOptions& opt = {});

DenseTensor factorized_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                        const FeatureMap& fm, const AttentionOptions& opt = {});

/// Random-feature attention over all positional tokens jointly (linear cost).
DenseTensor full_attention_linear(const DenseTensor& x, const AttentionWeights& w,
                                  const FeatureMap& fm, const AttentionOptions& opt = {});

/// Dispatches on variant; `fm` is required for the linear variants.
DenseTensor attention_forward(AttentionVariant variant, const DenseTensor& x,
                              const AttentionWeights& w, const FeatureMap* fm,
                              const AttentionOptions& opt = {});

/// Helpers shared with the differentiable path.
double default_score_scale(std::size_t head_dim);
bool mode_enabled(const AttentionOptions& opt, std::size_t mode);

}  // namespace hot
