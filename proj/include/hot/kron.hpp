#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hot/tensor.hpp"

namespace hot {

/// One Kronecker term S^(1) (x) ... (x) S^(k); factor i is N_i x N_i.
class KronFactors {
 public:
  explicit KronFactors(std::vector<DenseTensor> factors);

  const std::vector<DenseTensor>& factors() const { return factors_; }
  std::size_t order() const { return factors_.size(); }
  std::vector<std::size_t> dims() const;
  /// Side length of the implied full matrix.
  std::size_t side() const;

 private:
  std::vector<DenseTensor> factors_;
};

/// Sum of R Kronecker terms with identical per-mode shapes.
class KronSum {
 public:
  explicit KronSum(std::vector<KronFactors> terms);

  const std::vector<KronFactors>& terms() const { return terms_; }
  std::size_t rank() const { return terms_.size(); }
  std::vector<std::size_t> dims() const { return terms_.front().dims(); }

 private:
  std::vector<KronFactors> terms_;
};

/// (A (x) B)[iA*mB + iB, jA*nB + jB] = A[iA, jA] * B[iB, jB].
DenseTensor kron(const DenseTensor& a, const DenseTensor& b);

/// Explicit full matrix. Test oracle only; quadratic in the token count.
DenseTensor materialize(const KronFactors& f);
DenseTensor materialize(const KronSum& ks);

/// ((V x_0 S^(0)) x_1 S^(1)) ... x_{k-1} S^(k-1) on an order-(k+1) tensor whose
/// last mode is the hidden dim. Never forms the full Kronecker matrix.
DenseTensor apply_factors(const DenseTensor& v, const KronFactors& f);

/// Pairs row and column indices of each mode: S viewed as
/// [i_1..i_k, j_1..j_k] maps to T[i_1*N_1 + j_1, ..., i_k*N_k + j_k], a tensor of
/// shape (N_1^2, ..., N_k^2). A single Kronecker term becomes a rank-one tensor.
DenseTensor vanloan_rearrange(const DenseTensor& s, const std::vector<std::size_t>& dims);

struct KronDecomposition {
  KronSum terms;
  /// ||S - materialize(terms)||_F / ||S||_F.
  double relative_error = 0.0;
  /// ALS sweeps used (0 for the SVD route).
  int sweeps = 0;
  bool converged = true;
};

struct AlsOptions {
  int max_sweeps = 200;
  double tolerance = 1e-10;
};

/// Rank-R Kronecker decomposition. Two modes use the truncated SVD of the
/// rearranged matrix (optimal); three or more modes run CP-ALS on the
/// rearranged tensor with a seeded random start. `converged` is false when
/// ALS hits max_sweeps without meeting the tolerance.
KronDecomposition kron_decompose(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                 std::size_t rank, std::uint64_t seed = 0,
                                 const AlsOptions& als = {});

/// Decompositions at ranks 1..max_rank. With three or more modes each rank
/// warm-starts ALS from the previous solution plus one fresh term and keeps
/// the previous solution (padded with a zero term) if ALS ends worse, so the
/// error sequence is non-increasing; two modes use the SVD.
std::vector<KronDecomposition> kron_rank_curve(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                               std::size_t max_rank, std::uint64_t seed = 0,
                                               const AlsOptions& als = {});

/// Rank at which a Kronecker sum can represent any matrix over these
/// mode sizes: min_j prod_{i != j} N_i^2.
std::size_t kron_rank_bound(const std::vector<std::size_t>& dims);

}  // namespace hot
