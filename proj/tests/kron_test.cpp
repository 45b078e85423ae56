#include <gtest/gtest.h>

#include <algorithm>

#include "hot/kron.hpp"
#include "hot/linalg.hpp"
#include "test_util.hpp"

namespace hot {
namespace {

using testing::random_row_stochastic;
using testing::random_tensor;

double relative_frobenius(const DenseTensor& approx, const DenseTensor& exact) {
  return frobenius_norm(subtract(approx, exact)) / frobenius_norm(exact);
}

TEST(Svd, ReconstructsAndOrdersSingularValues) {
  std::mt19937_64 rng(11);
  for (const Shape& s : {Shape{6, 4}, Shape{3, 7}, Shape{5, 5}}) {
    const DenseTensor a = random_tensor(s, rng);
    const linalg::Svd d = linalg::svd(a);
    DenseTensor rebuilt(a.shape());
    for (std::size_t r = 0; r < d.s.size(); ++r)
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) rebuilt(i, j) += d.u(i, r) * d.s[r] * d.v(j, r);
    EXPECT_LE(max_abs_diff(rebuilt, a), 1e-12);
    EXPECT_TRUE(std::is_sorted(d.s.rbegin(), d.s.rend()));
    const DenseTensor vtv = linalg::matmul(linalg::transpose(d.v), d.v);
    EXPECT_LE(max_abs_diff(vtv, DenseTensor::identity(vtv.rows())), 1e-12);
  }
}

TEST(Svd, RankAndPseudoInverse) {
  const DenseTensor a = DenseTensor::matrix(3, 3, {1, 2, 3, 2, 4, 6, 1, 0, 1});
  EXPECT_EQ(linalg::matrix_rank(a), 2u);
  const DenseTensor p = linalg::pinv(a);
  // Penrose condition A A+ A = A.
  EXPECT_LE(max_abs_diff(linalg::matmul(linalg::matmul(a, p), a), a), 1e-12);
}

TEST(Kron, IdentityTimesIdentity) {
  EXPECT_EQ(max_abs_diff(kron(DenseTensor::identity(2), DenseTensor::identity(2)),
                         DenseTensor::identity(4)),
            0.0);
}

TEST(Kron, SwapTimesIdentityIsBlockAntiDiagonal) {
  const DenseTensor swap = DenseTensor::matrix(2, 2, {0, 1, 1, 0});
  const DenseTensor expected =
      DenseTensor::matrix(4, 4, {0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0});
  EXPECT_EQ(max_abs_diff(kron(swap, DenseTensor::identity(2)), expected), 0.0);
}

TEST(Kron, RowStochasticClosure) {
  std::mt19937_64 rng(12);
  const DenseTensor k = kron(random_row_stochastic(3, rng), random_row_stochastic(4, rng));
  for (std::size_t i = 0; i < k.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k.cols(); ++j) sum += k(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

TEST(KronFactors, RejectsNonSquare) {
  EXPECT_THROW(KronFactors({DenseTensor(Shape{2, 3})}), std::invalid_argument);
  EXPECT_THROW(KronSum(std::vector<KronFactors>{}), std::invalid_argument);
  EXPECT_THROW(KronSum({KronFactors({DenseTensor::identity(2)}),
                        KronFactors({DenseTensor::identity(3)})}),
               std::invalid_argument);
}

TEST(Materialize, IdentityTerm) {
  const KronFactors f({DenseTensor::identity(2), DenseTensor::identity(3), DenseTensor::identity(2)});
  EXPECT_EQ(max_abs_diff(materialize(f), DenseTensor::identity(12)), 0.0);
}

TEST(Materialize, TwoTermsMatchDirectExpansion) {
  std::mt19937_64 rng(13);
  std::vector<DenseTensor> a, b;
  std::vector<KronFactors> terms;
  for (int r = 0; r < 2; ++r) {
    a.push_back(random_tensor(Shape{2, 2}, rng));
    b.push_back(random_tensor(Shape{2, 2}, rng));
    terms.emplace_back(std::vector<DenseTensor>{a.back(), b.back()});
  }
  const DenseTensor m = materialize(KronSum(terms));
  for (std::size_t i1 = 0; i1 < 2; ++i1)
    for (std::size_t i2 = 0; i2 < 2; ++i2)
      for (std::size_t j1 = 0; j1 < 2; ++j1)
        for (std::size_t j2 = 0; j2 < 2; ++j2) {
          const double expected = a[0](i1, j1) * b[0](i2, j2) + a[1](i1, j1) * b[1](i2, j2);
          EXPECT_NEAR(m(i1 * 2 + i2, j1 * 2 + j2), expected, 1e-15);
        }
}

TEST(ApplyFactors, IdentityFactorsLeaveInputUnchanged) {
  std::mt19937_64 rng(14);
  const DenseTensor v = random_tensor(Shape{2, 3, 4}, rng);
  const KronFactors f({DenseTensor::identity(2), DenseTensor::identity(3)});
  EXPECT_EQ(max_abs_diff(apply_factors(v, f), v), 0.0);
}

DenseTensor materialized_apply(const DenseTensor& v, const KronFactors& f) {
  const std::size_t k = f.order();
  const DenseTensor flat = linalg::transpose(matricize(v, k));  // tokens x D_H
  const DenseTensor out = linalg::matmul(materialize(f), flat);
  return fold(linalg::transpose(out), k, v.shape());
}

TEST(ApplyFactors, MatchesMaterializedOracle) {
  std::mt19937_64 rng(15);
  const DenseTensor v = random_tensor(Shape{2, 3, 4}, rng);
  const KronFactors f({random_tensor(Shape{2, 2}, rng), random_tensor(Shape{3, 3}, rng)});
  const DenseTensor lhs = linalg::transpose(matricize(apply_factors(v, f), 2));
  const DenseTensor rhs = linalg::matmul(materialize(f), linalg::transpose(matricize(v, 2)));
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-10);
}

TEST(ApplyFactors, ExhaustiveShapesUpTo64Tokens) {
  std::mt19937_64 rng(16);
  std::size_t cases = 0;
  for (std::size_t k = 1; k <= 3; ++k) {
    std::vector<std::size_t> dims(k, 1);
    Shape grid(std::vector<std::size_t>(k, 4));
    IndexCounter it(grid);
    do {
      std::size_t tokens = 1;
      for (std::size_t i = 0; i < k; ++i) tokens *= (dims[i] = it.index()[i] + 1);
      if (tokens > 64) continue;
      std::vector<DenseTensor> factors;
      for (std::size_t d : dims) factors.push_back(random_tensor(Shape{d, d}, rng));
      auto vdims = dims;
      vdims.push_back(3);
      const DenseTensor v = random_tensor(Shape(vdims), rng);
      const KronFactors f(factors);
      EXPECT_LE(max_abs_diff(apply_factors(v, f), materialized_apply(v, f)), 1e-10);
      ++cases;
    } while (it.next());
  }
  EXPECT_EQ(cases, 4u + 16u + 64u);
}

TEST(ApplyFactors, ModeOrderIrrelevant) {
  std::mt19937_64 rng(17);
  const DenseTensor v = random_tensor(Shape{3, 2, 4, 2}, rng);
  const std::vector<DenseTensor> f = {random_tensor(Shape{3, 3}, rng),
                                      random_tensor(Shape{2, 2}, rng),
                                      random_tensor(Shape{4, 4}, rng)};
  DenseTensor reversed = v;
  for (std::size_t i = 3; i-- > 0;) reversed = mode_product(reversed, f[i], i);
  EXPECT_LE(max_abs_diff(apply_factors(v, KronFactors(f)), reversed), 1e-12);
}

TEST(ApplyFactors, ShapeMismatch) {
  const DenseTensor v(Shape{2, 3, 4});
  EXPECT_THROW(apply_factors(v, KronFactors({DenseTensor::identity(3), DenseTensor::identity(3)})),
               std::invalid_argument);
}

TEST(VanLoan, SingleModeIsFlatten) {
  std::mt19937_64 rng(18);
  const DenseTensor s = random_tensor(Shape{3, 3}, rng);
  const DenseTensor t = vanloan_rearrange(s, {3});
  EXPECT_EQ(t.shape(), (Shape{9}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(t[i], s[i]);
}

TEST(VanLoan, KroneckerProductBecomesRankOne) {
  std::mt19937_64 rng(19);
  const DenseTensor a = random_tensor(Shape{2, 2}, rng), b = random_tensor(Shape{2, 2}, rng);
  const DenseTensor t = vanloan_rearrange(kron(a, b), {2, 2});
  EXPECT_EQ(t.shape(), (Shape{4, 4}));
  EXPECT_EQ(linalg::matrix_rank(t), 1u);
}

TEST(VanLoan, PreservesMultisetOfEntries) {
  std::mt19937_64 rng(20);
  const DenseTensor s = random_tensor(Shape{12, 12}, rng);
  const DenseTensor t = vanloan_rearrange(s, {2, 3, 2});
  EXPECT_EQ(t.shape(), (Shape{4, 9, 4}));
  std::vector<double> x(s.values().begin(), s.values().end()), y(t.values().begin(), t.values().end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  EXPECT_EQ(x, y);
}

TEST(VanLoan, RejectsWrongSide) {
  EXPECT_THROW(vanloan_rearrange(DenseTensor(Shape{6, 6}), {2, 2}), std::invalid_argument);
}

TEST(KronDecompose, RecoversPlantedKroneckerProduct) {
  std::mt19937_64 rng(21);
  const DenseTensor a = random_tensor(Shape{3, 3}, rng), b = random_tensor(Shape{2, 2}, rng);
  const DenseTensor s = kron(a, b);
  const KronDecomposition d = kron_decompose(s, {3, 2}, 1);
  EXPECT_EQ(d.terms.rank(), 1u);
  EXPECT_LE(relative_frobenius(materialize(d.terms), s), 1e-10);
  EXPECT_LE(d.relative_error, 1e-10);
}

TEST(KronDecompose, RandomMatrixExactAtBound) {
  std::mt19937_64 rng(22);
  const DenseTensor s = random_tensor(Shape{9, 9}, rng);
  EXPECT_EQ(kron_rank_bound({3, 3}), 9u);
  const KronDecomposition d = kron_decompose(s, {3, 3}, 9);
  EXPECT_LE(relative_frobenius(materialize(d.terms), s), 1e-10);
}

TEST(KronDecompose, ErrorNonIncreasingInRank) {
  std::mt19937_64 rng(23);
  for (const std::vector<std::size_t>& dims : {std::vector<std::size_t>{3, 3}, {2, 3}, {2, 4}}) {
    const std::size_t side = dims[0] * dims[1];
    const DenseTensor s = random_tensor(Shape{side, side}, rng);
    double prev = 2.0;
    for (std::size_t r = 1; r <= kron_rank_bound(dims); ++r) {
      const double err = kron_decompose(s, dims, r).relative_error;
      EXPECT_LE(err, prev + 1e-12) << "rank " << r;
      prev = err;
    }
    EXPECT_LE(prev, 1e-10);
  }
}

TEST(KronDecompose, UniversalityOnRowStochasticMatrices) {
  std::mt19937_64 rng(24);
  for (const std::vector<std::size_t>& dims : {std::vector<std::size_t>{2, 3}, {3, 3}}) {
    for (int trial = 0; trial < 10; ++trial) {
      const DenseTensor s = random_row_stochastic(dims[0] * dims[1], rng);
      const std::size_t r = std::min(dims[0] * dims[0], dims[1] * dims[1]);
      const KronDecomposition d = kron_decompose(s, dims, r);
      EXPECT_LE(relative_frobenius(materialize(d.terms), s), 1e-8);
    }
  }
}

TEST(KronDecompose, RankMultiplicativity) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    const DenseTensor a = random_tensor(Shape{2, 2}, rng);
    const DenseTensor b = random_tensor(Shape{3, 3}, rng);
    EXPECT_EQ(linalg::matrix_rank(materialize(KronFactors({a, b}))),
              linalg::matrix_rank(a) * linalg::matrix_rank(b));
  }
  // A rank-deficient factor: rank(A (x) B) = 2 * 2.
  const DenseTensor a = random_tensor(Shape{2, 2}, rng);
  const DenseTensor u = random_tensor(Shape{3, 2}, rng);
  const DenseTensor b = linalg::matmul(u, linalg::transpose(u));
  EXPECT_EQ(linalg::matrix_rank(b), 2u);
  EXPECT_EQ(linalg::matrix_rank(materialize(KronFactors({a, b}))), 4u);
}

TEST(KronDecompose, AlsRecoversPlantedThreeModeTerms) {
  std::mt19937_64 rng(26);
  std::vector<KronFactors> planted;
  for (int r = 0; r < 2; ++r) {
    planted.emplace_back(std::vector<DenseTensor>{random_tensor(Shape{2, 2}, rng),
                                                  random_tensor(Shape{2, 2}, rng),
                                                  random_tensor(Shape{3, 3}, rng)});
  }
  const DenseTensor one = materialize(planted.front());
  const KronDecomposition d1 = kron_decompose(one, {2, 2, 3}, 1, 7);
  EXPECT_TRUE(d1.converged);
  EXPECT_LE(d1.relative_error, 1e-8);

  const DenseTensor two = materialize(KronSum(planted));
  const KronDecomposition d2 = kron_decompose(two, {2, 2, 3}, 2, 7);
  EXPECT_LE(d2.relative_error, 1e-6);
  EXPECT_LE(relative_frobenius(materialize(d2.terms), two), 1e-6);
}

TEST(KronDecompose, AlsIsDeterministicGivenSeed) {
  std::mt19937_64 rng(27);
  const DenseTensor s = random_tensor(Shape{8, 8}, rng);
  const KronDecomposition a = kron_decompose(s, {2, 2, 2}, 3, 99);
  const KronDecomposition b = kron_decompose(s, {2, 2, 2}, 3, 99);
  EXPECT_EQ(max_abs_diff(materialize(a.terms), materialize(b.terms)), 0.0);
  EXPECT_EQ(a.sweeps, b.sweeps);
}

TEST(KronDecompose, AlsNonConvergenceIsFlagged) {
  std::mt19937_64 rng(28);
  const DenseTensor s = random_tensor(Shape{8, 8}, rng);
  const KronDecomposition d = kron_decompose(s, {2, 2, 2}, 2, 1, AlsOptions{1, 1e-10});
  EXPECT_FALSE(d.converged);
  EXPECT_EQ(d.sweeps, 1);
  EXPECT_GT(d.relative_error, 0.0);
}

TEST(KronDecompose, RejectsZeroRank) {
  EXPECT_THROW(kron_decompose(DenseTensor::identity(4), {2, 2}, 0), std::invalid_argument);
}

}  // namespace
}  // namespace hot
