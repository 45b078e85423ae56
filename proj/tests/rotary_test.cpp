#include <gtest/gtest.h>

#include <cmath>

#include "hot/attention.hpp"
#include "hot/rotary.hpp"
#include "test_util.hpp"

namespace hot {
namespace {

using testing::random_tensor;

double pair_dot(const DenseTensor& a, std::size_t ra, const DenseTensor& b, std::size_t rb) {
  const std::size_t d = a.cols();
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) s += a(ra, c) * b(rb, c);
  return s;
}

TEST(Rotary, NoEncodedModesIsIdentity) {
  std::mt19937_64 rng(1);
  const DenseTensor t = random_tensor(Shape{3, 4, 6}, rng);
  EXPECT_EQ(max_abs_diff(rotary_encode(t, {{false, false}}), t), 0.0);
}

TEST(Rotary, RejectsOddHiddenAndBadFlagCount) {
  EXPECT_THROW(rotary_encode(DenseTensor(Shape{3, 5}), {{true}}), std::invalid_argument);
  EXPECT_THROW(rotary_encode(DenseTensor(Shape{3, 4, 2}), {{true}}), std::invalid_argument);
}

TEST(Rotary, FirstPositionUntouchedAndNormsPreserved) {
  std::mt19937_64 rng(2);
  const DenseTensor t = random_tensor(Shape{5, 8}, rng);
  const DenseTensor r = rotary_encode(t, {{true}});
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(r(0, c), t(0, c));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(pair_dot(r, i, r, i), pair_dot(t, i, t, i), 1e-12);
}

TEST(Rotary, InverseRotationRestores) {
  std::mt19937_64 rng(3);
  const DenseTensor t = random_tensor(Shape{3, 4, 6}, rng);
  const RotaryConfig cfg{{true, true}};
  const auto angles = rotary_angles(t.shape(), cfg);
  EXPECT_LE(max_abs_diff(rotate_pairs(rotate_pairs(t, angles, 1.0), angles, -1.0), t), 1e-14);
}

TEST(Rotary, DotProductDependsOnlyOnOffset) {
  std::mt19937_64 rng(4);
  const DenseTensor q1 = random_tensor(Shape{1, 4}, rng), k1 = random_tensor(Shape{1, 4}, rng);
  DenseTensor q(Shape{8, 4}), k(Shape{8, 4});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      q(i, c) = q1(0, c);
      k(i, c) = k1(0, c);
    }
  const RotaryConfig cfg{{true}};
  const DenseTensor rq = rotary_encode(q, cfg), rk = rotary_encode(k, cfg);
  for (std::size_t off = 0; off < 4; ++off) {
    const double ref = pair_dot(rq, off, rk, 0);
    for (std::size_t p = 1; p + off < 8; ++p) EXPECT_NEAR(pair_dot(rq, p + off, rk, p), ref, 1e-12);
  }
}

TEST(Rotary, PairsDealtRoundRobinAcrossModes) {
  const Shape s{3, 2, 8};
  const auto angles = rotary_angles(s, {{true, true}});
  const std::size_t pairs = 4;
  // Token (2, 1): pairs 0 and 2 follow mode 0 (pos 2), pairs 1 and 3 mode 1 (pos 1).
  const std::size_t p = 2 * 2 + 1;
  for (std::size_t j = 0; j < pairs; ++j) {
    const double theta = std::pow(10000.0, -2.0 * static_cast<double>(j) / 8.0);
    const double pos = j % 2 == 0 ? 2.0 : 1.0;
    EXPECT_DOUBLE_EQ(angles[p * pairs + j], pos * theta);
  }
  // Only mode 1 encoded: every pair follows mode 1.
  const auto only1 = rotary_angles(s, {{false, true}});
  for (std::size_t j = 0; j < pairs; ++j)
    EXPECT_DOUBLE_EQ(only1[p * pairs + j], std::pow(10000.0, -2.0 * static_cast<double>(j) / 8.0));
}

TEST(Rotary, BreaksPermutationInvarianceOfAttention) {
  std::mt19937_64 rng(5);
  const AttentionWeights w = AttentionWeights::glorot(4, 1, rng);
  DenseTensor x(Shape{4, 4});
  const DenseTensor row = random_tensor(Shape{1, 4}, rng), other = random_tensor(Shape{1, 4}, rng);
  for (std::size_t c = 0; c < 4; ++c) {
    x(0, c) = x(2, c) = row(0, c);
    x(1, c) = x(3, c) = other(0, c);
  }
  AttentionOptions opt;
  opt.rotary = RotaryConfig{{true}};
  const DenseTensor plain = standard_attention(x, w);
  const DenseTensor rotated = standard_attention(x, w, opt);
  // Without positions equal tokens give equal outputs; with positions they differ.
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(plain(0, c), plain(2, c));
  double diff = 0.0;
  for (std::size_t c = 0; c < 4; ++c) diff += std::abs(rotated(0, c) - rotated(2, c));
  EXPECT_GT(diff, 1e-6);
}

}  // namespace
}  // namespace hot
