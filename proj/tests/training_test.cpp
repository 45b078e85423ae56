#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hot/ad_model.hpp"
#include "hot/training.hpp"
#include "test_util.hpp"

namespace hot {
namespace {

using testing::random_tensor;

std::vector<double> vec(const DenseTensor& t) { return {t.values().begin(), t.values().end()}; }

constexpr std::uint64_t kSeeds[] = {11, 22, 33, 44, 55};

HOTBlockConfig grad_block(AttentionVariant v) {
  HOTBlockConfig cfg;
  cfg.dims = {3, 4};
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.variant = v;
  cfg.features = 16;
  cfg.ffn_dim = 16;
  return cfg;
}

// Rebuilds BlockVars from leaves listed in named_parameters(block) order.
ad::BlockVars block_from(const std::vector<ad::Var>& p, std::size_t heads, std::size_t offset) {
  ad::BlockVars b;
  std::size_t i = offset;
  for (std::size_t h = 0; h < heads; ++h, i += 4) b.heads.push_back({p[i], p[i + 1], p[i + 2], p[i + 3]});
  b.norm1_gamma = p[i++];
  b.norm1_beta = p[i++];
  b.ffn_in_weight = p[i++];
  b.ffn_in_bias = p[i++];
  b.ffn_out_weight = p[i++];
  b.ffn_out_bias = p[i++];
  b.norm2_gamma = p[i++];
  b.norm2_beta = p[i++];
  return b;
}

ModelConfig forecast_config(std::vector<bool> mask = {}) {
  ModelConfig cfg;
  cfg.embed.input_dims = {4, 16};
  cfg.embed.channels = 1;
  cfg.embed.stages = {{1, 4}};
  cfg.block.model_dim = 16;
  cfg.block.heads = 2;
  cfg.block.mode_mask = std::move(mask);
  cfg.block.dims = cfg.embed.token_dims();
  cfg.head.pooling = HeadPooling::kFlatten;
  cfg.head.task = TaskKind::kForecast;
  cfg.head.horizon = 4;
  cfg.head.variates = 4;
  return cfg;
}

// ---- tape forward matches the plain forward ----

TEST(TapeForward, AttentionMatchesPlainPathForEveryVariant) {
  std::mt19937_64 rng(3);
  const DenseTensor x = random_tensor(Shape{3, 4, 8}, rng);
  const AttentionWeights w = AttentionWeights::glorot(8, 2, rng);
  const FeatureMap fm({16, 5, 4});
  for (AttentionVariant v : kAllVariants) {
    for (const std::vector<bool>& mask : {std::vector<bool>{}, {true, false}, {false, true}}) {
      AttentionOptions opt;
      opt.mode_mask = mask;
      const DenseTensor ref = attention_forward(v, x, w, &fm, opt);
      ad::Tape tape;
      std::vector<ad::HeadVars> heads;
      for (const auto& h : w.heads())
        heads.push_back({tape.constant(h.query), tape.constant(h.key), tape.constant(h.value), tape.constant(h.output)});
      const DenseTensor got = ad::attention(tape.constant(x), heads, v, &fm, opt).value();
      ASSERT_EQ(got.shape(), ref.shape());
      for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-13) << to_string(v);
    }
  }
}

TEST(TapeForward, BlockAndModelMatchPlainPath) {
  for (AttentionVariant v : kAllVariants) {
    for (bool pre : {false, true}) {
      HOTBlockConfig cfg = grad_block(v);
      cfg.pre_norm = pre;
      cfg.rotary = RotaryConfig{{true, true}};
      std::mt19937_64 rng(8);
      const HOTBlockWeights w = HOTBlockWeights::glorot(cfg, rng);
      const DenseTensor x = random_tensor(Shape{3, 4, 8}, rng);
      ad::Tape tape;
      const DenseTensor got = ad::block_forward(tape.constant(x), cfg, ad::bind_block(tape, w)).value();
      const DenseTensor ref = hot_block_forward(x, cfg, w);
      for (std::size_t i = 0; i < ref.numel(); ++i) ASSERT_NEAR(got[i], ref[i], 1e-12) << to_string(v);
    }
  }
  ModelConfig cfg = forecast_config();
  cfg.head.pooling = HeadPooling::kMean;
  for (HeadPooling pooling : {HeadPooling::kMean, HeadPooling::kFlatten}) {
    cfg.head.pooling = pooling;
    std::mt19937_64 rng(9);
    const ModelWeights w = ModelWeights::glorot(cfg, rng);
    const DenseTensor batch = random_tensor(Shape{3, 4, 16, 1}, rng);
    ad::Tape tape;
    const DenseTensor got = ad::model_forward(tape, batch, cfg, ad::bind_model(tape, w)).value();
    const DenseTensor ref = predict(batch, cfg, w);
    ASSERT_EQ(got.numel(), ref.numel());
    for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
  }
}

// ---- op-level adjoints ----

TEST(Adjoint, ModeProductWithIdentitySumsToOnes) {
  std::mt19937_64 rng(1);
  ad::Tape tape;
  const ad::Var t = tape.leaf(random_tensor(Shape{2, 3, 4}, rng));
  const ad::Var y = ad::mode_product(t, tape.constant(DenseTensor::identity(3)), 1);
  tape.backward(ad::sum(y));
  const DenseTensor g = tape.grad(t);
  for (double v : g.values()) EXPECT_EQ(v, 1.0);
}

TEST(Adjoint, SoftmaxJacobianMatchesClosedForm) {
  const DenseTensor logits(Shape{1, 3}, {1.0, 2.0, 3.0});
  const DenseTensor p = softmax_rows(logits);
  for (std::size_t j = 0; j < 3; ++j) {
    ad::Tape tape;
    const ad::Var x = tape.leaf(logits);
    DenseTensor pick(Shape{1, 3});
    pick[j] = 1.0;
    tape.backward(ad::dot_constant(ad::softmax_rows(x), pick));
    const DenseTensor g = tape.grad(x);
    for (std::size_t i = 0; i < 3; ++i) {
      const double expected = (i == j ? p[j] : 0.0) - p[j] * p[i];
      EXPECT_NEAR(g[i], expected, 1e-15);
    }
  }
}

TEST(Adjoint, ConsumedTapeRejectsSecondBackward) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(DenseTensor(Shape{2}, {1.0, 2.0}));
  const ad::Var l = ad::sum(ad::scale(x, 3.0));
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), ad::TapeConsumedError);
}

TEST(Adjoint, BackwardNeedsScalarLoss) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(DenseTensor(Shape{2}, {1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

TEST(Adjoint, GradientsAccumulateOverReuse) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(DenseTensor(Shape{2}, {1.0, 2.0}));
  tape.backward(ad::sum(ad::add(x, ad::scale(x, 2.0))));
  EXPECT_EQ(tape.grad(x)[0], 3.0);
  EXPECT_EQ(tape.grad(x)[1], 3.0);
}

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  LossBuilder build;
};

TEST(GradCheck, EveryPrimitive) {
  const Shape m34{3, 4}, m45{4, 5}, t{2, 3, 4};
  const RotaryConfig rot{{true, true}};
  const FeatureMap fm({8, 2, 4});
  // Random linear readout so every output entry gets a distinct adjoint.
  auto proj = [](ad::Var v) {
    std::mt19937_64 rr(77);
    return ad::dot_constant(v, random_tensor(v.shape(), rr));
  };
  const std::vector<OpCase> cases = {
      {"matmul", {m34, m45}, [&](ad::Tape&, const auto& p) { return proj(ad::matmul(p[0], p[1])); }},
      {"matmul_nt", {m34, Shape{5, 4}}, [&](ad::Tape&, const auto& p) { return proj(ad::matmul_nt(p[0], p[1])); }},
      {"transpose", {m34}, [&](ad::Tape&, const auto& p) { return proj(ad::transpose(p[0])); }},
      {"permute", {t}, [&](ad::Tape&, const auto& p) { return proj(ad::permute(p[0], {2, 0, 1})); }},
      {"mode_product", {t, Shape{5, 3}},
       [&](ad::Tape&, const auto& p) { return proj(ad::mode_product(p[0], p[1], 1)); }},
      {"affine_last", {t, Shape{4, 2}, Shape{2}},
       [&](ad::Tape&, const auto& p) { return proj(ad::affine_last(p[0], p[1], p[2])); }},
      {"pool_sum", {t}, [&](ad::Tape&, const auto& p) { return proj(ad::pool_except(p[0], 1, Pooling::kSum)); }},
      {"pool_mean", {t}, [&](ad::Tape&, const auto& p) { return proj(ad::pool_except(p[0], 0, Pooling::kMean)); }},
      {"softmax", {m34}, [&](ad::Tape&, const auto& p) { return proj(ad::softmax_rows(p[0])); }},
      {"feature_map", {m34}, [&](ad::Tape&, const auto& p) { return proj(ad::feature_map(ad::scale(p[0], 0.5), fm)); }},
      {"scale_mode", {t, Shape{3}}, [&](ad::Tape&, const auto& p) { return proj(ad::scale_mode(p[0], p[1], 1)); }},
      {"layer_norm", {m34, Shape{4}, Shape{4}},
       [&](ad::Tape&, const auto& p) { return proj(ad::layer_norm(p[0], p[1], p[2], 1e-5)); }},
      {"gelu", {m34}, [&](ad::Tape&, const auto& p) { return proj(ad::gelu(p[0])); }},
      {"rotary", {t}, [&](ad::Tape&, const auto& p) { return proj(ad::rotary(p[0], rot)); }},
      {"patchify", {Shape{4, 6, 1}}, [&](ad::Tape&, const auto& p) { return proj(ad::patchify(p[0], {2, 3})); }},
      {"select_stack", {t},
       [&](ad::Tape&, const auto& p) { return proj(ad::stack({ad::select(p[0], 1), ad::select(p[0], 0)})); }},
      {"mse", {m34}, [&](ad::Tape&, const auto& p) { return ad::mse(p[0], DenseTensor(m34, 0.25)); }},
      {"cross_entropy", {m34}, [&](ad::Tape&, const auto& p) { return ad::cross_entropy(p[0], {0, 3, 2}); }},
  };
  for (std::uint64_t seed : kSeeds) {
    std::mt19937_64 rng(seed);
    for (const auto& c : cases) {
      std::vector<DenseTensor> params;
      std::vector<std::string> names;
      for (const Shape& s : c.shapes) {
        params.push_back(random_tensor(s, rng));
        names.push_back(c.name);
      }
      const GradCheckResult res = gradient_check(c.build, params, names, {.seed = seed});
      EXPECT_LE(res.max_rel_error, 1e-6) << c.name << " seed " << seed << " worst " << res.worst;
    }
  }
}

TEST(GradCheck, FloorReciprocalAwayFromFloor) {
  LossBuilder build = [](ad::Tape&, const std::vector<ad::Var>& p) {
    return ad::dot_constant(ad::floor_reciprocal(p[0], kNormalizerFloor), DenseTensor(Shape{3}, {1.0, -2.0, 0.5}));
  };
  const auto res = gradient_check(build, {DenseTensor(Shape{3}, {0.5, 1.5, 3.0})}, {"z"});
  EXPECT_LE(res.max_rel_error, 1e-8);
}

TEST(GradCheck, QuadraticSelfTest) {
  const auto res = quadratic_gradcheck(6, {.seed = 4});
  EXPECT_LE(res.max_rel_error, 1e-9);
  EXPECT_EQ(res.coords, 6u);
}

// ---- attention and block at (3,4)+D=8 with two heads ----

GradCheckResult suite(bool block, AttentionVariant v, std::uint64_t seed, ad::Fault fault = ad::Fault::kNone) {
  GradCheckOptions opt;
  opt.seed = seed;
  opt.fault = fault;
  return block ? block_gradcheck(v, {}, opt) : attention_gradcheck(v, {}, opt);
}

TEST(GradCheck, EveryAttentionVariantFiveSeeds) {
  for (AttentionVariant v : kAllVariants)
    for (std::uint64_t seed : kSeeds) {
      const auto res = suite(false, v, seed);
      EXPECT_LE(res.max_rel_error, 1e-5) << to_string(v) << " seed " << seed << " worst " << res.worst;
      EXPECT_GT(res.coords, 100u);
    }
}

TEST(GradCheck, FullBlockEveryVariantFiveSeeds) {
  for (AttentionVariant v : kAllVariants)
    for (std::uint64_t seed : kSeeds) {
      const auto res = suite(true, v, seed);
      EXPECT_LE(res.max_rel_error, 1e-5) << to_string(v) << " seed " << seed << " worst " << res.worst;
    }
}

TEST(GradCheck, BatchedModelWithRotaryAndMask) {
  ModelConfig cfg = forecast_config({true, false});
  cfg.block.model_dim = 8;
  cfg.block.rotary = RotaryConfig{{true, true}};
  std::mt19937_64 rng(5);
  ModelWeights w = ModelWeights::glorot(cfg, rng);
  const DenseTensor batch = random_tensor(Shape{2, 4, 16, 1}, rng);
  const DenseTensor target = random_tensor(Shape{2, 16}, rng);
  std::vector<DenseTensor> params;
  std::vector<std::string> names;
  for (auto& p : named_parameters(w)) {
    params.push_back(*p.tensor);
    names.push_back(p.name);
  }
  LossBuilder build = [&](ad::Tape& tape, const std::vector<ad::Var>& p) {
    ad::ModelVars vars;
    vars.embed_weight = {p[0]};
    vars.embed_bias = {p[1]};
    vars.blocks = {block_from(p, cfg.block.heads, 2)};
    vars.head_weight = p[p.size() - 2];
    vars.head_bias = p[p.size() - 1];
    return ad::mse(ad::model_forward(tape, batch, cfg, vars), target);
  };
  const auto res = gradient_check(build, params, names, {.seed = 5});
  EXPECT_LE(res.max_rel_error, 1e-5) << res.worst;
}

TEST(GradCheck, InjectedAdjointFaultsAreDetected) {
  for (std::uint64_t seed : {11u, 22u}) {
    EXPECT_GT(suite(false, AttentionVariant::kFactoredSoftmax, seed, ad::Fault::kSoftmaxAdjoint).max_rel_error,
              1e-2);
    EXPECT_GT(suite(true, AttentionVariant::kFactoredLinear, seed, ad::Fault::kLayerNormAdjoint).max_rel_error,
              1e-2);
  }
}

TEST(FiniteDiff, RestoresParametersAndChecksCounts) {
  DenseTensor x(Shape{2}, {1.0, -1.0});
  std::vector<DenseTensor*> ptrs{&x};
  auto f = [&]() { return x[0] * x[0] + 3.0 * x[1]; };
  const auto res = finite_diff_check(f, ptrs, {"x"}, {DenseTensor(Shape{2}, {2.0, 3.0})});
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], -1.0);
  EXPECT_LE(res.max_rel_error, 1e-9);
  EXPECT_THROW(finite_diff_check(f, ptrs, {"x"}, {}), std::invalid_argument);
}

TEST(FiniteDiff, WrongGradientReported) {
  DenseTensor x(Shape{1}, {2.0});
  std::vector<DenseTensor*> ptrs{&x};
  const auto res = finite_diff_check([&]() { return x[0] * x[0]; }, ptrs, {"x"}, {DenseTensor(Shape{1}, {3.0})});
  EXPECT_NEAR(res.max_rel_error, 0.25, 1e-9);
  EXPECT_EQ(res.worst, "x[0]");
}

// ---- Adam ----

std::vector<DenseTensor*> ptrs_of(std::vector<DenseTensor>& v) {
  std::vector<DenseTensor*> out;
  for (auto& t : v) out.push_back(&t);
  return out;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<DenseTensor> p{DenseTensor(Shape{3}, {1.0, 2.0, 3.0})};
  Adam adam({}, {Shape{3}});
  for (int i = 0; i < 5; ++i) adam.step(ptrs_of(p), {DenseTensor(Shape{3})});
  EXPECT_EQ(vec(p[0]), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(adam.steps(), 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<DenseTensor> p{DenseTensor(Shape{1}, {0.5})};
  Adam adam({.lr = 0.1}, {Shape{1}});
  adam.step(ptrs_of(p), {DenseTensor(Shape{1}, {1.0})});
  EXPECT_NEAR(p[0][0], 0.5 - 0.1, 1e-8);
}

TEST(Adam, StepSizeIndependentOfGradientScale) {
  for (double g : {1e-3, 1.0, 1e3}) {
    std::vector<DenseTensor> p{DenseTensor(Shape{1})};
    Adam adam({.lr = 0.01}, {Shape{1}});
    adam.step(ptrs_of(p), {DenseTensor(Shape{1}, {-g})});
    EXPECT_NEAR(p[0][0], 0.01, 1e-7);
  }
}

TEST(Adam, DeterministicTrajectories) {
  std::mt19937_64 rng(2);
  const DenseTensor init = random_tensor(Shape{4}, rng);
  std::vector<DenseTensor> grads;
  for (int i = 0; i < 10; ++i) grads.push_back(random_tensor(Shape{4}, rng));
  auto run = [&]() {
    std::vector<DenseTensor> p{init};
    Adam adam({.lr = 0.05}, {Shape{4}});
    for (const auto& g : grads) adam.step(ptrs_of(p), {g});
    return vec(p[0]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdate) {
  std::vector<DenseTensor> p{DenseTensor(Shape{2}, {1.0, 2.0})};
  Adam adam({}, {Shape{2}});
  DenseTensor g(Shape{2}, {0.1, std::numeric_limits<double>::quiet_NaN()});
  try {
    adam.step(ptrs_of(p), {g}, {"w"});
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_NE(std::string(e.what()).find("w[1]"), std::string::npos);
  }
  EXPECT_EQ(vec(p[0]), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(adam.steps(), 0u);
  g[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam.step(ptrs_of(p), {g}), NonFiniteGradient);
}

TEST(Adam, RejectsBadHyperparameters) {
  EXPECT_THROW(Adam({.lr = 0.0}, {}), std::invalid_argument);
  EXPECT_THROW(Adam({.beta1 = 1.0}, {}), std::invalid_argument);
}

// ---- metrics ----

TEST(Metrics, KnownValues) {
  const DenseTensor p(Shape{4}, {1.0, 2.0, 3.0, 4.0}), t(Shape{4}, {1.0, 0.0, 3.0, 6.0});
  EXPECT_EQ(mse(p, p), 0.0);
  EXPECT_EQ(mae(p, p), 0.0);
  EXPECT_DOUBLE_EQ(mse(p, t), 2.0);
  EXPECT_DOUBLE_EQ(mae(p, t), 1.0);
  EXPECT_NEAR(smape(p, t), (2.0 + 0.4) / 4.0, 1e-8);
  EXPECT_THROW(mse(p, DenseTensor(Shape{3})), std::invalid_argument);
  EXPECT_THROW(mse(DenseTensor(Shape{0}), DenseTensor(Shape{0})), std::invalid_argument);
}

TEST(Metrics, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 5u, 8u}) {
    EXPECT_NEAR(cross_entropy(DenseTensor(Shape{3, c}, 0.7), {0, c - 1, 1}), std::log(static_cast<double>(c)),
                1e-14);
  }
  EXPECT_THROW(cross_entropy(DenseTensor(Shape{1, 2}), {2}), std::out_of_range);
}

TEST(Metrics, AucEdgeCases) {
  EXPECT_EQ(auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_EQ(auc({0.9, 0.8, 0.2, 0.1}, {false, false, true, true}), 0.0);
  EXPECT_EQ(auc({0.5, 0.5, 0.5}, {true, false, false}), 0.5);
  // one inversion among 2 x 2 pairs
  EXPECT_EQ(auc({0.1, 0.3, 0.2, 0.9}, {false, false, true, true}), 0.75);
  EXPECT_THROW(auc({0.1, 0.2}, {true, true}), std::invalid_argument);
  EXPECT_THROW(auc({}, {}), std::invalid_argument);
}

TEST(Metrics, AucMatchesPairCountingOracle) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(30);
    std::vector<bool> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = level(rng);  // many ties
      y[i] = coin(rng);
    }
    y[0] = true;
    y[1] = false;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j)
        if (y[i] && !y[j]) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    EXPECT_NEAR(auc(s, y), wins / pairs, 1e-14);
  }
}

TEST(Metrics, AucInvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(40), e(40), c(40);
    std::vector<bool> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = std::normal_distribution<double>()(rng);
      e[i] = std::exp(3.0 * s[i]);
      c[i] = std::pow(s[i], 3) - 7.0;
      y[i] = coin(rng);
    }
    y[0] = true;
    y[1] = false;
    EXPECT_EQ(auc(s, y), auc(e, y));
    EXPECT_EQ(auc(s, y), auc(c, y));
  }
}

TEST(Metrics, ErrorMetricsNonNegativeAndZeroOnlyOnMatch) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseTensor p = random_tensor(Shape{5}, rng), t = random_tensor(Shape{5}, rng);
    EXPECT_GT(mse(p, t), 0.0);
    EXPECT_GT(mae(p, t), 0.0);
    EXPECT_GT(smape(p, t), 0.0);
    EXPECT_EQ(smape(p, p), 0.0);
  }
  EXPECT_LE(smape(DenseTensor(Shape{1}), DenseTensor(Shape{1})), 1e-8);
}

TEST(Metrics, AccuracyAndOneVsRest) {
  const DenseTensor logits(Shape{4, 3}, {3, 0, 0, 0, 2, 0, 0, 0, 1, 1, 0, 0});
  EXPECT_EQ(accuracy(logits, {0, 1, 2, 2}), 0.75);
  const double a = auc_ovr(logits, {0, 1, 2, 2});
  EXPECT_GT(a, 0.5);
  EXPECT_LE(a, 1.0);
  EXPECT_EQ(auc_ovr(DenseTensor(Shape{2, 2}, {1, 0, 0, 1}), {0, 1}), 1.0);
}

// ---- synthetic tasks ----

TEST(ForecastTask, SeedDeterminesData) {
  ForecastTaskSpec spec;
  spec.noise = 0.05;
  const ForecastData a = make_forecast_task(spec), b = make_forecast_task(spec);
  EXPECT_EQ(vec(a.train_x), vec(b.train_x));
  EXPECT_EQ(vec(a.val_y), vec(b.val_y));
  spec.seed = 1;
  EXPECT_NE(vec(make_forecast_task(spec).train_x), vec(a.train_x));
  EXPECT_EQ(a.train_x.shape(), (Shape{256, 4, 16, 1}));
  EXPECT_EQ(a.train_y.shape(), (Shape{256, 4, 4}));
}

TEST(ForecastTask, NoiseFreeTargetsFollowFormula) {
  ForecastTaskSpec spec;
  spec.train = 8;
  spec.val = 4;
  const ForecastData d = make_forecast_task(spec);
  for (std::size_t b = 0; b < 8; ++b) {
    DenseTensor w(Shape{4, 16});
    std::copy(d.train_x.data() + b * 64, d.train_x.data() + (b + 1) * 64, w.data());
    double mean = 0.0;
    for (double v : w.values()) mean += v / 64.0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t n = 0; n < 4; ++n) {
        const double last = w(n, 15);
        const double y = std::pow(0.9, static_cast<double>(s + 1)) * last + last * mean;
        EXPECT_NEAR(d.train_y[(b * 4 + s) * 4 + n], y, 1e-12);
      }
  }
}

TEST(ForecastTask, RejectsDegenerateDims) {
  ForecastTaskSpec spec;
  spec.variates = 0;
  EXPECT_THROW(make_forecast_task(spec), std::invalid_argument);
  spec = {};
  spec.lookback = 1;
  EXPECT_THROW(make_forecast_task(spec), std::invalid_argument);
}

TEST(VoxelTask, ClassIsOctantOfBrightestRegion) {
  VoxelTaskSpec spec;
  spec.noise = 0.0;
  spec.train = 64;
  const VoxelData d = make_voxel_task(spec);
  EXPECT_EQ(d.train_x.shape(), (Shape{64, 8, 8, 8, 1}));
  for (std::size_t b = 0; b < 64; ++b) {
    ASSERT_LT(d.train_y[b], 8u);
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < 512; ++i)
      if (d.train_x[b * 512 + i] > best) {
        best = d.train_x[b * 512 + i];
        arg = i;
      }
    const std::size_t x = arg / 64, y = arg / 8 % 8, z = arg % 8;
    EXPECT_EQ(d.train_y[b], (x >= 4) * 4 + (y >= 4) * 2 + (z >= 4));
  }
  EXPECT_EQ(vec(make_voxel_task(spec).train_x), vec(d.train_x));
  spec.side = 5;
  EXPECT_THROW(make_voxel_task(spec), std::invalid_argument);
}

TEST(TakeRows, GathersLeadingMode) {
  const DenseTensor t = testing::iota_tensor(Shape{3, 2}, 0.0);
  const DenseTensor r = take_rows(t, {2, 0});
  EXPECT_EQ(vec(r), (std::vector<double>{4, 5, 0, 1}));
  EXPECT_THROW(take_rows(t, {3}), std::out_of_range);
}

// ---- training ----

ForecastData small_forecast(std::uint64_t seed) {
  ForecastTaskSpec spec;
  spec.seed = seed;
  return make_forecast_task(spec);
}

TEST(Training, LossHalvesWithinTwoHundredSteps) {
  const ModelConfig cfg = forecast_config();
  for (std::uint64_t seed : kSeeds) {
    TrainOptions opt;
    opt.steps = 200;
    opt.seed = seed;
    opt.eval_every = 200;
    const TrainResult res = train_forecast(cfg, small_forecast(seed), opt);
    EXPECT_LE(res.final_train, 0.5 * res.initial_train) << "seed " << seed;
  }
}

TEST(Training, TwoModeModelBeatsLinearReadoutOnValidation) {
  // The target's cross term is quadratic in the window, out of reach of any
  // affine readout; the closed-form least-squares fit is the strongest linear
  // baseline, so it is compared on held-out windows.
  double hot_mse = 0.0, linear_mse = 0.0;
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    const ForecastData data = small_forecast(seed);
    TrainOptions opt;
    opt.steps = 300;
    opt.seed = seed;
    opt.eval_every = 300;
    opt.adam.lr = 1e-3;
    hot_mse += train_forecast(forecast_config(), data, opt).log.back().val_loss;
    linear_mse += mse(LinearReadout::fit(data.train_x, data.train_y).predict(data.val_x), data.val_y);
  }
  EXPECT_LT(hot_mse, linear_mse);
}

TEST(LinearReadout, RecoversAffineMap) {
  std::mt19937_64 rng(4);
  const DenseTensor x = random_tensor(Shape{20, 3, 1}, rng);
  DenseTensor y(Shape{20, 2});
  for (std::size_t b = 0; b < 20; ++b) {
    y(b, 0) = 2.0 * x[b * 3] - x[b * 3 + 2] + 0.5;
    y(b, 1) = x[b * 3 + 1];
  }
  const LinearReadout r = LinearReadout::fit(x, y);
  EXPECT_LE(mse(r.predict(x), y), 1e-24);
  EXPECT_NEAR(r.weight(3, 0), 0.5, 1e-12);
  EXPECT_THROW(r.predict(DenseTensor(Shape{2, 4})), std::invalid_argument);
}

TEST(Training, DeterministicGivenSeed) {
  const ModelConfig cfg = forecast_config();
  TrainOptions opt;
  opt.steps = 10;
  opt.eval_every = 5;
  const ForecastData data = small_forecast(1);
  const TrainResult a = train_forecast(cfg, data, opt), b = train_forecast(cfg, data, opt);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_mae, b.log[i].val_mae);
  }
  EXPECT_EQ(vec(a.weights.head.weight), vec(b.weights.head.weight));
}

TEST(Training, ClassifierImprovesOnVoxels) {
  ModelConfig cfg;
  cfg.embed.input_dims = {8, 8, 8};
  cfg.embed.stages = {{2, 2, 2}};
  cfg.block.model_dim = 8;
  cfg.block.dims = cfg.embed.token_dims();
  cfg.head.task = TaskKind::kClassify;
  cfg.head.classes = 8;
  cfg.head.pooling = HeadPooling::kFlatten;
  VoxelTaskSpec spec;
  spec.train = 128;
  spec.val = 32;
  TrainOptions opt;
  opt.steps = 60;
  opt.batch = 16;
  opt.eval_every = 60;
  opt.adam.lr = 1e-2;
  const TrainResult res = train_classifier(cfg, make_voxel_task(spec), opt);
  EXPECT_LT(res.final_train, res.initial_train);
  EXPECT_GE(res.log.back().val_auc, 0.5);
}

}  // namespace
}  // namespace hot
