#include "hot/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "hot/linalg.hpp"

namespace hot {

namespace {

void check_same(const DenseTensor& a, const DenseTensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument(std::string(op) + ": shapes " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.numel() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
}

DenseTensor sample_dims(const DenseTensor& t) {
  std::vector<std::size_t> dims(t.shape().dims().begin() + 1, t.shape().dims().end());
  return DenseTensor(Shape(dims));
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<double()>& f, const std::vector<DenseTensor*>& params,
                                  const std::vector<std::string>& names, const std::vector<DenseTensor>& analytic,
                                  const GradCheckOptions& opt) {
  if (params.size() != analytic.size() || params.size() != names.size()) {
    throw std::invalid_argument("finite_diff_check: params, names and gradients differ in count");
  }
  std::mt19937_64 rng(opt.seed);
  GradCheckResult res;
  for (std::size_t p = 0; p < params.size(); ++p) {
    DenseTensor& x = *params[p];
    if (!(analytic[p].shape() == x.shape())) throw std::invalid_argument("finite_diff_check: gradient shape");
    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opt.samples) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.samples);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = x[c];
      x[c] = saved + opt.eps;
      const double fp = f();
      x[c] = saved - opt.eps;
      const double fm = f();
      x[c] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("finite_diff_check: non-finite objective at " + names[p] + "[" +
                                 std::to_string(c) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double a = analytic[p][c];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (rel > res.max_rel_error || res.coords == 0) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        res.worst = names[p] + "[" + std::to_string(c) + "]";
      }
      ++res.coords;
    }
  }
  return res;
}

GradCheckResult gradient_check(const LossBuilder& build, std::vector<DenseTensor> params,
                               const std::vector<std::string>& names, const GradCheckOptions& opt) {
  std::vector<DenseTensor> analytic;
  {
    ad::Tape tape;
    tape.set_fault(opt.fault);
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    const ad::Var loss = build(tape, leaves);
    tape.backward(loss);
    for (ad::Var v : leaves) analytic.push_back(tape.grad(v));
  }
  auto f = [&]() {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.constant(p));
    return build(tape, leaves).value()[0];
  };
  std::vector<DenseTensor*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return finite_diff_check(f, ptrs, names, analytic, opt);
}

namespace {

DenseTensor gaussian(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseTensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

Shape token_shape(const GradSuiteShape& s) {
  std::vector<std::size_t> dims = s.dims;
  dims.push_back(s.model_dim);
  return Shape(dims);
}

}  // namespace

GradCheckResult attention_gradcheck(AttentionVariant v, const GradSuiteShape& shape, const GradCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  const AttentionWeights w = AttentionWeights::glorot(shape.model_dim, shape.heads, rng);
  const FeatureMap fm({shape.features, opt.seed, w.head_dim()});
  std::vector<DenseTensor> params{gaussian(token_shape(shape), rng)};
  std::vector<std::string> names{"x"};
  for (std::size_t h = 0; h < shape.heads; ++h) {
    const auto& hw = w.head(h);
    params.insert(params.end(), {hw.query, hw.key, hw.value, hw.output});
    for (const char* n : {"query", "key", "value", "output"}) names.push_back("h" + std::to_string(h) + "." + n);
  }
  const DenseTensor r = gaussian(token_shape(shape), rng);
  LossBuilder build = [&](ad::Tape&, const std::vector<ad::Var>& p) {
    std::vector<ad::HeadVars> heads;
    for (std::size_t h = 0; h < shape.heads; ++h) heads.push_back({p[1 + 4 * h], p[2 + 4 * h], p[3 + 4 * h], p[4 + 4 * h]});
    return ad::dot_constant(ad::attention(p[0], heads, v, &fm, AttentionOptions{}), r);
  };
  return gradient_check(build, params, names, opt);
}

GradCheckResult block_gradcheck(AttentionVariant v, const GradSuiteShape& shape, const GradCheckOptions& opt) {
  HOTBlockConfig cfg;
  cfg.dims = shape.dims;
  cfg.model_dim = shape.model_dim;
  cfg.heads = shape.heads;
  cfg.variant = v;
  cfg.features = shape.features;
  cfg.feature_seed = opt.seed;
  cfg.ffn_dim = shape.ffn_dim;
  std::mt19937_64 rng(opt.seed);
  HOTBlockWeights w = HOTBlockWeights::glorot(cfg, rng);
  std::vector<DenseTensor> params{gaussian(token_shape(shape), rng)};
  std::vector<std::string> names{"x"};
  for (auto& p : named_parameters(w)) {
    DenseTensor t = *p.tensor;
    if (p.name.find("norm") != std::string::npos)
      t = add(t, scaled(gaussian(t.shape(), rng), 0.3));
    params.push_back(std::move(t));
    names.push_back(p.name);
  }
  const DenseTensor r = gaussian(token_shape(shape), rng);
  LossBuilder build = [&](ad::Tape&, const std::vector<ad::Var>& p) {
    ad::BlockVars b;
    std::size_t i = 1;
    for (std::size_t h = 0; h < cfg.heads; ++h, i += 4) b.heads.push_back({p[i], p[i + 1], p[i + 2], p[i + 3]});
    b.norm1_gamma = p[i++];
    b.norm1_beta = p[i++];
    b.ffn_in_weight = p[i++];
    b.ffn_in_bias = p[i++];
    b.ffn_out_weight = p[i++];
    b.ffn_out_bias = p[i++];
    b.norm2_gamma = p[i++];
    b.norm2_beta = p[i++];
    return ad::dot_constant(ad::block_forward(p[0], cfg, b), r);
  };
  return gradient_check(build, params, names, opt);
}

GradCheckResult quadratic_gradcheck(std::size_t n, const GradCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  LossBuilder build = [](ad::Tape&, const std::vector<ad::Var>& p) {
    return ad::dot_constant(ad::matmul(ad::transpose(p[0]), p[0]), DenseTensor(Shape{1, 1}, 0.5));
  };
  return gradient_check(build, {gaussian(Shape{n, 1}, rng)}, {"x"}, opt);
}

Adam::Adam(const AdamOptions& opt, const std::vector<Shape>& shapes) : opt_(opt) {
  if (!(opt.lr > 0.0) || opt.beta1 < 0.0 || opt.beta1 >= 1.0 || opt.beta2 < 0.0 || opt.beta2 >= 1.0 ||
      !(opt.eps > 0.0)) {
    throw std::invalid_argument("Adam: invalid hyperparameters");
  }
  for (const auto& s : shapes) {
    m_.emplace_back(s);
    v_.emplace_back(s);
  }
}

void Adam::step(const std::vector<DenseTensor*>& params, const std::vector<DenseTensor>& grads,
                const std::vector<std::string>& names) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam: parameter count differs from optimiser state");
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (!(grads[p].shape() == m_[p].shape()) || !(params[p]->shape() == m_[p].shape())) {
      throw std::invalid_argument("Adam: shape mismatch for parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < grads[p].numel(); ++i) {
      if (!std::isfinite(grads[p][i])) {
        const std::string name = p < names.size() ? names[p] : "#" + std::to_string(p);
        throw NonFiniteGradient("Adam: non-finite gradient " + std::to_string(grads[p][i]) + " in " + name +
                                "[" + std::to_string(i) + "] at step " + std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < grads.size(); ++p) {
    DenseTensor& x = *params[p];
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double g = grads[p][i];
      m_[p][i] = opt_.beta1 * m_[p][i] + (1.0 - opt_.beta1) * g;
      v_[p][i] = opt_.beta2 * v_[p][i] + (1.0 - opt_.beta2) * g * g;
      x[i] -= opt_.lr * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + opt_.eps);
    }
  }
}

double mse(const DenseTensor& pred, const DenseTensor& target) {
  check_same(pred, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.numel());
}

double mae(const DenseTensor& pred, const DenseTensor& target) {
  check_same(pred, target, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.numel());
}

double smape(const DenseTensor& pred, const DenseTensor& target) {
  check_same(pred, target, "smape");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i)
    s += 2.0 * std::abs(pred[i] - target[i]) / (std::abs(pred[i]) + std::abs(target[i]) + kSmapeEps);
  return s / static_cast<double>(pred.numel());
}

double cross_entropy(const DenseTensor& logits, const std::vector<std::size_t>& labels) {
  if (labels.empty()) throw std::invalid_argument("cross_entropy: empty input");
  ad::Tape tape;
  return ad::cross_entropy(tape.constant(logits), labels).value()[0];
}

double accuracy(const DenseTensor& logits, const std::vector<std::size_t>& labels) {
  if (labels.empty() || logits.order() != 2 || logits.rows() != labels.size()) {
    throw std::invalid_argument("accuracy: shape mismatch or empty input");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * logits.cols();
    hits += static_cast<std::size_t>(std::max_element(row, row + logits.cols()) - row) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.empty() || scores.size() != positive.size()) throw std::invalid_argument("auc: empty or mismatched");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t r = i; r < j; ++r) rank[order[r]] = avg;
    i = j;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw std::invalid_argument("auc: need both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auc_ovr(const DenseTensor& scores, const std::vector<std::size_t>& labels) {
  if (scores.order() != 2 || scores.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("auc_ovr: shape mismatch or empty input");
  }
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(labels.size());
    std::vector<bool> pos(labels.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores(i, c);
      pos[i] = labels[i] == c;
      count += pos[i];
    }
    if (count == 0 || count == labels.size()) continue;
    total += auc(s, pos);
    ++classes;
  }
  if (classes == 0) throw std::invalid_argument("auc_ovr: need at least two classes present");
  return total / static_cast<double>(classes);
}

DenseTensor forecast_target(const DenseTensor& window, const ForecastTaskSpec& spec) {
  const std::size_t n = window.rows(), t = window.cols();
  double m = 0.0;
  for (double v : window.values()) m += v;
  m /= static_cast<double>(n * t);
  DenseTensor y(Shape{spec.horizon, n});
  for (std::size_t s = 0; s < spec.horizon; ++s)
    for (std::size_t v = 0; v < n; ++v) {
      const double last = window(v, t - 1);
      y(s, v) = std::pow(spec.rho, static_cast<double>(s + 1)) * last + spec.gamma * last * m;
    }
  return y;
}

ForecastData make_forecast_task(const ForecastTaskSpec& spec) {
  if (spec.variates == 0 || spec.lookback < 2 || spec.horizon == 0 || spec.train == 0 || spec.val == 0) {
    throw std::invalid_argument("forecast task: degenerate dimensions");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> amp(0.5, 1.5), period(6.0, 12.0), phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = spec.variates, t = spec.lookback, s = spec.horizon;
  auto fill = [&](std::size_t count, DenseTensor& xs, DenseTensor& ys) {
    xs = DenseTensor(Shape{count, n, t, 1});
    ys = DenseTensor(Shape{count, s, n});
    for (std::size_t b = 0; b < count; ++b) {
      std::vector<double> level(n);
      for (double& a : level) a = normal(rng);
      const double a_t = amp(rng), p_t = period(rng), ph = phase(rng);
      DenseTensor window(Shape{n, t});
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t k = 0; k < t; ++k) {
          const double seasonal = a_t * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / p_t + ph);
          window(v, k) = level[v] + seasonal + spec.sigma * normal(rng);
        }
      std::copy(window.values().begin(), window.values().end(), xs.data() + b * n * t);
      const DenseTensor y = forecast_target(window, spec);
      for (std::size_t i = 0; i < s * n; ++i) ys[b * s * n + i] = y[i] + spec.noise * normal(rng);
    }
  };
  ForecastData d;
  fill(spec.train, d.train_x, d.train_y);
  fill(spec.val, d.val_x, d.val_y);
  return d;
}

VoxelData make_voxel_task(const VoxelTaskSpec& spec) {
  if (spec.side < 4 || spec.side % 2 != 0 || spec.train == 0 || spec.val == 0) {
    throw std::invalid_argument("voxel task: side must be even and >= 4, splits non-empty");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double half = static_cast<double>(spec.side) / 2.0;
  std::uniform_real_distribution<double> offset(0.5, half - 0.5);
  std::uniform_int_distribution<std::size_t> octant(0, 7);
  const std::size_t w = spec.side, vol = w * w * w;
  auto fill = [&](std::size_t count, DenseTensor& xs, std::vector<std::size_t>& ys) {
    xs = DenseTensor(Shape{count, w, w, w, 1});
    ys.resize(count);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t cls = octant(rng);
      double c[3];
      for (int a = 0; a < 3; ++a) {
        const bool upper = (cls >> (2 - a)) & 1u;
        c[a] = upper ? half + offset(rng) : half - offset(rng);
      }
      for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t k = 0; k < w; ++k) {
            const double dx = static_cast<double>(i) + 0.5 - c[0], dy = static_cast<double>(j) + 0.5 - c[1],
                         dz = static_cast<double>(k) + 0.5 - c[2];
            xs[b * vol + (i * w + j) * w + k] =
                std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * 1.5 * 1.5)) + spec.noise * normal(rng);
          }
      ys[b] = cls;
    }
  };
  VoxelData d;
  fill(spec.train, d.train_x, d.train_y);
  fill(spec.val, d.val_x, d.val_y);
  return d;
}

DenseTensor take_rows(const DenseTensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t n = t.numel() / t.dim(0);
  std::vector<std::size_t> dims(t.shape().dims().begin(), t.shape().dims().end());
  dims[0] = rows.size();
  DenseTensor out{Shape(dims)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= t.dim(0)) throw std::out_of_range("take_rows: index past leading mode");
    std::copy(t.data() + rows[r] * n, t.data() + (rows[r] + 1) * n, out.data() + r * n);
  }
  return out;
}

namespace {

DenseTensor design_matrix(const DenseTensor& inputs) {
  const std::size_t b = inputs.dim(0), f = inputs.numel() / b;
  DenseTensor a(Shape{b, f + 1});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(inputs.data() + i * f, inputs.data() + (i + 1) * f, a.data() + i * (f + 1));
    a(i, f) = 1.0;
  }
  return a;
}

}  // namespace

LinearReadout LinearReadout::fit(const DenseTensor& inputs, const DenseTensor& targets) {
  if (inputs.numel() == 0 || inputs.dim(0) != targets.dim(0)) throw std::invalid_argument("LinearReadout: batch mismatch");
  const std::size_t b = targets.dim(0);
  LinearReadout r;
  r.target_dims.assign(targets.shape().dims().begin() + 1, targets.shape().dims().end());
  r.weight = linalg::matmul(linalg::pinv(design_matrix(inputs)), targets.reshaped(Shape{b, targets.numel() / b}));
  return r;
}

DenseTensor LinearReadout::predict(const DenseTensor& inputs) const {
  const DenseTensor a = design_matrix(inputs);
  if (a.cols() != weight.rows()) throw std::invalid_argument("LinearReadout: feature count mismatch");
  std::vector<std::size_t> dims{inputs.dim(0)};
  dims.insert(dims.end(), target_dims.begin(), target_dims.end());
  return linalg::matmul(a, weight).reshaped(Shape(dims));
}

DenseTensor predict(const DenseTensor& inputs, const ModelConfig& cfg, const ModelWeights& w) {
  const std::size_t b = inputs.dim(0), n = inputs.numel() / b;
  std::vector<std::size_t> dims{b};
  for (std::size_t d : cfg.head.output_shape()) dims.push_back(d);
  DenseTensor out{Shape(dims)};
  const std::size_t o = cfg.head.outputs();
  DenseTensor sample = sample_dims(inputs);
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(inputs.data() + i * n, inputs.data() + (i + 1) * n, sample.data());
    const DenseTensor y = model_forward(sample, cfg, w);
    std::copy(y.values().begin(), y.values().end(), out.data() + i * o);
  }
  return out;
}

namespace {

// Shared loop: `loss_of(tape, vars, rows)` records the batch loss and
// `evaluate(weights, row)` fills the metric columns of a log row.
template <typename LossOf, typename Evaluate>
TrainResult train_loop(const ModelConfig& cfg, std::size_t train_size, const TrainOptions& opt, LossOf loss_of,
                       Evaluate evaluate) {
  cfg.validate();
  if (opt.batch == 0 || opt.eval_every == 0) throw std::invalid_argument("train: batch and eval_every must be >= 1");
  std::mt19937_64 rng(opt.seed);
  TrainResult res;
  res.weights = ModelWeights::glorot(cfg, rng);
  res.parameters = parameter_count(res.weights);
  auto params = named_parameters(res.weights);
  std::vector<Shape> shapes;
  std::vector<std::string> names;
  std::vector<DenseTensor*> ptrs;
  for (const auto& p : params) {
    shapes.push_back(p.tensor->shape());
    names.push_back(p.name);
    ptrs.push_back(p.tensor);
  }
  Adam adam(opt.adam, shapes);
  std::vector<std::size_t> order(train_size);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = train_size;
  const auto start = std::chrono::steady_clock::now();
  double best_mae = 0.0, best_loss = 0.0;
  auto log_row = [&](std::size_t step, double batch_loss) {
    TrainLogRow row;
    row.step = step;
    row.batch_loss = batch_loss;
    evaluate(res.weights, row);
    row.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    // classifiers select on validation error rate
    const double metric = cfg.head.task == TaskKind::kForecast ? row.val_mae : 1.0 - row.val_acc;
    if (res.log.empty() || metric < best_mae) {
      best_mae = metric;
      res.best_step_by_mae = step;
    }
    if (res.log.empty() || row.val_loss < best_loss) {
      best_loss = row.val_loss;
      res.best_step_by_loss = step;
    }
    res.log.push_back(row);
  };
  log_row(0, std::nan(""));
  res.initial_train = res.log.front().train_loss;
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    std::vector<std::size_t> rows;
    while (rows.size() < std::min(opt.batch, train_size)) {
      if (cursor == train_size) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    ad::Tape tape;
    const ad::ModelVars vars = ad::bind_model(tape, res.weights);
    const ad::Var loss = loss_of(tape, vars, rows);
    tape.backward(loss);
    std::vector<DenseTensor> grads;
    for (ad::Var v : vars.params) grads.push_back(tape.grad(v));
    adam.step(ptrs, grads, names);
    if (step % opt.eval_every == 0 || step == opt.steps) log_row(step, loss.value()[0]);
  }
  res.final_train = res.log.back().train_loss;
  return res;
}

}  // namespace

TrainResult train_forecast(const ModelConfig& cfg, const ForecastData& data, const TrainOptions& opt) {
  if (cfg.head.task != TaskKind::kForecast) throw std::invalid_argument("train_forecast: head is not a forecast head");
  const std::size_t outputs = cfg.head.outputs();
  auto loss_of = [&](ad::Tape& tape, const ad::ModelVars& vars, const std::vector<std::size_t>& rows) {
    const DenseTensor x = take_rows(data.train_x, rows);
    const DenseTensor y = take_rows(data.train_y, rows).reshaped(Shape{rows.size(), outputs});
    return ad::mse(ad::model_forward(tape, x, cfg, vars), y);
  };
  auto evaluate = [&](const ModelWeights& w, TrainLogRow& row) {
    row.train_loss = mse(predict(data.train_x, cfg, w), data.train_y);
    const DenseTensor pv = predict(data.val_x, cfg, w);
    row.val_loss = mse(pv, data.val_y);
    row.val_mae = mae(pv, data.val_y);
    row.val_smape = smape(pv, data.val_y);
  };
  return train_loop(cfg, data.train_x.dim(0), opt, loss_of, evaluate);
}

TrainResult train_classifier(const ModelConfig& cfg, const VoxelData& data, const TrainOptions& opt) {
  if (cfg.head.task != TaskKind::kClassify) throw std::invalid_argument("train_classifier: head is not a classifier");
  auto loss_of = [&](ad::Tape& tape, const ad::ModelVars& vars, const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> labels;
    for (std::size_t r : rows) labels.push_back(data.train_y[r]);
    return ad::cross_entropy(ad::model_forward(tape, take_rows(data.train_x, rows), cfg, vars), labels);
  };
  auto evaluate = [&](const ModelWeights& w, TrainLogRow& row) {
    row.train_loss = cross_entropy(predict(data.train_x, cfg, w), data.train_y);
    const DenseTensor lv = predict(data.val_x, cfg, w);
    row.val_loss = cross_entropy(lv, data.val_y);
    row.val_acc = accuracy(lv, data.val_y);
    row.val_auc = auc_ovr(softmax_rows(lv), data.val_y);
  };
  return train_loop(cfg, data.train_x.dim(0), opt, loss_of, evaluate);
}

}  // namespace hot
