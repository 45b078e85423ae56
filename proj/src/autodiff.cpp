#include "hot/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "hot/layer.hpp"
#include "hot/linalg.hpp"

namespace hot::ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) throw std::invalid_argument("autodiff: variable not bound to a tape");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("autodiff: variables from different tapes");
}

DenseTensor ones_like(const DenseTensor& t, double v) { return DenseTensor(t.shape(), v); }

}  // namespace

const DenseTensor& Var::value() const { return tape_of(*this).value(*this); }

Var Tape::leaf(DenseTensor value) {
  nodes_.push_back({std::move(value), {}, false, true, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(DenseTensor value) {
  nodes_.push_back({std::move(value), {}, false, false, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(DenseTensor value, const std::vector<Var>& inputs, Backward backward) {
  if (consumed_) throw TapeConsumedError("autodiff: tape already consumed by backward()");
  bool needs = false;
  for (Var v : inputs) {
    if (v.tape != this) throw std::invalid_argument("autodiff: input recorded on another tape");
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back({std::move(value), {}, false, needs, needs ? std::move(backward) : nullptr});
  return {this, nodes_.size() - 1};
}

DenseTensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? n.grad : DenseTensor(n.value.shape());
}

void Tape::accumulate(Var v, const DenseTensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (!(g.shape() == n.value.shape())) {
    throw std::logic_error("autodiff: adjoint shape " + g.shape().str() + " vs value " + n.value.shape().str());
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    double* d = n.grad.data();
    for (std::size_t i = 0; i < g.numel(); ++i) d[i] += g[i];
  }
}

void Tape::backward(Var loss) {
  if (consumed_) throw TapeConsumedError("autodiff: backward() called twice on one tape");
  if (loss.tape != this || nodes_.at(loss.id).value.numel() != 1) {
    throw std::invalid_argument("autodiff: backward() needs a scalar recorded on this tape");
  }
  consumed_ = true;
  accumulate(loss, DenseTensor(nodes_[loss.id].value.shape(), 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Var add(Var a, Var b) {
  same_tape(a, b);
  return tape_of(a).record(hot::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, const DenseTensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var subtract(Var a, Var b) {
  same_tape(a, b);
  return tape_of(a).record(hot::subtract(a.value(), b.value()), {a, b}, [a, b](Tape& t, const DenseTensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, scaled(g, -1.0));
  });
}

Var scale(Var a, double c) {
  return tape_of(a).record(scaled(a.value(), c), {a},
                           [a, c](Tape& t, const DenseTensor& g) { t.accumulate(a, scaled(g, c)); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape_of(a).record(DenseTensor(Shape{1}, s), {a}, [a](Tape& t, const DenseTensor& g) {
    t.accumulate(a, ones_like(a.value(), g[0]));
  });
}

Var dot_constant(Var a, const DenseTensor& r) {
  if (!(a.shape() == r.shape())) throw std::invalid_argument("dot_constant: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < r.numel(); ++i) s += a.value()[i] * r[i];
  return tape_of(a).record(DenseTensor(Shape{1}, s), {a},
                           [a, r](Tape& t, const DenseTensor& g) { t.accumulate(a, scaled(r, g[0])); });
}

Var reshape(Var a, const Shape& s) {
  const Shape original = a.shape();
  return tape_of(a).record(a.value().reshaped(s), {a}, [a, original](Tape& t, const DenseTensor& g) {
    t.accumulate(a, g.reshaped(original));
  });
}

Var permute(Var a, const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t m = 0; m < perm.size(); ++m) inverse.at(perm[m]) = m;
  return tape_of(a).record(hot::permute(a.value(), perm), {a}, [a, inverse](Tape& t, const DenseTensor& g) {
    t.accumulate(a, hot::permute(g, inverse));
  });
}

Var transpose(Var m) {
  return tape_of(m).record(linalg::transpose(m.value()), {m}, [m](Tape& t, const DenseTensor& g) {
    t.accumulate(m, linalg::transpose(g));
  });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  return tape_of(a).record(linalg::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const DenseTensor& g) {
    t.accumulate(a, linalg::matmul_nt(g, b.value()));
    t.accumulate(b, linalg::matmul(linalg::transpose(a.value()), g));
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  return tape_of(a).record(linalg::matmul_nt(a.value(), b.value()), {a, b},
                           [a, b](Tape& t, const DenseTensor& g) {
                             t.accumulate(a, linalg::matmul(g, b.value()));
                             t.accumulate(b, linalg::matmul(linalg::transpose(g), a.value()));
                           });
}

Var mode_product(Var x, Var a, std::size_t mode) {
  same_tape(x, a);
  return tape_of(x).record(hot::mode_product(x.value(), a.value(), mode), {x, a},
                           [x, a, mode](Tape& t, const DenseTensor& g) {
                             if (t.requires_grad(x))
                               t.accumulate(x, hot::mode_product(g, linalg::transpose(a.value()), mode));
                             if (t.requires_grad(a))
                               t.accumulate(a, linalg::matmul_nt(matricize(g, mode), matricize(x.value(), mode)));
                           });
}

Var project_last(Var x, Var w) {
  same_tape(x, w);
  return tape_of(x).record(hot::project_last(x.value(), w.value()), {x, w}, [x, w](Tape& t, const DenseTensor& g) {
    const std::size_t d = w.value().rows(), e = w.value().cols();
    const DenseTensor gf = g.reshaped(Shape{g.numel() / e, e});
    if (t.requires_grad(x)) t.accumulate(x, linalg::matmul_nt(gf, w.value()).reshaped(x.shape()));
    if (t.requires_grad(w)) {
      const DenseTensor xf = x.value().reshaped(Shape{x.value().numel() / d, d});
      t.accumulate(w, linalg::matmul(linalg::transpose(xf), gf));
    }
  });
}

Var add_bias_last(Var x, Var b) {
  same_tape(x, b);
  const std::size_t d = b.value().numel();
  if (x.shape()[x.shape().order() - 1] != d) throw std::invalid_argument("add_bias_last: width");
  DenseTensor y = x.value();
  for (std::size_t r = 0; r < y.numel() / d; ++r)
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] += b.value()[c];
  return tape_of(x).record(std::move(y), {x, b}, [x, b, d](Tape& t, const DenseTensor& g) {
    t.accumulate(x, g);
    DenseTensor gb(b.shape());
    for (std::size_t r = 0; r < g.numel() / d; ++r)
      for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
    t.accumulate(b, gb);
  });
}

Var affine_last(Var x, Var w, Var b) { return add_bias_last(project_last(x, w), b); }

Var pool_except(Var x, std::size_t mode, Pooling pooling) {
  const DenseTensor& v = x.value();
  DenseTensor y = hot::pool_except(v, mode, pooling);
  const std::size_t k = v.order() - 1;
  const double factor = pooling == Pooling::kMean
                            ? static_cast<double>(v.dim(mode)) / static_cast<double>(v.numel() / v.dim(k))
                            : 1.0;
  return tape_of(x).record(std::move(y), {x}, [x, mode, k, factor](Tape& t, const DenseTensor& g) {
    DenseTensor gx(x.shape());
    const std::size_t dh = g.cols();
    IndexCounter it(x.shape());
    std::size_t flat = 0;
    do {
      gx[flat++] = g[it.index()[mode] * dh + it.index()[k]] * factor;
    } while (it.next());
    t.accumulate(x, gx);
  });
}

Var softmax_rows(Var m) {
  DenseTensor p = hot::softmax_rows(m.value());
  return tape_of(m).record(p, {m}, [m, p](Tape& t, const DenseTensor& g) {
    DenseTensor gx(p.shape());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) inner += g(i, j) * p(i, j);
      if (t.fault() == Fault::kSoftmaxAdjoint) inner = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) gx(i, j) = p(i, j) * (g(i, j) - inner);
    }
    t.accumulate(m, gx);
  });
}

Var feature_map(Var x, const FeatureMap& fm, const std::vector<double>& shift) {
  DenseTensor phi = fm.apply(x.value(), shift);
  DenseTensor omega = fm.omega();
  return tape_of(x).record(phi, {x}, [x, phi, omega](Tape& t, const DenseTensor& g) {
    const DenseTensor& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols(), m = phi.cols();
    DenseTensor gx(xv.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < m; ++r) {
        const double a = g(i, r) * phi(i, r);
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) gx(i, c) += a * (omega(r, c) - xv(i, c));
      }
    t.accumulate(x, gx);
  });
}

Var floor_reciprocal(Var z, double floor, KernelDiagnostics* diag) {
  const DenseTensor& zv = z.value();
  DenseTensor y(zv.shape());
  std::vector<bool> live(zv.numel());
  for (std::size_t i = 0; i < zv.numel(); ++i) {
    live[i] = zv[i] >= floor;
    if (diag) {
      ++diag->rows;
      if (!live[i]) ++diag->floored;
    }
    y[i] = 1.0 / (live[i] ? zv[i] : floor);
  }
  return tape_of(z).record(y, {z}, [z, y, live](Tape& t, const DenseTensor& g) {
    DenseTensor gz(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i)
      if (live[i]) gz[i] = -g[i] * y[i] * y[i];
    t.accumulate(z, gz);
  });
}

Var scale_mode(Var x, Var w, std::size_t mode) {
  same_tape(x, w);
  DenseTensor y = hot::scale_mode(x.value(), w.value().values(), mode);
  return tape_of(x).record(std::move(y), {x, w}, [x, w, mode](Tape& t, const DenseTensor& g) {
    if (t.requires_grad(x)) t.accumulate(x, hot::scale_mode(g, w.value().values(), mode));
    if (t.requires_grad(w)) {
      DenseTensor gw(w.shape());
      IndexCounter it(x.shape());
      std::size_t flat = 0;
      do {
        gw[it.index()[mode]] += g[flat] * x.value()[flat];
        ++flat;
      } while (it.next());
      t.accumulate(w, gw);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const DenseTensor& xv = x.value();
  const std::size_t d = xv.dim(xv.order() - 1), rows = xv.numel() / d;
  DenseTensor xhat(xv.shape());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) xhat[r * d + c] = (in[c] - mean) * inv[r];
  }
  DenseTensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] = xhat[r * d + c] * gamma.value()[c] + beta.value()[c];
  return tape_of(x).record(std::move(y), {x, gamma, beta},
                           [x, gamma, beta, xhat, inv, d, rows](Tape& t, const DenseTensor& g) {
                             DenseTensor gx(x.shape()), gg(gamma.shape()), gb(beta.shape());
                             const double n = static_cast<double>(d);
                             for (std::size_t r = 0; r < rows; ++r) {
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t c = 0; c < d; ++c) {
                                 const double gh = g[r * d + c] * gamma.value()[c];
                                 s1 += gh;
                                 s2 += gh * xhat[r * d + c];
                                 gg[c] += g[r * d + c] * xhat[r * d + c];
                                 gb[c] += g[r * d + c];
                               }
                               if (t.fault() == Fault::kLayerNormAdjoint) s2 = 0.0;
                               for (std::size_t c = 0; c < d; ++c) {
                                 const double gh = g[r * d + c] * gamma.value()[c];
                                 gx[r * d + c] = inv[r] / n * (n * gh - s1 - xhat[r * d + c] * s2);
                               }
                             }
                             t.accumulate(x, gx);
                             t.accumulate(gamma, gg);
                             t.accumulate(beta, gb);
                           });
}

Var gelu(Var x) {
  return tape_of(x).record(hot::gelu(x.value()), {x}, [x](Tape& t, const DenseTensor& g) {
    DenseTensor gx(x.shape());
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const double v = x.value()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      gx[i] = g[i] * (cdf + v * inv_sqrt2pi * std::exp(-0.5 * v * v));
    }
    t.accumulate(x, gx);
  });
}

Var rotary(Var x, const RotaryConfig& cfg) {
  if (!cfg.any()) return x;
  std::vector<double> angles = rotary_angles(x.shape(), cfg);
  DenseTensor y = rotate_pairs(x.value(), angles, 1.0);
  return tape_of(x).record(std::move(y), {x}, [x, angles](Tape& t, const DenseTensor& g) {
    t.accumulate(x, rotate_pairs(g, angles, -1.0));
  });
}

Var patchify(Var x, const std::vector<std::size_t>& patch) {
  DenseTensor index(x.shape());
  for (std::size_t i = 0; i < index.numel(); ++i) index[i] = static_cast<double>(i);
  const DenseTensor map = hot::patchify(index, patch);
  DenseTensor y(map.shape());
  for (std::size_t o = 0; o < map.numel(); ++o) y[o] = x.value()[static_cast<std::size_t>(map[o])];
  return tape_of(x).record(std::move(y), {x}, [x, map](Tape& t, const DenseTensor& g) {
    DenseTensor gx(x.shape());
    for (std::size_t o = 0; o < map.numel(); ++o) gx[static_cast<std::size_t>(map[o])] += g[o];
    t.accumulate(x, gx);
  });
}

Var select(Var x, std::size_t index) {
  const Shape& s = x.shape();
  if (index >= s[0]) throw std::out_of_range("select: index past leading mode");
  std::vector<std::size_t> dims(s.dims().begin() + 1, s.dims().end());
  const Shape part(dims);
  const std::size_t n = part.numel();
  DenseTensor y(part, std::span<const double>(x.value().data() + index * n, n));
  return tape_of(x).record(std::move(y), {x}, [x, index, n](Tape& t, const DenseTensor& g) {
    DenseTensor gx(x.shape());
    std::copy(g.values().begin(), g.values().end(), gx.data() + index * n);
    t.accumulate(x, gx);
  });
}

Var stack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: nothing to stack");
  const Shape part = parts.front().shape();
  std::vector<std::size_t> dims{parts.size()};
  dims.insert(dims.end(), part.dims().begin(), part.dims().end());
  DenseTensor y{Shape(dims)};
  const std::size_t n = part.numel();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    same_tape(parts[i], parts.front());
    if (!(parts[i].shape() == part)) throw std::invalid_argument("stack: shapes differ");
    std::copy(parts[i].value().values().begin(), parts[i].value().values().end(), y.data() + i * n);
  }
  return tape_of(parts.front()).record(std::move(y), parts, [parts, part, n](Tape& t, const DenseTensor& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!t.requires_grad(parts[i])) continue;
      t.accumulate(parts[i], DenseTensor(part, std::span<const double>(g.data() + i * n, n)));
    }
  });
}

Var mse(Var pred, const DenseTensor& target) {
  if (!(pred.shape() == target.shape())) throw std::invalid_argument("mse: shape mismatch");
  const std::size_t n = target.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (pred.value()[i] - target[i]) * (pred.value()[i] - target[i]);
  return tape_of(pred).record(DenseTensor(Shape{1}, s / static_cast<double>(n)), {pred},
                              [pred, target, n](Tape& t, const DenseTensor& g) {
                                DenseTensor gp(target.shape());
                                for (std::size_t i = 0; i < n; ++i)
                                  gp[i] = g[0] * 2.0 * (pred.value()[i] - target[i]) / static_cast<double>(n);
                                t.accumulate(pred, gp);
                              });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  const DenseTensor& z = logits.value();
  if (z.order() != 2 || z.rows() != labels.size()) throw std::invalid_argument("cross_entropy: shape mismatch");
  const DenseTensor p = hot::softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= z.cols()) throw std::out_of_range("cross_entropy: label out of range");
    double mx = z(i, 0);
    for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
    double se = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) se += std::exp(z(i, j) - mx);
    loss += mx + std::log(se) - z(i, labels[i]);
  }
  const double b = static_cast<double>(labels.size());
  return tape_of(logits).record(DenseTensor(Shape{1}, loss / b), {logits},
                                [logits, p, labels, b](Tape& t, const DenseTensor& g) {
                                  DenseTensor gz = p;
                                  for (std::size_t i = 0; i < labels.size(); ++i) gz(i, labels[i]) -= 1.0;
                                  t.accumulate(logits, scaled(gz, g[0] / b));
                                });
}

}  // namespace hot::ad
