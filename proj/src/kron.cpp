#include "hot/kron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hot/linalg.hpp"

namespace hot {

KronFactors::KronFactors(std::vector<DenseTensor> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw std::invalid_argument("KronFactors: empty factor list");
  for (const auto& f : factors_) {
    if (f.order() != 2 || f.rows() != f.cols()) {
      throw std::invalid_argument("KronFactors: factor " + f.shape().str() + " is not square");
    }
  }
}

std::vector<std::size_t> KronFactors::dims() const {
  std::vector<std::size_t> d;
  for (const auto& f : factors_) d.push_back(f.rows());
  return d;
}

std::size_t KronFactors::side() const {
  std::size_t s = 1;
  for (const auto& f : factors_) s *= f.rows();
  return s;
}

KronSum::KronSum(std::vector<KronFactors> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw std::invalid_argument("KronSum: rank must be >= 1");
  const auto d = terms_.front().dims();
  for (const auto& t : terms_) {
    if (t.dims() != d) throw std::invalid_argument("KronSum: inconsistent term shapes");
  }
}

DenseTensor kron(const DenseTensor& a, const DenseTensor& b) {
  if (a.order() != 2 || b.order() != 2) throw std::invalid_argument("kron: expected matrices");
  const std::size_t ma = a.rows(), na = a.cols(), mb = b.rows(), nb = b.cols();
  DenseTensor out(Shape{ma * mb, na * nb});
  for (std::size_t ia = 0; ia < ma; ++ia)
    for (std::size_t ja = 0; ja < na; ++ja) {
      const double x = a(ia, ja);
      for (std::size_t ib = 0; ib < mb; ++ib)
        for (std::size_t jb = 0; jb < nb; ++jb) out(ia * mb + ib, ja * nb + jb) = x * b(ib, jb);
    }
  return out;
}

DenseTensor materialize(const KronFactors& f) {
  DenseTensor acc = f.factors().front();
  for (std::size_t i = 1; i < f.order(); ++i) acc = kron(acc, f.factors()[i]);
  return acc;
}

DenseTensor materialize(const KronSum& ks) {
  DenseTensor acc = materialize(ks.terms().front());
  for (std::size_t r = 1; r < ks.rank(); ++r) acc = add(acc, materialize(ks.terms()[r]));
  return acc;
}

DenseTensor apply_factors(const DenseTensor& v, const KronFactors& f) {
  if (v.order() != f.order() + 1) {
    throw std::invalid_argument("apply_factors: tensor " + v.shape().str() + " needs " +
                                std::to_string(f.order()) + " positional modes plus hidden");
  }
  DenseTensor out = v;
  for (std::size_t i = 0; i < f.order(); ++i) {
    if (f.factors()[i].rows() != v.dim(i)) {
      throw std::invalid_argument("apply_factors: factor " + std::to_string(i) + " size mismatch");
    }
    out = mode_product(out, f.factors()[i], i);
  }
  return out;
}

DenseTensor vanloan_rearrange(const DenseTensor& s, const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw std::invalid_argument("vanloan_rearrange: no modes");
  const Shape mode_shape(dims);
  const std::size_t side = mode_shape.numel();
  if (s.order() != 2 || s.rows() != side || s.cols() != side) {
    throw std::invalid_argument("vanloan_rearrange: matrix " + s.shape().str() +
                                " does not have side " + std::to_string(side));
  }
  const std::size_t k = dims.size();
  std::vector<std::size_t> out_dims(k);
  for (std::size_t i = 0; i < k; ++i) out_dims[i] = dims[i] * dims[i];
  DenseTensor t{Shape(out_dims)};

  IndexCounter rows(mode_shape);
  std::size_t r = 0;
  do {
    IndexCounter cols(mode_shape);
    std::size_t c = 0;
    do {
      std::size_t flat = 0;
      for (std::size_t i = 0; i < k; ++i) {
        flat = flat * out_dims[i] + rows.index()[i] * dims[i] + cols.index()[i];
      }
      t[flat] = s(r, c);
      ++c;
    } while (cols.next());
    ++r;
  } while (rows.next());
  return t;
}

std::size_t kron_rank_bound(const std::vector<std::size_t>& dims) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t j = 0; j < dims.size(); ++j) {
    std::size_t p = 1;
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (i != j) p *= dims[i] * dims[i];
    best = std::min(best, p);
  }
  return best;
}

namespace {

DenseTensor unvec_square(const double* v, std::size_t n, double scale) {
  DenseTensor m(Shape{n, n});
  for (std::size_t i = 0; i < n * n; ++i) m[i] = v[i] * scale;
  return m;
}

double relative_error(const DenseTensor& s, const KronSum& ks) {
  const double denom = frobenius_norm(s);
  const double num = frobenius_norm(subtract(s, materialize(ks)));
  return denom > 0 ? num / denom : num;
}

KronDecomposition decompose_svd(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                std::size_t rank) {
  const DenseTensor t = vanloan_rearrange(s, dims);
  const linalg::Svd d = linalg::svd(t);
  const std::size_t r_eff = std::min(rank, d.s.size());
  const std::size_t n1 = dims[0], n2 = dims[1];
  std::vector<KronFactors> terms;
  std::vector<double> col(std::max(n1 * n1, n2 * n2));
  for (std::size_t r = 0; r < r_eff; ++r) {
    for (std::size_t i = 0; i < n1 * n1; ++i) col[i] = d.u(i, r);
    DenseTensor f1 = unvec_square(col.data(), n1, d.s[r]);
    for (std::size_t i = 0; i < n2 * n2; ++i) col[i] = d.v(i, r);
    DenseTensor f2 = unvec_square(col.data(), n2, 1.0);
    terms.emplace_back(std::vector<DenseTensor>{std::move(f1), std::move(f2)});
  }
  KronSum ks(std::move(terms));
  const double err = relative_error(s, ks);
  return {std::move(ks), err, 0, true};
}

// Reconstruction of the CP model sum_r lambda_r * outer(F_0[:,r], ..., F_{k-1}[:,r]).
double cp_residual(const DenseTensor& t, const std::vector<DenseTensor>& f,
                   const std::vector<double>& lambda) {
  const std::size_t k = f.size(), rank = lambda.size();
  IndexCounter it(t.shape());
  std::size_t flat = 0;
  double num = 0.0, den = 0.0;
  do {
    double model = 0.0;
    for (std::size_t r = 0; r < rank; ++r) {
      double p = lambda[r];
      for (std::size_t m = 0; m < k; ++m) p *= f[m](it.index()[m], r);
      model += p;
    }
    const double e = t[flat] - model;
    num += e * e;
    den += t[flat] * t[flat];
    ++flat;
  } while (it.next());
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

// CP factors of the rearranged tensor, one t.dim(m) x R matrix per mode.
struct CpState {
  std::vector<DenseTensor> f;
  std::vector<double> lambda;
};

CpState random_cp(const DenseTensor& t, std::size_t rank, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  CpState st;
  for (std::size_t m = 0; m < t.order(); ++m) {
    DenseTensor fm(Shape{t.dim(m), rank});
    for (double& v : fm.values()) v = normal(rng);
    st.f.push_back(std::move(fm));
  }
  st.lambda.assign(rank, 1.0);
  return st;
}

// Appends one random column to every factor except the first. The first
// mode is solved first in every sweep, so the warm start can only improve.
CpState grow_cp(const CpState& prev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t rank = prev.lambda.size() + 1;
  CpState st;
  for (std::size_t m = 0; m < prev.f.size(); ++m) {
    DenseTensor fm(Shape{prev.f[m].rows(), rank});
    for (std::size_t i = 0; i < fm.rows(); ++i) {
      for (std::size_t r = 0; r + 1 < rank; ++r) fm(i, r) = prev.f[m](i, r) * (m == 0 ? prev.lambda[r] : 1.0);
      fm(i, rank - 1) = m == 0 ? 0.0 : normal(rng);
    }
    st.f.push_back(std::move(fm));
  }
  st.lambda.assign(rank, 1.0);
  return st;
}

KronDecomposition run_als(const DenseTensor& s, const DenseTensor& t, const std::vector<std::size_t>& dims,
                          CpState& st, const AlsOptions& opt) {
  const std::size_t k = dims.size(), rank = st.lambda.size();
  std::vector<DenseTensor>& f = st.f;
  std::vector<double>& lambda = st.lambda;

  double prev = std::numeric_limits<double>::infinity();
  double res = prev;
  int sweep = 0;
  bool converged = false;
  while (sweep < opt.max_sweeps) {
    ++sweep;
    for (std::size_t m = 0; m < k; ++m) {
      // MTTKRP: M[i_m, r] = sum over entries T[idx] * prod_{j != m} F_j[i_j, r].
      DenseTensor mt(Shape{t.dim(m), rank});
      IndexCounter it(t.shape());
      std::size_t flat = 0;
      do {
        const double x = t[flat++];
        if (x == 0.0) continue;
        const auto& idx = it.index();
        for (std::size_t r = 0; r < rank; ++r) {
          double p = x;
          for (std::size_t j = 0; j < k; ++j)
            if (j != m) p *= f[j](idx[j], r);
          mt(idx[m], r) += p;
        }
      } while (it.next());
      DenseTensor gram(Shape{rank, rank}, 1.0);
      for (std::size_t j = 0; j < k; ++j) {
        if (j == m) continue;
        const DenseTensor g = linalg::matmul(linalg::transpose(f[j]), f[j]);
        for (std::size_t i = 0; i < gram.numel(); ++i) gram[i] *= g[i];
      }
      f[m] = linalg::matmul(mt, linalg::pinv(gram));
      for (std::size_t r = 0; r < rank; ++r) {
        double norm = 0.0;
        for (std::size_t i = 0; i < f[m].rows(); ++i) norm += f[m](i, r) * f[m](i, r);
        norm = std::sqrt(norm);
        lambda[r] = norm;
        if (norm > 0)
          for (std::size_t i = 0; i < f[m].rows(); ++i) f[m](i, r) /= norm;
      }
    }
    res = cp_residual(t, f, lambda);
    if (std::abs(prev - res) < opt.tolerance || res < opt.tolerance) {
      converged = true;
      break;
    }
    prev = res;
  }

  std::vector<KronFactors> terms;
  std::vector<double> col;
  for (std::size_t r = 0; r < rank; ++r) {
    std::vector<DenseTensor> factors;
    for (std::size_t m = 0; m < k; ++m) {
      col.resize(f[m].rows());
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = f[m](i, r);
      factors.push_back(unvec_square(col.data(), dims[m], m == 0 ? lambda[r] : 1.0));
    }
    terms.emplace_back(std::move(factors));
  }
  KronSum ks(std::move(terms));
  const double err = relative_error(s, ks);
  return {std::move(ks), err, sweep, converged};
}

KronDecomposition decompose_als(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                std::size_t rank, std::uint64_t seed, const AlsOptions& opt) {
  const DenseTensor t = vanloan_rearrange(s, dims);
  std::mt19937_64 rng(seed);
  CpState st = random_cp(t, rank, rng);
  return run_als(s, t, dims, st, opt);
}

void check_decompose_args(const std::vector<std::size_t>& dims, std::size_t rank) {
  if (rank == 0) throw std::invalid_argument("kron_decompose: rank must be >= 1");
  if (dims.empty()) throw std::invalid_argument("kron_decompose: no modes");
}

}  // namespace

KronDecomposition kron_decompose(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                 std::size_t rank, std::uint64_t seed, const AlsOptions& als) {
  check_decompose_args(dims, rank);
  if (dims.size() == 1) {
    if (s.order() != 2 || s.rows() != dims[0] || s.cols() != dims[0]) {
      throw std::invalid_argument("kron_decompose: matrix does not match dims");
    }
    KronSum ks({KronFactors({s})});
    return {std::move(ks), 0.0, 0, true};
  }
  if (dims.size() == 2) return decompose_svd(s, dims, rank);
  return decompose_als(s, dims, rank, seed, als);
}

std::vector<KronDecomposition> kron_rank_curve(const DenseTensor& s, const std::vector<std::size_t>& dims,
                                               std::size_t max_rank, std::uint64_t seed, const AlsOptions& als) {
  check_decompose_args(dims, max_rank);
  std::vector<KronDecomposition> out;
  if (dims.size() < 3) {
    for (std::size_t r = 1; r <= max_rank; ++r) out.push_back(kron_decompose(s, dims, r, seed, als));
    return out;
  }
  const DenseTensor t = vanloan_rearrange(s, dims);
  std::mt19937_64 rng(seed);
  CpState st = random_cp(t, 1, rng);
  for (std::size_t r = 1; r <= max_rank; ++r) {
    if (r == 1) {
      out.push_back(run_als(s, t, dims, st, als));
      continue;
    }
    st = grow_cp(st, rng);
    const CpState start = st;
    KronDecomposition d = run_als(s, t, dims, st, als);
    const KronDecomposition& prev = out.back();
    if (d.relative_error > prev.relative_error) {
      // Near-zero residuals can leave ALS slightly worse off; the previous
      // solution plus a zero term is itself a rank-r decomposition.
      std::vector<KronFactors> terms = prev.terms.terms();
      std::vector<DenseTensor> zero;
      for (std::size_t n : dims) zero.emplace_back(Shape{n, n});
      terms.emplace_back(std::move(zero));
      d = KronDecomposition{KronSum(std::move(terms)), prev.relative_error, d.sweeps, d.converged};
      st = start;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace hot
