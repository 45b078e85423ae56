#include "hot/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hot::linalg {

namespace {

void require_matrix(const DenseTensor& m, const char* op) {
  if (m.order() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix");
}

}  // namespace

DenseTensor transpose(const DenseTensor& m) {
  require_matrix(m, "transpose");
  DenseTensor t(Shape{m.cols(), m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + a.shape().str() + " x " + b.shape().str());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  DenseTensor c(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: " + a.shape().str() + " x " + b.shape().str() + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  DenseTensor c(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double* ar = a.data() + i * k;
      const double* br = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      c(i, j) = s;
    }
  return c;
}

Svd svd(const DenseTensor& a, int max_sweeps) {
  require_matrix(a, "svd");
  if (a.rows() < a.cols()) {
    Svd t = svd(transpose(a), max_sweeps);
    return {std::move(t.v), std::move(t.s), std::move(t.u)};
  }
  const std::size_t m = a.rows(), n = a.cols();
  // Column-major working copies make the pairwise column rotations contiguous.
  std::vector<double> u(m * n), v(n * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) u[j * m + i] = a(i, j);
  for (std::size_t j = 0; j < n; ++j) v[j * n + j] = 1.0;

  constexpr double kEps = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* up = &u[p * m];
        double* uq = &u[q * m];
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += up[i] * up[i];
          beta += uq[i] * uq[i];
          gamma += up[i] * uq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = up[i], y = uq[i];
          up[i] = c * x - s * y;
          uq[i] = s * x + c * y;
        }
        double* vp = &v[p * n];
        double* vq = &v[q * n];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += u[j * m + i] * u[j * m + i];
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Svd out{DenseTensor(Shape{m, n}), std::vector<double>(n), DenseTensor(Shape{n, n})};
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j = order[r];
    out.s[r] = sigma[j];
    const double inv = sigma[j] > 0 ? 1.0 / sigma[j] : 0.0;
    for (std::size_t i = 0; i < m; ++i) out.u(i, r) = u[j * m + i] * inv;
    for (std::size_t i = 0; i < n; ++i) out.v(i, r) = v[j * n + i];
  }
  return out;
}

std::size_t matrix_rank(const DenseTensor& a, double tol) {
  const Svd d = svd(a);
  if (d.s.empty() || d.s.front() == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(d.s.begin(), d.s.end(), [&](double s) { return s > tol * d.s.front(); }));
}

DenseTensor pinv(const DenseTensor& a, double rcond) {
  const Svd d = svd(a);
  DenseTensor out(Shape{a.cols(), a.rows()});
  const double cutoff = d.s.empty() ? 0.0 : rcond * d.s.front();
  for (std::size_t r = 0; r < d.s.size(); ++r) {
    if (d.s[r] <= cutoff) continue;
    const double inv = 1.0 / d.s[r];
    for (std::size_t i = 0; i < a.cols(); ++i)
      for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += d.v(i, r) * inv * d.u(j, r);
  }
  return out;
}

}  // namespace hot::linalg
