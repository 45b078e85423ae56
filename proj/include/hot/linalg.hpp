#pragma once

#include <vector>

#include "hot/tensor.hpp"

namespace hot::linalg {

DenseTensor transpose(const DenseTensor& m);
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
/// a * b^T without forming the transpose.
DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b);

/// Thin SVD a = U diag(s) V^T with singular values sorted descending.
/// Equal singular values keep their original column order.
struct Svd {
  DenseTensor u;           // m x r
  std::vector<double> s;   // r = min(m, n)
  DenseTensor v;           // n x r
};

/// One-sided Jacobi SVD. Accurate to near machine precision for the small
/// matrices this library decomposes.
Svd svd(const DenseTensor& a, int max_sweeps = 100);

/// Number of singular values above `tol` times the largest one.
std::size_t matrix_rank(const DenseTensor& a, double tol = 1e-9);

/// Moore-Penrose pseudo-inverse with relative cutoff.
DenseTensor pinv(const DenseTensor& a, double rcond = 1e-13);

}  // namespace hot::linalg
