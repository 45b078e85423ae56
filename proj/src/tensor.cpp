#include "hot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hot {

namespace {

void check_mode(const DenseTensor& t, std::size_t mode, const char* op) {
  if (mode >= t.order()) {
    throw std::out_of_range(std::string(op) + ": mode " + std::to_string(mode) +
                            " out of range for order-" + std::to_string(t.order()) + " tensor");
  }
}

// Splits a row-major tensor around `mode` into (outer, extent, inner) so that
// flat = (o * extent + j) * inner + r.
struct ModeSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

ModeSplit split_at(const Shape& s, std::size_t mode) {
  return {s.span_product(0, mode), s[mode], s.span_product(mode + 1, s.order())};
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("Shape: order must be >= 1");
  numel_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("Shape: every dim must be >= 1");
    if (numel_ > std::numeric_limits<std::size_t>::max() / d) {
      throw std::overflow_error("Shape: element count overflows size_t");
    }
    numel_ *= d;
  }
}

std::vector<std::size_t> Shape::strides() const {
  std::vector<std::size_t> s(dims_.size(), 1);
  for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
  return s;
}

std::size_t Shape::span_product(std::size_t first, std::size_t last) const {
  std::size_t p = 1;
  for (std::size_t i = first; i < last; ++i) p *= dims_[i];
  return p;
}

Shape Shape::with_dim(std::size_t mode, std::size_t extent) const {
  auto d = dims_;
  d.at(mode) = extent;
  return Shape(std::move(d));
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

DenseTensor::DenseTensor(Shape shape, std::span<const double> values) : shape_(std::move(shape)) {
  if (values.size() != shape_.numel()) {
    throw std::invalid_argument("DenseTensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_.str());
  }
  data_.assign(values.begin(), values.end());
}

DenseTensor::DenseTensor(Shape shape, std::initializer_list<double> values)
    : DenseTensor(std::move(shape), std::span<const double>(values.begin(), values.size())) {}

DenseTensor DenseTensor::matrix(std::size_t rows, std::size_t cols,
                                std::initializer_list<double> values) {
  return DenseTensor(Shape{rows, cols}, values);
}

DenseTensor DenseTensor::identity(std::size_t n) {
  DenseTensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != order()) throw std::invalid_argument("DenseTensor::at: wrong index arity");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw std::out_of_range("DenseTensor::at: index out of range");
    flat = flat * shape_[i] + index[i];
  }
  return flat;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}
double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}
double& DenseTensor::at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }
double DenseTensor::at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }

DenseTensor DenseTensor::reshaped(Shape shape) const {
  if (shape.numel() != numel()) {
    throw std::invalid_argument("reshape: " + shape_.str() + " -> " + shape.str());
  }
  DenseTensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool IndexCounter::next() {
  for (std::size_t i = dims_.size(); i-- > 0;) {
    if (++index_[i] < dims_[i]) return true;
    index_[i] = 0;
  }
  return false;
}

DenseTensor matricize(const DenseTensor& t, std::size_t mode) {
  check_mode(t, mode, "matricize");
  const auto [outer, extent, inner] = split_at(t.shape(), mode);
  DenseTensor m(Shape{extent, outer * inner});
  const double* src = t.data();
  double* dst = m.data();
  const std::size_t cols = outer * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < extent; ++j) {
      const double* row = src + (o * extent + j) * inner;
      std::copy(row, row + inner, dst + j * cols + o * inner);
    }
  }
  return m;
}

DenseTensor fold(const DenseTensor& m, std::size_t mode, const Shape& target) {
  if (mode >= target.order()) throw std::out_of_range("fold: mode out of range");
  const auto [outer, extent, inner] = split_at(target, mode);
  if (m.order() != 2 || m.rows() != extent || m.cols() != outer * inner) {
    throw std::invalid_argument("fold: matrix " + m.shape().str() + " incompatible with target " +
                                target.str() + " at mode " + std::to_string(mode));
  }
  DenseTensor t(target);
  const std::size_t cols = outer * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < extent; ++j) {
      const double* row = m.data() + j * cols + o * inner;
      std::copy(row, row + inner, t.data() + (o * extent + j) * inner);
    }
  }
  return t;
}

DenseTensor mode_product(const DenseTensor& t, const DenseTensor& a_mat, std::size_t mode) {
  check_mode(t, mode, "mode_product");
  if (a_mat.order() != 2 || a_mat.cols() != t.dim(mode)) {
    throw std::invalid_argument("mode_product: matrix " + a_mat.shape().str() +
                                " does not match mode " + std::to_string(mode) + " of " +
                                t.shape().str());
  }
  const auto [outer, extent, inner] = split_at(t.shape(), mode);
  const std::size_t d = a_mat.rows();
  DenseTensor out(t.shape().with_dim(mode, d));
  const double* src = t.data();
  double* dst = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* in_block = src + o * extent * inner;
    double* out_block = dst + o * d * inner;
    for (std::size_t a = 0; a < d; ++a) {
      double* out_row = out_block + a * inner;
      for (std::size_t j = 0; j < extent; ++j) {
        const double w = a_mat(a, j);
        if (w == 0.0) continue;
        const double* in_row = in_block + j * inner;
        for (std::size_t r = 0; r < inner; ++r) out_row[r] += w * in_row[r];
      }
    }
  }
  return out;
}

DenseTensor scale_mode(const DenseTensor& t, std::span<const double> weights, std::size_t mode) {
  check_mode(t, mode, "scale_mode");
  if (weights.size() != t.dim(mode)) throw std::invalid_argument("scale_mode: length mismatch");
  const auto [outer, extent, inner] = split_at(t.shape(), mode);
  DenseTensor out = t;
  double* p = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < extent; ++j) {
      double* row = p + (o * extent + j) * inner;
      for (std::size_t r = 0; r < inner; ++r) row[r] *= weights[j];
    }
  return out;
}

DenseTensor pool_except(const DenseTensor& t, std::size_t mode, Pooling pooling) {
  if (t.order() < 2) throw std::invalid_argument("pool_except: order must be >= 2");
  check_mode(t, mode, "pool_except");
  if (mode == t.order() - 1) {
    throw std::invalid_argument("pool_except: cannot pool onto the hidden (last) mode");
  }
  const std::size_t hidden = t.dim(t.order() - 1);
  const std::size_t n = t.dim(mode);
  const std::size_t outer = t.shape().span_product(0, mode);
  const std::size_t middle = t.shape().span_product(mode + 1, t.order() - 1);
  DenseTensor out(Shape{n, hidden});
  const double* src = t.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t m = 0; m < middle; ++m) {
        const double* row = src + ((o * n + a) * middle + m) * hidden;
        double* acc = out.data() + a * hidden;
        for (std::size_t d = 0; d < hidden; ++d) acc[d] += row[d];
      }
  if (pooling == Pooling::kMean) {
    const double inv = 1.0 / static_cast<double>(outer * middle);
    for (double& v : out.values()) v *= inv;
  }
  return out;
}

DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
  const std::size_t k = t.order();
  if (perm.size() != k) throw std::invalid_argument("permute: arity mismatch");
  std::vector<bool> seen(k, false);
  std::vector<std::size_t> dims(k);
  for (std::size_t m = 0; m < k; ++m) {
    if (perm[m] >= k || seen[perm[m]]) throw std::invalid_argument("permute: not a permutation");
    seen[perm[m]] = true;
    dims[m] = t.dim(perm[m]);
  }
  DenseTensor out{Shape(dims)};
  const auto in_strides = t.shape().strides();
  std::vector<std::size_t> stride_by_out(k);
  for (std::size_t m = 0; m < k; ++m) stride_by_out[m] = in_strides[perm[m]];
  IndexCounter it(out.shape());
  std::size_t flat = 0;
  do {
    std::size_t src = 0;
    const auto& idx = it.index();
    for (std::size_t m = 0; m < k; ++m) src += idx[m] * stride_by_out[m];
    out[flat++] = t[src];
  } while (it.next());
  return out;
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("add: shape mismatch");
  DenseTensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

DenseTensor subtract(const DenseTensor& a, const DenseTensor& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("subtract: shape mismatch");
  DenseTensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

DenseTensor scaled(const DenseTensor& a, double s) {
  DenseTensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const DenseTensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace hot
