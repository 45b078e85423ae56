#include "hot/rotary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hot {

bool RotaryConfig::any() const { return std::any_of(modes.begin(), modes.end(), [](bool b) { return b; }); }

std::vector<double> rotary_angles(const Shape& shape, const RotaryConfig& cfg) {
  const std::size_t k = shape.order() - 1;
  if (cfg.modes.size() != k) {
    throw std::invalid_argument("rotary: " + std::to_string(cfg.modes.size()) +
                                " mode flags for " + std::to_string(k) + " positional modes");
  }
  const std::size_t dh = shape[k];
  if (dh % 2 != 0) throw std::invalid_argument("rotary: hidden size must be even");
  std::vector<std::size_t> encoded;
  for (std::size_t m = 0; m < k; ++m)
    if (cfg.modes[m]) encoded.push_back(m);
  const std::size_t pairs = dh / 2;
  const std::size_t tokens = shape.span_product(0, k);
  std::vector<double> angles(tokens * pairs, 0.0);
  if (encoded.empty()) return angles;

  std::vector<double> theta(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    theta[j] = std::pow(cfg.base, -2.0 * static_cast<double>(j) / static_cast<double>(dh));
  }
  std::vector<std::size_t> pos_dims(shape.dims().begin(), shape.dims().begin() + static_cast<long>(k));
  IndexCounter it{Shape(pos_dims)};
  std::size_t p = 0;
  do {
    for (std::size_t j = 0; j < pairs; ++j) {
      const std::size_t mode = encoded[j % encoded.size()];
      angles[p * pairs + j] = static_cast<double>(it.index()[mode]) * theta[j];
    }
    ++p;
  } while (it.next());
  return angles;
}

DenseTensor rotate_pairs(const DenseTensor& t, const std::vector<double>& angles, double sign) {
  const std::size_t dh = t.dim(t.order() - 1);
  const std::size_t pairs = dh / 2;
  const std::size_t tokens = t.numel() / dh;
  if (angles.size() != tokens * pairs) throw std::invalid_argument("rotate_pairs: angle table size");
  DenseTensor out = t;
  for (std::size_t p = 0; p < tokens; ++p) {
    double* row = out.data() + p * dh;
    for (std::size_t j = 0; j < pairs; ++j) {
      const double a = sign * angles[p * pairs + j];
      if (a == 0.0) continue;
      const double c = std::cos(a), s = std::sin(a);
      const double x0 = row[2 * j], x1 = row[2 * j + 1];
      row[2 * j] = x0 * c - x1 * s;
      row[2 * j + 1] = x0 * s + x1 * c;
    }
  }
  return out;
}

DenseTensor rotary_encode(const DenseTensor& t, const RotaryConfig& cfg) {
  if (t.order() < 2) throw std::invalid_argument("rotary: need positional modes plus hidden");
  if (!cfg.any()) {
    if (cfg.modes.size() != t.order() - 1) throw std::invalid_argument("rotary: mode flag count");
    return t;
  }
  return rotate_pairs(t, rotary_angles(t.shape(), cfg), 1.0);
}

}  // namespace hot
