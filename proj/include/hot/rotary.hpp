#pragma once

#include <vector>

#include "hot/tensor.hpp"

namespace hot {

/// Rotary positional encoding over positional modes. Feature pairs
/// (2j, 2j+1) of the hidden dim are rotated by pos * base^(-2j/D_H), where pos
/// is the index along the mode that owns pair j. With several encoded modes
/// the pairs are dealt round-robin across them, so each mode keeps a relative
/// phase of its own.
struct RotaryConfig {
  std::vector<bool> modes;  // one flag per positional mode
  double base = 10000.0;

  bool any() const;
};

/// Rotates an order-(k+1) tensor (positional modes then hidden). Throws if an
/// encoded tensor has odd hidden size or the flag count does not match k.
DenseTensor rotary_encode(const DenseTensor& t, const RotaryConfig& cfg);

/// Per-element angle table: angles[p * (D_H/2) + j] for flat positional index
/// p and pair j. Shared by the forward op and its adjoint.
std::vector<double> rotary_angles(const Shape& shape, const RotaryConfig& cfg);

/// Applies the rotation with the given sign (+1 forward, -1 inverse).
DenseTensor rotate_pairs(const DenseTensor& t, const std::vector<double>& angles, double sign);

}  // namespace hot
