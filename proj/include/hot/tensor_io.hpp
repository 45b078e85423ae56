#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "hot/tensor.hpp"

namespace hot {

/// Raised for any malformed or truncated tensor file.
class TensorFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File layout, little-endian, no padding:
//   "HOT1" | u32 order | order x u64 dims | prod(dims) x f64 payload (row-major)
std::string encode_tensor(const DenseTensor& t);
DenseTensor decode_tensor(const std::string& bytes);

DenseTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const DenseTensor& t);

}  // namespace hot
