#include "hot/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace hot {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'T', '1'};
// Orders above this are rejected as corrupt rather than allocated.
constexpr std::uint32_t kMaxOrder = 64;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const char* what) {
  if (in.size() - pos < sizeof(T)) throw TensorFormatError(std::string("truncated header: ") + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_tensor(const DenseTensor& t) {
  std::string out;
  out.reserve(8 + 8 * t.order() + 8 * t.numel());
  out.append(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.order()));
  for (std::size_t d : t.shape().dims()) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
  return out;
}

DenseTensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw TensorFormatError("malformed header: missing HOT1 magic");
  }
  std::size_t pos = 4;
  const auto order = take<std::uint32_t>(bytes, pos, "order");
  if (order == 0 || order > kMaxOrder) {
    throw TensorFormatError("malformed header: order " + std::to_string(order));
  }
  std::vector<std::size_t> dims(order);
  std::size_t count = 1;
  for (auto& d : dims) {
    const auto v = take<std::uint64_t>(bytes, pos, "dims");
    if (v == 0) throw TensorFormatError("malformed header: zero dim");
    if (v > std::numeric_limits<std::size_t>::max() / count ||
        count * v > std::numeric_limits<std::size_t>::max() / sizeof(double)) {
      throw TensorFormatError("malformed header: dim overflow");
    }
    d = static_cast<std::size_t>(v);
    count *= d;
  }
  const std::size_t payload = bytes.size() - pos;
  if (payload < count * sizeof(double)) {
    throw TensorFormatError("truncated payload: expected " + std::to_string(count * sizeof(double)) +
                            " bytes, found " + std::to_string(payload));
  }
  if (payload > count * sizeof(double)) throw TensorFormatError("trailing bytes after payload");
  DenseTensor t{Shape(dims)};
  std::memcpy(t.data(), bytes.data() + pos, count * sizeof(double));
  return t;
}

DenseTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_tensor: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

void write_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_tensor: cannot open " + path.string());
  const std::string bytes = encode_tensor(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_tensor: write failed for " + path.string());
}

}  // namespace hot
