#ifndef FES_HASH_HPP
#define FES_HASH_HPP

#include "fes/types.hpp"

#include <cstdint>
#include <cstring>
#include <string>

namespace fes {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

/// Content hash over dimensions and raw entry bytes; invalidates artifacts
/// built against a different matrix.
inline std::uint64_t matrix_hash(const Matrix& m) {
  std::uint64_t h = kFnvOffset;
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) {
      double v = m(r, c);
      h = fnv1a(&v, sizeof(v), h);
    }
  return h;
}

std::string to_hex(std::uint64_t h);
std::uint64_t from_hex(const std::string& s);

}  // namespace fes

#endif  // FES_HASH_HPP
