#include "mrh/util.hpp"

#include <cmath>

namespace mrh {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string canon(const json& v) { return v.dump(); }

double round_half_up4(double v) {
  if (!std::isfinite(v)) return v;
  if (std::fabs(v) > 1e12) return v;
  double sign = v < 0 ? -1.0 : 1.0;
  return sign * std::floor(std::fabs(v) * 10000.0 + 0.5) / 10000.0;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t stream_u64(std::uint64_t seed, std::uint64_t counter) {
  return mix64(seed + (counter + 1) * 0x9e3779b97f4a7c15ull);
}

double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace mrh
