#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace mrh {

using json = nlohmann::json;

// FNV-1a, 64-bit, over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// Canonical serialization: compact JSON with object keys in sorted order and
// shortest round-trip doubles. Two values are "the same output" iff their
// canonical strings are byte-identical.
std::string canon(const json& v);

// Round to 4 decimal places, halves away from zero. Values too large for
// 4-decimal resolution (|v| > 1e12) and non-finite values pass through.
double round_half_up4(double v);

// SplitMix64 finalizer; the core of the counter-based random stream.
std::uint64_t mix64(std::uint64_t z);

// n-th 64-bit word of the random stream for `seed`. Distinct counters give
// independent draws; the same (seed, counter) always gives the same word.
std::uint64_t stream_u64(std::uint64_t seed, std::uint64_t counter);

// Map 64 random bits to a double in [0, 1) using the top 53 bits.
double unit_double(std::uint64_t bits);

}  // namespace mrh
