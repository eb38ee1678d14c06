#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace synthpipe {

using Digest128 = std::array<std::uint8_t, 16>;

/// First 128 bits of SHA-256 over `data`.
Digest128 digest128(std::string_view data);

/// Lowercase hex of digest128(data); 32 characters.
std::string digest128_hex(std::string_view data);

/// 64-bit keyed hash of (key, data). Stable across platforms and runs.
std::uint64_t keyed_hash64(std::uint64_t key, std::string_view data);

/// Child seed for a named sub-stream, e.g. derive_seed(seed, "mixture/web/epoch=1").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Maps a 64-bit hash to [0, 1) using its top 53 bits.
inline double unit_interval(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace synthpipe
