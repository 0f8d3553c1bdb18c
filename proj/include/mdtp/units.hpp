#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mdtp {

using ByteCount = std::uint64_t;
using ByteOffset = std::uint64_t;
using ReplicaId = std::uint32_t;

/// Throughput in bytes per second.
using Rate = double;

inline constexpr ByteCount kKiB = 1024;
inline constexpr ByteCount kMiB = 1024 * kKiB;
inline constexpr ByteCount kGiB = 1024 * kMiB;

/// Parses "4096", "64KiB", "8MiB", "1.5GiB", "10MB" (decimal), "2k" (binary).
/// Throws mdtp::Error(kInvalidInput) on malformed input.
ByteCount parse_byte_size(std::string_view text);

/// Renders a byte count with the largest binary unit that divides it evenly,
/// e.g. 41943040 -> "40MiB".
std::string format_byte_size(ByteCount bytes);

}  // namespace mdtp
