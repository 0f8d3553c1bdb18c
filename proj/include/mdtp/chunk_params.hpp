#pragma once

#include <optional>

#include "mdtp/chunk_scheduler.hpp"
#include "mdtp/units.hpp"

namespace mdtp {

/// Probe and large chunk sizes, with the optional floor and smoothing knobs.
struct ChunkParams {
  ByteCount initial_chunk = 0;
  ByteCount large_chunk = 0;
  std::optional<ByteCount> min_chunk;  // unset: min(64 KiB, initial_chunk)
  std::optional<double> ewma_weight;

  bool operator==(const ChunkParams&) const = default;
};

/// Chunk sizes by file size:
///   (1 GiB, 8 GiB]  -> 4 MiB / 40 MiB
///   > 8 GiB         -> 16 MiB / 160 MiB
///   < 1 GiB         -> 1 MiB / 10 MiB (same 1:10 ratio, scaled down)
/// Exactly 1 GiB uses 4 MiB / 40 MiB.
ChunkParams select_chunk_params(ByteCount file_size);

/// Builds and validates the scheduler configuration for a file.
SchedulerConfig make_scheduler_config(ByteCount file_size, const ChunkParams& params);

}  // namespace mdtp
