#include "mdtp/chunk_params.hpp"

#include <algorithm>

#include "mdtp/error.hpp"

namespace mdtp {

ChunkParams select_chunk_params(ByteCount file_size) {
  if (file_size == 0) throw Error(ErrorCode::kInvalidInput, "file size must be positive");
  if (file_size > 8 * kGiB) return {16 * kMiB, 160 * kMiB, {}, {}};
  if (file_size >= kGiB) return {4 * kMiB, 40 * kMiB, {}, {}};
  return {kMiB, 10 * kMiB, {}, {}};
}

SchedulerConfig make_scheduler_config(ByteCount file_size, const ChunkParams& params) {
  SchedulerConfig config;
  config.file_size = file_size;
  config.initial_chunk = params.initial_chunk;
  config.large_chunk = params.large_chunk;
  config.min_chunk = params.min_chunk.value_or(std::min(kDefaultMinChunk, params.initial_chunk));
  config.ewma_weight = params.ewma_weight;
  config.validate();
  return config;
}

}  // namespace mdtp
