#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mdtp/units.hpp"

namespace mdtp {

/// Floor applied to adaptive chunk sizes so very slow replicas still
/// participate with a non-degenerate request.
inline constexpr ByteCount kDefaultMinChunk = 64 * kKiB;

/// Inclusive byte range [start, end].
struct ByteRange {
  ByteOffset start = 0;
  ByteOffset end = 0;

  ByteCount size() const { return end - start + 1; }

  auto operator<=>(const ByteRange&) const = default;
};

struct SchedulerConfig {
  ByteCount file_size = 0;
  ByteCount initial_chunk = 0;  // probe size, one per replica
  ByteCount large_chunk = 0;    // per-round size of the fastest replica
  ByteCount min_chunk = kDefaultMinChunk;
  // Weight of the newest sample in an exponentially weighted throughput
  // estimate. Unset means the latest observation replaces the estimate.
  std::optional<double> ewma_weight;

  /// Throws Error(kInvalidInput) unless 0 < min_chunk <= initial_chunk <=
  /// large_chunk and file_size > 0.
  void validate() const;
};

/// Global allocation cursor over the file. Every byte is handed out at most
/// once; assigned ranges are contiguous, disjoint and cover [0, next_byte).
class RangeLedger {
 public:
  explicit RangeLedger(ByteCount file_size);

  /// Hands out the next `requested` bytes, truncated at the end of the file.
  /// Returns nullopt once the file is fully allocated.
  std::optional<ByteRange> allocate(ByteCount requested);

  ByteOffset next_byte() const { return next_byte_; }
  ByteCount file_size() const { return file_size_; }
  ByteCount remaining() const { return file_size_ - next_byte_; }
  bool exhausted() const { return next_byte_ == file_size_; }
  const std::vector<ByteRange>& assigned() const { return assigned_; }

 private:
  ByteCount file_size_;
  ByteOffset next_byte_ = 0;
  std::vector<ByteRange> assigned_;
};

/// Latest measured throughput per replica. Replicas without a completed
/// chunk are absent. All stored rates are strictly positive.
class ThroughputSnapshot {
 public:
  ThroughputSnapshot() = default;
  ThroughputSnapshot(std::initializer_list<std::pair<const ReplicaId, Rate>> init);

  void set(ReplicaId replica, Rate rate);
  void erase(ReplicaId replica) { rates_.erase(replica); }
  std::optional<Rate> get(ReplicaId replica) const;
  bool contains(ReplicaId replica) const { return rates_.contains(replica); }
  bool empty() const { return rates_.empty(); }
  std::size_t size() const { return rates_.size(); }
  std::vector<Rate> rates() const;

  const std::map<ReplicaId, Rate>& entries() const { return rates_; }

 private:
  std::map<ReplicaId, Rate> rates_;
};

enum class ChunkKind { kProbe, kAdaptive, kStatic };

std::string_view to_string(ChunkKind kind);

struct ChunkAssignment {
  ReplicaId replica = 0;
  ByteRange range;
  ChunkKind kind = ChunkKind::kProbe;
  std::uint32_t round = 0;  // per-replica request index, 0 for the first

  ByteCount size() const { return range.size(); }
};

struct MdtpPolicy {};

/// Uniform chunk size for every replica regardless of throughput.
struct StaticPolicy {
  ByteCount chunk_size = 0;
};

using ChunkPolicy = std::variant<MdtpPolicy, StaticPolicy>;

std::string policy_name(const ChunkPolicy& policy);

struct ReplicaRate {
  ReplicaId replica = 0;
  Rate rate = 0;

  bool operator==(const ReplicaRate&) const = default;
};

/// (prod rates)^(1/n), evaluated in log space. Throws Error(kInvalidInput) on
/// an empty list or a non-positive rate.
Rate geometric_mean(std::span<const Rate> rates);

/// True iff `rate` is at or above the geometric-mean threshold.
bool classify_fast(Rate rate, Rate geometric_mean);

/// The fastest replica among those classified fast; ties go to the lowest id.
/// Throws Error(kInvalidState) on an empty snapshot.
ReplicaRate fastest_throughput(const ThroughputSnapshot& snapshot);

/// Adaptive chunk size for `replica`:
///   clamp(round_half_up(L * th_replica / th_fastest), min_chunk, L)
/// so every replica's chunk takes as long as the fastest replica's L-sized
/// chunk. Throws Error(kInvalidState) if `replica` has no sample.
ByteCount compute_chunk_size(ReplicaId replica, const ThroughputSnapshot& snapshot,
                             const SchedulerConfig& config);

/// Size and kind of the next request the policy wants for `replica`, before
/// truncation against the remaining bytes.
std::pair<ByteCount, ChunkKind> planned_chunk(ReplicaId replica, const ThroughputSnapshot& snapshot,
                                              const SchedulerConfig& config,
                                              const ChunkPolicy& policy);

/// One scheduling decision against a ledger. Returns nullopt when the ledger
/// is exhausted.
std::optional<ChunkAssignment> next_assignment(ReplicaId replica, const ThroughputSnapshot& snapshot,
                                               RangeLedger& ledger, const SchedulerConfig& config,
                                               const ChunkPolicy& policy, std::uint32_t round = 0);

/// Folds a completed chunk into the snapshot: size / elapsed, or an EWMA of it
/// when `ewma_weight` is set. Throws Error(kInvalidInput) if elapsed <= 0.
void record_completion(ThroughputSnapshot& snapshot, const ChunkAssignment& assignment,
                       double elapsed_seconds, std::optional<double> ewma_weight = std::nullopt);

struct SchedulerEvent {
  enum class Type { kAssigned, kCompleted, kFailed };

  Type type = Type::kAssigned;
  ChunkAssignment assignment;
  double timestamp = 0;  // seconds since the scheduler was created
  double elapsed = 0;    // fetch duration, completions only
};

std::string_view to_string(SchedulerEvent::Type type);

/// Thread-safe scheduler shared by all replica fetch loops of one transfer.
///
/// Each replica holds at most one outstanding assignment. A failed
/// assignment's range is queued for reallocation and handed out before fresh
/// ledger bytes, and the replica is excluded for the rest of the transfer.
class ChunkScheduler {
 public:
  enum class Status { kAssigned, kWait, kExhausted };

  struct Decision {
    Status status = Status::kExhausted;
    std::optional<ChunkAssignment> assignment;
  };

  ChunkScheduler(SchedulerConfig config, ChunkPolicy policy);

  /// kWait means nothing is allocatable now but another replica's in-flight
  /// chunk may still fail and be returned; retry after the next completion.
  Decision next_assignment(ReplicaId replica);

  /// Returns the throughput recorded for the replica.
  Rate record_completion(const ChunkAssignment& assignment, double elapsed_seconds);
  void record_failure(const ChunkAssignment& assignment);
  void exclude(ReplicaId replica);

  bool finished() const;
  ByteCount unallocated_bytes() const;
  std::size_t in_flight() const;
  ThroughputSnapshot snapshot() const;
  std::vector<SchedulerEvent> events() const;
  const SchedulerConfig& config() const { return config_; }
  const ChunkPolicy& policy() const { return policy_; }

 private:
  double now() const;
  void log(SchedulerEvent::Type type, const ChunkAssignment& assignment, double elapsed = 0);

  const SchedulerConfig config_;
  const ChunkPolicy policy_;
  const std::chrono::steady_clock::time_point epoch_;

  mutable std::mutex mutex_;
  RangeLedger ledger_;
  ThroughputSnapshot snapshot_;
  std::deque<ByteRange> reclaimed_;
  std::map<ReplicaId, ChunkAssignment> in_flight_;
  std::map<ReplicaId, std::uint32_t> rounds_;
  std::set<ReplicaId> excluded_;
  std::vector<SchedulerEvent> events_;
};

}  // namespace mdtp
