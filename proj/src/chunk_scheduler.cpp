#include "mdtp/chunk_scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdtp/error.hpp"

namespace mdtp {

void SchedulerConfig::validate() const {
  if (file_size == 0) throw Error(ErrorCode::kInvalidInput, "file size must be positive");
  if (min_chunk == 0 || min_chunk > initial_chunk || initial_chunk > large_chunk) {
    throw Error(ErrorCode::kInvalidInput,
                "chunk parameters must satisfy 0 < min_chunk <= initial_chunk <= large_chunk (got " +
                    std::to_string(min_chunk) + ", " + std::to_string(initial_chunk) + ", " +
                    std::to_string(large_chunk) + ")");
  }
  if (ewma_weight && !(*ewma_weight > 0.0 && *ewma_weight <= 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "ewma weight must be in (0, 1]");
  }
}

RangeLedger::RangeLedger(ByteCount file_size) : file_size_(file_size) {}

std::optional<ByteRange> RangeLedger::allocate(ByteCount requested) {
  if (requested < 1) throw Error(ErrorCode::kInvalidInput, "requested chunk size must be >= 1");
  if (exhausted()) return std::nullopt;
  ByteRange range{next_byte_, next_byte_ + std::min(requested, remaining()) - 1};
  next_byte_ = range.end + 1;
  assigned_.push_back(range);
  return range;
}

ThroughputSnapshot::ThroughputSnapshot(std::initializer_list<std::pair<const ReplicaId, Rate>> init) {
  for (const auto& [id, rate] : init) set(id, rate);
}

void ThroughputSnapshot::set(ReplicaId replica, Rate rate) {
  if (!(rate > 0) || !std::isfinite(rate)) {
    throw Error(ErrorCode::kInvalidInput, "throughput must be positive and finite");
  }
  rates_[replica] = rate;
}

std::optional<Rate> ThroughputSnapshot::get(ReplicaId replica) const {
  auto it = rates_.find(replica);
  if (it == rates_.end()) return std::nullopt;
  return it->second;
}

std::vector<Rate> ThroughputSnapshot::rates() const {
  std::vector<Rate> out;
  out.reserve(rates_.size());
  for (const auto& [id, rate] : rates_) out.push_back(rate);
  return out;
}

std::string_view to_string(ChunkKind kind) {
  switch (kind) {
    case ChunkKind::kProbe: return "probe";
    case ChunkKind::kAdaptive: return "adaptive";
    case ChunkKind::kStatic: return "static";
  }
  return "unknown";
}

std::string_view to_string(SchedulerEvent::Type type) {
  switch (type) {
    case SchedulerEvent::Type::kAssigned: return "assigned";
    case SchedulerEvent::Type::kCompleted: return "completed";
    case SchedulerEvent::Type::kFailed: return "failed";
  }
  return "unknown";
}

std::string policy_name(const ChunkPolicy& policy) {
  return std::holds_alternative<MdtpPolicy>(policy) ? "mdtp" : "static";
}

Rate geometric_mean(std::span<const Rate> rates) {
  if (rates.empty()) throw Error(ErrorCode::kInvalidInput, "geometric mean of an empty list");
  double log_sum = 0;
  for (Rate r : rates) {
    if (!(r > 0) || !std::isfinite(r)) {
      throw Error(ErrorCode::kInvalidInput, "geometric mean requires positive finite rates");
    }
    log_sum += std::log(r);
  }
  double gm = std::exp(log_sum / static_cast<double>(rates.size()));
  // exp/log round-off must not push the mean outside [min, max].
  auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  return std::clamp(gm, *lo, *hi);
}

bool classify_fast(Rate rate, Rate geometric_mean) { return rate >= geometric_mean; }

ReplicaRate fastest_throughput(const ThroughputSnapshot& snapshot) {
  if (snapshot.empty()) throw Error(ErrorCode::kInvalidState, "no throughput samples yet");
  std::vector<Rate> rates = snapshot.rates();
  Rate gm = geometric_mean(rates);

  std::optional<ReplicaRate> best;
  for (const auto& [id, rate] : snapshot.entries()) {
    if (!classify_fast(rate, gm)) continue;
    if (!best || rate > best->rate) best = ReplicaRate{id, rate};
  }
  return *best;
}

ByteCount compute_chunk_size(ReplicaId replica, const ThroughputSnapshot& snapshot,
                             const SchedulerConfig& config) {
  auto rate = snapshot.get(replica);
  if (!rate) {
    throw Error(ErrorCode::kInvalidState,
                "replica " + std::to_string(replica) + " has no throughput sample");
  }
  ReplicaRate fastest = fastest_throughput(snapshot);
  // The fastest replica's round takes L / th_fastest; every other replica
  // gets the bytes it can move in that same time.
  double round_seconds = static_cast<double>(config.large_chunk) / fastest.rate;
  double ideal = round_seconds * *rate;
  if (*rate == fastest.rate) ideal = static_cast<double>(config.large_chunk);
  auto rounded = static_cast<ByteCount>(std::floor(ideal + 0.5));
  return std::clamp(rounded, config.min_chunk, config.large_chunk);
}

std::pair<ByteCount, ChunkKind> planned_chunk(ReplicaId replica, const ThroughputSnapshot& snapshot,
                                              const SchedulerConfig& config,
                                              const ChunkPolicy& policy) {
  if (const auto* fixed = std::get_if<StaticPolicy>(&policy)) {
    if (fixed->chunk_size == 0) throw Error(ErrorCode::kInvalidInput, "static chunk size must be >= 1");
    return {fixed->chunk_size, ChunkKind::kStatic};
  }
  if (!snapshot.contains(replica)) return {config.initial_chunk, ChunkKind::kProbe};
  return {compute_chunk_size(replica, snapshot, config), ChunkKind::kAdaptive};
}

std::optional<ChunkAssignment> next_assignment(ReplicaId replica, const ThroughputSnapshot& snapshot,
                                               RangeLedger& ledger, const SchedulerConfig& config,
                                               const ChunkPolicy& policy, std::uint32_t round) {
  auto [size, kind] = planned_chunk(replica, snapshot, config, policy);
  auto range = ledger.allocate(size);
  if (!range) return std::nullopt;
  return ChunkAssignment{replica, *range, kind, round};
}

void record_completion(ThroughputSnapshot& snapshot, const ChunkAssignment& assignment,
                       double elapsed_seconds, std::optional<double> ewma_weight) {
  if (!(elapsed_seconds > 0)) throw Error(ErrorCode::kInvalidInput, "elapsed time must be positive");
  Rate sample = static_cast<double>(assignment.size()) / elapsed_seconds;
  auto previous = snapshot.get(assignment.replica);
  if (ewma_weight && previous) {
    sample = *ewma_weight * sample + (1.0 - *ewma_weight) * *previous;
  }
  snapshot.set(assignment.replica, sample);
}

ChunkScheduler::ChunkScheduler(SchedulerConfig config, ChunkPolicy policy)
    : config_(std::move(config)),
      policy_(std::move(policy)),
      epoch_(std::chrono::steady_clock::now()),
      ledger_(config_.file_size) {
  config_.validate();
  if (const auto* fixed = std::get_if<StaticPolicy>(&policy_); fixed && fixed->chunk_size == 0) {
    throw Error(ErrorCode::kInvalidInput, "static chunk size must be >= 1");
  }
}

double ChunkScheduler::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void ChunkScheduler::log(SchedulerEvent::Type type, const ChunkAssignment& assignment, double elapsed) {
  events_.push_back(SchedulerEvent{type, assignment, now(), elapsed});
}

ChunkScheduler::Decision ChunkScheduler::next_assignment(ReplicaId replica) {
  std::lock_guard lock(mutex_);
  if (excluded_.contains(replica)) {
    throw Error(ErrorCode::kInvalidState, "replica " + std::to_string(replica) + " is excluded");
  }
  if (in_flight_.contains(replica)) {
    throw Error(ErrorCode::kInvalidState,
                "replica " + std::to_string(replica) + " already has a chunk in flight");
  }

  auto [size, kind] = planned_chunk(replica, snapshot_, config_, policy_);
  std::optional<ByteRange> range;
  if (!reclaimed_.empty()) {
    ByteRange& front = reclaimed_.front();
    if (front.size() <= size) {
      range = front;
      reclaimed_.pop_front();
    } else {
      range = ByteRange{front.start, front.start + size - 1};
      front.start += size;
    }
  } else {
    range = ledger_.allocate(size);
  }

  if (!range) {
    return Decision{in_flight_.empty() ? Status::kExhausted : Status::kWait, std::nullopt};
  }

  ChunkAssignment assignment{replica, *range, kind, rounds_[replica]++};
  in_flight_.emplace(replica, assignment);
  log(SchedulerEvent::Type::kAssigned, assignment);
  return Decision{Status::kAssigned, assignment};
}

Rate ChunkScheduler::record_completion(const ChunkAssignment& assignment, double elapsed_seconds) {
  std::lock_guard lock(mutex_);
  auto it = in_flight_.find(assignment.replica);
  if (it == in_flight_.end() || it->second.range != assignment.range) {
    throw Error(ErrorCode::kInvalidState, "completion for an assignment that is not in flight");
  }
  mdtp::record_completion(snapshot_, assignment, elapsed_seconds, config_.ewma_weight);
  in_flight_.erase(it);
  log(SchedulerEvent::Type::kCompleted, assignment, elapsed_seconds);
  return *snapshot_.get(assignment.replica);
}

void ChunkScheduler::record_failure(const ChunkAssignment& assignment) {
  std::lock_guard lock(mutex_);
  auto it = in_flight_.find(assignment.replica);
  if (it == in_flight_.end() || it->second.range != assignment.range) {
    throw Error(ErrorCode::kInvalidState, "failure for an assignment that is not in flight");
  }
  in_flight_.erase(it);
  reclaimed_.push_back(assignment.range);
  excluded_.insert(assignment.replica);
  snapshot_.erase(assignment.replica);
  log(SchedulerEvent::Type::kFailed, assignment);
}

void ChunkScheduler::exclude(ReplicaId replica) {
  std::lock_guard lock(mutex_);
  if (in_flight_.contains(replica)) {
    throw Error(ErrorCode::kInvalidState, "cannot exclude a replica with a chunk in flight");
  }
  excluded_.insert(replica);
  snapshot_.erase(replica);
}

bool ChunkScheduler::finished() const {
  std::lock_guard lock(mutex_);
  return ledger_.exhausted() && reclaimed_.empty() && in_flight_.empty();
}

ByteCount ChunkScheduler::unallocated_bytes() const {
  std::lock_guard lock(mutex_);
  ByteCount total = ledger_.remaining();
  for (const auto& r : reclaimed_) total += r.size();
  return total;
}

std::size_t ChunkScheduler::in_flight() const {
  std::lock_guard lock(mutex_);
  return in_flight_.size();
}

ThroughputSnapshot ChunkScheduler::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

std::vector<SchedulerEvent> ChunkScheduler::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

}  // namespace mdtp
