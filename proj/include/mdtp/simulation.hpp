#pragma once

#include <map>
#include <optional>
#include <vector>

#include "mdtp/chunk_scheduler.hpp"

namespace mdtp::sim {

/// A replica with a constant delivery rate and a fixed per-request delay.
struct SimReplica {
  ReplicaId id = 0;
  Rate rate = 0;             // bytes/second
  double latency = 0;        // seconds added to every request
  std::optional<double> fail_at;  // replica dies at this simulated time
};

struct SimReplicaResult {
  std::uint64_t requests = 0;
  std::uint64_t adaptive_requests = 0;
  ByteCount bytes = 0;
  std::vector<ByteCount> chunk_sizes;
  bool failed = false;
};

struct SimResult {
  double makespan = 0;  // simulated seconds until the last byte
  std::map<ReplicaId, SimReplicaResult> replicas;
  std::vector<ChunkAssignment> completed;  // in completion order
  double utilization = 0;
};

/// Runs the fetch loops of a transfer against simulated replicas on a
/// virtual clock. The scheduler sees exactly the elapsed times the model
/// produces, so results are deterministic.
SimResult simulate(const SchedulerConfig& config, const ChunkPolicy& policy,
                   const std::vector<SimReplica>& replicas);

}  // namespace mdtp::sim
