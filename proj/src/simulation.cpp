#include "mdtp/simulation.hpp"

#include <queue>
#include <tuple>

#include "mdtp/error.hpp"

namespace mdtp::sim {

namespace {

struct InFlight {
  double finish = 0;
  double start = 0;
  ReplicaId replica = 0;
  ChunkAssignment assignment;

  // Earliest finish first; equal times resolve by replica id.
  bool operator>(const InFlight& o) const {
    return std::tie(finish, replica) > std::tie(o.finish, o.replica);
  }
};

}  // namespace

SimResult simulate(const SchedulerConfig& config, const ChunkPolicy& policy,
                   const std::vector<SimReplica>& replicas) {
  if (replicas.empty()) throw Error(ErrorCode::kInvalidInput, "simulation needs replicas");
  ChunkScheduler scheduler(config, policy);
  SimResult result;
  std::map<ReplicaId, SimReplica> by_id;
  for (const auto& r : replicas) {
    if (!(r.rate > 0)) throw Error(ErrorCode::kInvalidInput, "simulated rate must be positive");
    by_id[r.id] = r;
    result.replicas[r.id];
  }

  std::priority_queue<InFlight, std::vector<InFlight>, std::greater<>> running;
  std::vector<ReplicaId> idle;

  auto dispatch = [&](ReplicaId id, double now) {
    const SimReplica& r = by_id[id];
    if (r.fail_at && now >= *r.fail_at) {
      result.replicas[id].failed = true;
      scheduler.exclude(id);
      return;
    }
    auto decision = scheduler.next_assignment(id);
    if (decision.status == ChunkScheduler::Status::kAssigned) {
      const auto& a = *decision.assignment;
      double duration = r.latency + static_cast<double>(a.size()) / r.rate;
      running.push(InFlight{now + duration, now, id, a});
    } else if (decision.status == ChunkScheduler::Status::kWait) {
      idle.push_back(id);
    }
  };

  for (const auto& r : replicas) dispatch(r.id, 0.0);

  while (!running.empty()) {
    InFlight next = running.top();
    running.pop();
    const SimReplica& r = by_id[next.replica];
    double now = next.finish;

    if (r.fail_at && *r.fail_at < next.finish) {
      now = std::max(*r.fail_at, next.start);
      scheduler.record_failure(next.assignment);
      result.replicas[next.replica].failed = true;
    } else {
      scheduler.record_completion(next.assignment, next.finish - next.start);
      auto& stats = result.replicas[next.replica];
      stats.requests += 1;
      if (next.assignment.kind == ChunkKind::kAdaptive) stats.adaptive_requests += 1;
      stats.bytes += next.assignment.size();
      stats.chunk_sizes.push_back(next.assignment.size());
      result.completed.push_back(next.assignment);
      result.makespan = std::max(result.makespan, now);
      dispatch(next.replica, now);
    }

    // Waiting replicas retry whenever something finishes or fails.
    std::vector<ReplicaId> waiting;
    waiting.swap(idle);
    for (ReplicaId id : waiting) dispatch(id, now);
  }

  if (!scheduler.finished()) {
    throw Error(ErrorCode::kIncompleteTransfer, "simulated transfer could not complete");
  }
  std::size_t used = 0;
  for (const auto& [id, stats] : result.replicas) used += stats.requests > 0 ? 1 : 0;
  result.utilization = static_cast<double>(used) / static_cast<double>(result.replicas.size());
  return result;
}

}  // namespace mdtp::sim
