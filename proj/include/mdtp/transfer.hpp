#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdtp/chunk_params.hpp"
#include "mdtp/chunk_scheduler.hpp"
#include "mdtp/endpoint.hpp"
#include "mdtp/output_sink.hpp"

namespace mdtp {

struct SessionOptions {
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{60000};
};

struct FetchResult {
  Payload payload;
  double elapsed = 0;  // request write to last payload byte, seconds
};

/// One persistent HTTP connection to a replica. The connection is opened on
/// the first request and reused for every chunk after it.
class ReplicaSession {
 public:
  struct ResourceInfo {
    ByteCount content_length = 0;
    bool accepts_ranges = false;
  };

  explicit ReplicaSession(ReplicaEndpoint endpoint, const SessionOptions& options = {});
  ~ReplicaSession();
  ReplicaSession(const ReplicaSession&) = delete;
  ReplicaSession& operator=(const ReplicaSession&) = delete;

  const ReplicaEndpoint& endpoint() const { return endpoint_; }
  ReplicaId id() const { return endpoint_.id; }

  /// Size-only request. Throws Error(kReplicaFailure) if the replica cannot
  /// be reached and Error(kProtocol) on a non-2xx answer.
  ResourceInfo query_resource();

  /// See fetch_range().
  FetchResult fetch(const ChunkAssignment& assignment);

  /// Number of TCP connections this session has opened so far.
  std::uint64_t connections_opened() const;
  std::uint64_t request_count() const { return requests_; }

 private:
  struct Impl;

  ReplicaEndpoint endpoint_;
  std::unique_ptr<Impl> impl_;
  std::uint64_t requests_ = 0;
};

/// Issues "Range: bytes=<start>-<end>" on the session's connection and
/// returns exactly assignment.size() bytes.
/// Errors: kReplicaFailure (connection lost or refused), kProtocol (not a 206
/// or a Content-Range that does not match), kPayloadMismatch (body length).
FetchResult fetch_range(ReplicaSession& session, const ChunkAssignment& assignment);

/// Queries every session for the resource size. Sessions that do not respond
/// are returned in `unreachable`. Throws kTransferAbort if none responds,
/// kInconsistentReplica if responders disagree on the length, and
/// kUnsupportedServer if a responder does not advertise byte ranges.
struct SizeDiscovery {
  ByteCount size = 0;
  std::vector<ReplicaId> unreachable;
};
SizeDiscovery discover_size(std::vector<std::unique_ptr<ReplicaSession>>& sessions);

/// Wakes replica loops waiting for work that may be returned by a failing
/// peer.
class WorkSignal {
 public:
  std::uint64_t generation() const;
  void notify();
  void wait_for_change(std::uint64_t seen, std::chrono::milliseconds timeout);

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::uint64_t generation_ = 0;
};

struct ReplicaSummary {
  ReplicaId replica = 0;
  std::string url;
  ByteCount bytes = 0;
  std::uint64_t request_count = 0;  // completed requests
  std::uint64_t probe_requests = 0;
  std::uint64_t adaptive_requests = 0;
  std::uint64_t static_requests = 0;
  std::uint64_t failures = 0;
  std::uint64_t connections = 0;
  std::vector<ByteCount> chunk_sizes;
  std::vector<Rate> throughputs;  // measured per completed chunk
  bool failed = false;
  std::string error;
};

/// Fetch loop for one replica: take the next assignment, fetch it, hand the
/// payload to the sink, report the measured time, until the scheduler is
/// exhausted. On a fetch error the assignment is returned to the scheduler
/// and the loop ends with `failed` set.
ReplicaSummary replica_loop(ReplicaSession& session, ChunkScheduler& scheduler, OutputSink& sink,
                            WorkSignal& signal);

struct TransferOptions {
  ChunkPolicy policy = MdtpPolicy{};
  // Unset picks select_chunk_params(file size) once the size is known.
  std::optional<ChunkParams> chunk_params;
  SessionOptions session;
};

struct TransferReport {
  ByteCount file_size = 0;
  double total_wall_time = 0;  // first range request to last payload byte
  std::string policy;
  SchedulerConfig config;
  ByteCount static_chunk = 0;  // static policy only
  std::vector<ReplicaSummary> replicas;
  double replicas_used_fraction = 0;
  std::string digest;  // SHA-256 of the content
  bool discarded = false;
  std::vector<SchedulerEvent> events;
};

/// Multi-source download. A StaticPolicy with chunk_size 0 uses the large
/// chunk size. Throws kTransferAbort when every replica failed and
/// kIncompleteTransfer if bytes remain unrecovered.
TransferReport download(const std::vector<ReplicaEndpoint>& endpoints, const TransferOptions& options,
                        OutputSink& sink);

nlohmann::json to_json(const SchedulerEvent& event);
nlohmann::json to_json(const SchedulerConfig& config);
nlohmann::json to_json(const ReplicaSummary& summary);
nlohmann::json to_json(const TransferReport& report, bool include_events = false);

}  // namespace mdtp
