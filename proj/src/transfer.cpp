#include "mdtp/transfer.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <future>
#include <regex>
#include <set>
#include <thread>

#include "mdtp/error.hpp"

namespace mdtp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string describe(const httplib::Result& result) { return httplib::to_string(result.error()); }

}  // namespace

ReplicaEndpoint parse_endpoint(ReplicaId id, const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/\s]+)(/\S*)$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl) || m[2].length() < 2) {
    throw Error(ErrorCode::kInvalidInput, "not a resource URL: '" + url + "'");
  }
  return ReplicaEndpoint{id, m[1].str(), m[2].str()};
}

struct ReplicaSession::Impl {
  httplib::Client client;
  std::atomic<std::uint64_t> connections{0};

  Impl(const std::string& base_url, const SessionOptions& options) : client(base_url) {
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);
    client.set_connection_timeout(options.connect_timeout);
    client.set_read_timeout(options.read_timeout);
    client.set_write_timeout(options.read_timeout);
    // Invoked once per socket the client creates.
    client.set_socket_options([this](socket_t) { connections.fetch_add(1); });
  }
};

ReplicaSession::ReplicaSession(ReplicaEndpoint endpoint, const SessionOptions& options)
    : endpoint_(std::move(endpoint)), impl_(std::make_unique<Impl>(endpoint_.base_url, options)) {
  if (!impl_->client.is_valid()) {
    throw Error(ErrorCode::kInvalidInput, "invalid replica URL " + endpoint_.url());
  }
}

ReplicaSession::~ReplicaSession() = default;

std::uint64_t ReplicaSession::connections_opened() const { return impl_->connections.load(); }

ReplicaSession::ResourceInfo ReplicaSession::query_resource() {
  ++requests_;
  auto res = impl_->client.Head(endpoint_.resource_path);
  if (!res) {
    throw Error(ErrorCode::kReplicaFailure,
                "replica " + std::to_string(id()) + " unreachable: " + describe(res));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::kProtocol, "replica " + std::to_string(id()) + " answered " +
                                          std::to_string(res->status) + " to size query");
  }
  if (!res->has_header("Content-Length")) {
    throw Error(ErrorCode::kProtocol, "replica " + std::to_string(id()) + " sent no Content-Length");
  }
  ResourceInfo info;
  info.content_length = std::stoull(res->get_header_value("Content-Length"));
  info.accepts_ranges = res->get_header_value("Accept-Ranges") == "bytes";
  return info;
}

FetchResult ReplicaSession::fetch(const ChunkAssignment& assignment) {
  ++requests_;
  const ByteRange range = assignment.range;
  const ByteCount expected = range.size();
  const std::string who = "replica " + std::to_string(id());

  httplib::Headers headers = {
      {"Range", "bytes=" + std::to_string(range.start) + "-" + std::to_string(range.end)}};

  FetchResult out;
  out.payload.reserve(expected);
  int bad_status = 0;
  bool overflow = false;

  auto start = Clock::now();
  auto res = impl_->client.Get(
      endpoint_.resource_path, headers,
      [&](const httplib::Response& r) {
        if (r.status != httplib::StatusCode::PartialContent_206) {
          bad_status = r.status;
          return false;
        }
        return true;
      },
      [&](const char* data, std::size_t len) {
        if (out.payload.size() + len > expected) {
          overflow = true;
          return false;
        }
        out.payload.insert(out.payload.end(), data, data + len);
        return true;
      });
  out.elapsed = seconds_since(start);

  if (bad_status != 0) {
    throw Error(ErrorCode::kProtocol,
                who + " answered " + std::to_string(bad_status) + " to a range request");
  }
  if (overflow) throw Error(ErrorCode::kPayloadMismatch, who + " sent more bytes than requested");
  if (!res) throw Error(ErrorCode::kReplicaFailure, who + " fetch failed: " + describe(res));

  std::string expected_range =
      "bytes " + std::to_string(range.start) + "-" + std::to_string(range.end) + "/";
  if (res->get_header_value("Content-Range").rfind(expected_range, 0) != 0) {
    throw Error(ErrorCode::kProtocol, who + " sent Content-Range '" +
                                          res->get_header_value("Content-Range") + "'");
  }
  if (out.payload.size() != expected) {
    throw Error(ErrorCode::kPayloadMismatch, who + " sent " + std::to_string(out.payload.size()) +
                                                 " of " + std::to_string(expected) + " bytes");
  }
  return out;
}

FetchResult fetch_range(ReplicaSession& session, const ChunkAssignment& assignment) {
  return session.fetch(assignment);
}

SizeDiscovery discover_size(std::vector<std::unique_ptr<ReplicaSession>>& sessions) {
  struct Answer {
    std::optional<ReplicaSession::ResourceInfo> info;
    std::exception_ptr error;
  };
  // Every session is queried, in parallel; this also opens each connection.
  std::vector<std::future<Answer>> pending;
  for (auto& session : sessions) {
    pending.push_back(std::async(std::launch::async, [&s = *session] {
      Answer a;
      try {
        a.info = s.query_resource();
      } catch (...) {
        a.error = std::current_exception();
      }
      return a;
    }));
  }

  SizeDiscovery result;
  std::optional<ByteCount> agreed;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    Answer a = pending[i].get();
    const ReplicaId id = sessions[i]->id();
    if (!a.info) {
      result.unreachable.push_back(id);
      continue;
    }
    if (!a.info->accepts_ranges) {
      throw Error(ErrorCode::kUnsupportedServer,
                  "replica " + std::to_string(id) + " does not support byte ranges");
    }
    if (agreed && *agreed != a.info->content_length) {
      throw Error(ErrorCode::kInconsistentReplica,
                  "replica " + std::to_string(id) + " reports " +
                      std::to_string(a.info->content_length) + " bytes, expected " +
                      std::to_string(*agreed));
    }
    agreed = a.info->content_length;
  }
  if (!agreed) throw Error(ErrorCode::kTransferAbort, "no replica responded to the size query");
  result.size = *agreed;
  return result;
}

std::uint64_t WorkSignal::generation() const {
  std::lock_guard lock(mutex_);
  return generation_;
}

void WorkSignal::notify() {
  {
    std::lock_guard lock(mutex_);
    ++generation_;
  }
  cv_.notify_all();
}

void WorkSignal::wait_for_change(std::uint64_t seen, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return generation_ != seen; });
}

ReplicaSummary replica_loop(ReplicaSession& session, ChunkScheduler& scheduler, OutputSink& sink,
                            WorkSignal& signal) {
  ReplicaSummary summary;
  summary.replica = session.id();
  summary.url = session.endpoint().url();

  while (true) {
    const std::uint64_t seen = signal.generation();
    auto decision = scheduler.next_assignment(session.id());
    if (decision.status == ChunkScheduler::Status::kExhausted) break;
    if (decision.status == ChunkScheduler::Status::kWait) {
      signal.wait_for_change(seen, std::chrono::milliseconds(200));
      continue;
    }

    const ChunkAssignment& assignment = *decision.assignment;
    FetchResult fetched;
    try {
      fetched = fetch_range(session, assignment);
    } catch (const Error& e) {
      scheduler.record_failure(assignment);
      signal.notify();
      summary.failed = true;
      summary.failures += 1;
      summary.error = e.what();
      break;
    }

    try {
      sink.write(assignment.range, std::move(fetched.payload));
    } catch (...) {
      scheduler.record_failure(assignment);
      signal.notify();
      throw;
    }
    Rate measured = scheduler.record_completion(assignment, std::max(fetched.elapsed, 1e-9));
    signal.notify();

    summary.bytes += assignment.size();
    summary.request_count += 1;
    summary.chunk_sizes.push_back(assignment.size());
    summary.throughputs.push_back(measured);
    switch (assignment.kind) {
      case ChunkKind::kProbe: summary.probe_requests += 1; break;
      case ChunkKind::kAdaptive: summary.adaptive_requests += 1; break;
      case ChunkKind::kStatic: summary.static_requests += 1; break;
    }
  }
  summary.connections = session.connections_opened();
  return summary;
}

TransferReport download(const std::vector<ReplicaEndpoint>& endpoints, const TransferOptions& options,
                        OutputSink& sink) {
  if (endpoints.empty()) throw Error(ErrorCode::kInvalidInput, "no replica endpoints given");
  std::set<ReplicaId> ids;
  for (const auto& e : endpoints) {
    if (!ids.insert(e.id).second) {
      throw Error(ErrorCode::kInvalidInput, "duplicate replica id " + std::to_string(e.id));
    }
  }

  std::vector<std::unique_ptr<ReplicaSession>> sessions;
  for (const auto& e : endpoints) sessions.push_back(std::make_unique<ReplicaSession>(e, options.session));

  SizeDiscovery discovery = discover_size(sessions);
  const ByteCount file_size = discovery.size;

  TransferReport report;
  report.file_size = file_size;
  report.policy = policy_name(options.policy);
  report.discarded = sink.discards();
  sink.open(file_size);

  std::vector<ReplicaSummary> summaries(sessions.size());
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    summaries[i].replica = sessions[i]->id();
    summaries[i].url = sessions[i]->endpoint().url();
  }
  for (auto id : discovery.unreachable) {
    for (auto& s : summaries) {
      if (s.replica == id) {
        s.failed = true;
        s.error = "unreachable during size discovery";
      }
    }
  }

  if (file_size == 0) {
    report.digest = sink.finish();
    report.replicas = std::move(summaries);
    return report;
  }

  ChunkParams params = options.chunk_params.value_or(select_chunk_params(file_size));
  report.config = make_scheduler_config(file_size, params);
  ChunkPolicy policy = options.policy;
  if (auto* fixed = std::get_if<StaticPolicy>(&policy); fixed && fixed->chunk_size == 0) {
    fixed->chunk_size = report.config.large_chunk;
  }
  if (const auto* fixed = std::get_if<StaticPolicy>(&policy)) report.static_chunk = fixed->chunk_size;

  ChunkScheduler scheduler(report.config, policy);
  for (auto id : discovery.unreachable) scheduler.exclude(id);

  WorkSignal signal;
  std::vector<std::exception_ptr> errors(sessions.size());
  auto start = Clock::now();
  {
    std::vector<std::jthread> loops;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      if (summaries[i].failed) continue;
      loops.emplace_back([&, i] {
        try {
          summaries[i] = replica_loop(*sessions[i], scheduler, sink, signal);
        } catch (...) {
          errors[i] = std::current_exception();
          summaries[i].failed = true;
          signal.notify();
        }
      });
    }
  }
  report.total_wall_time = seconds_since(start);

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.events = scheduler.events();
  report.replicas = std::move(summaries);

  std::size_t used = 0;
  for (auto& s : report.replicas) {
    auto it = std::find_if(sessions.begin(), sessions.end(),
                           [&](const auto& p) { return p->id() == s.replica; });
    s.connections = (*it)->connections_opened();
    if (s.request_count > 0) ++used;
  }
  report.replicas_used_fraction = static_cast<double>(used) / static_cast<double>(report.replicas.size());

  if (!scheduler.finished()) {
    bool all_failed = std::all_of(report.replicas.begin(), report.replicas.end(),
                                  [](const ReplicaSummary& s) { return s.failed; });
    if (all_failed) {
      throw Error(ErrorCode::kTransferAbort, "every replica failed; " +
                                                 std::to_string(scheduler.unallocated_bytes()) +
                                                 " bytes never fetched");
    }
    throw Error(ErrorCode::kIncompleteTransfer,
                std::to_string(scheduler.unallocated_bytes()) + " bytes were not recovered");
  }
  report.digest = sink.finish();
  return report;
}

nlohmann::json to_json(const SchedulerEvent& event) {
  const auto& a = event.assignment;
  nlohmann::json j = {{"event", to_string(event.type)},
                      {"replica_id", a.replica},
                      {"start", a.range.start},
                      {"end", a.range.end},
                      {"size", a.size()},
                      {"kind", to_string(a.kind)},
                      {"round", a.round},
                      {"timestamp", event.timestamp}};
  if (event.type == SchedulerEvent::Type::kCompleted) j["elapsed"] = event.elapsed;
  return j;
}

nlohmann::json to_json(const SchedulerConfig& config) {
  return {{"file_size", config.file_size},
          {"initial_chunk", config.initial_chunk},
          {"large_chunk", config.large_chunk},
          {"min_chunk", config.min_chunk},
          {"ewma_weight", config.ewma_weight ? nlohmann::json(*config.ewma_weight) : nlohmann::json()}};
}

nlohmann::json to_json(const ReplicaSummary& s) {
  return {{"replica_id", s.replica},
          {"url", s.url},
          {"bytes", s.bytes},
          {"request_count", s.request_count},
          {"probe_requests", s.probe_requests},
          {"adaptive_requests", s.adaptive_requests},
          {"static_requests", s.static_requests},
          {"failures", s.failures},
          {"connections", s.connections},
          {"chunk_sizes", s.chunk_sizes},
          {"throughputs", s.throughputs},
          {"failed", s.failed},
          {"error", s.error}};
}

nlohmann::json to_json(const TransferReport& report, bool include_events) {
  nlohmann::json replicas = nlohmann::json::array();
  for (const auto& s : report.replicas) replicas.push_back(to_json(s));
  nlohmann::json j = {{"file_size", report.file_size},
                      {"total_wall_time", report.total_wall_time},
                      {"policy", report.policy},
                      {"config", to_json(report.config)},
                      {"replicas", replicas},
                      {"replicas_used_fraction", report.replicas_used_fraction},
                      {"digest", report.digest},
                      {"discarded", report.discarded}};
  if (report.policy == "static") j["static_chunk"] = report.static_chunk;
  if (include_events) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : report.events) events.push_back(to_json(e));
    j["events"] = events;
  }
  return j;
}

}  // namespace mdtp
