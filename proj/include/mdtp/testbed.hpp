#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdtp/endpoint.hpp"
#include "mdtp/units.hpp"

namespace mdtp::testbed {

inline constexpr ByteCount kDefaultBurst = 64 * kKiB;

/// Behaviour of one local replica server.
struct ReplicaProfile {
  ReplicaId id = 0;
  std::optional<Rate> rate_limit;        // bytes/second; unset = unthrottled
  double added_latency = 0;              // seconds slept before each response
  double latency_jitter = 0;             // extra uniform [0, jitter] seconds
  std::optional<ByteCount> fail_after;   // kill switch on body bytes served
  std::uint16_t port = 0;                // 0 binds an ephemeral port
};

struct TestbedSpec {
  std::filesystem::path source;
  std::vector<ReplicaProfile> replicas;
  std::string host = "127.0.0.1";
  ByteCount burst = kDefaultBurst;
  std::uint64_t seed = 1;  // jitter draws

  /// Throws Error(kInvalidInput) on empty profiles, duplicate ids or ports,
  /// non-positive rates or negative latencies.
  void validate() const;
};

/// Spec file layout (latencies in milliseconds, rates in bytes/second):
///   {"source": "data.bin", "host": "127.0.0.1", "burst_bytes": 65536,
///    "replicas": [{"id": 1, "port": 0, "rate_bytes_per_sec": 1048576,
///                  "latency_ms": 500, "jitter_ms": 0,
///                  "fail_after_bytes": null}]}
/// A relative "source" resolves against `base_dir`.
TestbedSpec parse_testbed_spec(const nlohmann::json& doc,
                               const std::filesystem::path& base_dir = {});
TestbedSpec load_testbed_spec(const std::filesystem::path& path);
nlohmann::json to_json(const TestbedSpec& spec);

struct ReplicaCounters {
  std::uint64_t connections_accepted = 0;
  std::uint64_t requests = 0;
  std::uint64_t bytes_served = 0;
  bool failed = false;  // kill switch tripped
};

nlohmann::json to_json(const ReplicaCounters& counters);

/// A set of local HTTP replica servers serving one file with byte-range
/// support, each paced by its own token bucket and delayed by its profile's
/// latency. Servers run until stop() or destruction.
class Testbed {
 public:
  /// Throws Error(kStartup) if the source is unreadable or a port is taken.
  static std::unique_ptr<Testbed> start(const TestbedSpec& spec);

  ~Testbed();
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  const std::vector<ReplicaEndpoint>& endpoints() const { return endpoints_; }
  ByteCount file_size() const { return file_size_; }
  const TestbedSpec& spec() const { return spec_; }

  ReplicaCounters counters(ReplicaId replica) const;
  std::vector<ReplicaCounters> all_counters() const;
  std::uint64_t total_connections() const;

  void stop();

 private:
  class ReplicaServer;

  explicit Testbed(TestbedSpec spec);

  TestbedSpec spec_;
  int fd_ = -1;
  ByteCount file_size_ = 0;
  std::vector<std::unique_ptr<ReplicaServer>> servers_;
  std::vector<ReplicaEndpoint> endpoints_;
};

}  // namespace mdtp::testbed
