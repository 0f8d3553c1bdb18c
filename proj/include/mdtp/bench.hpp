#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdtp/chunk_params.hpp"
#include "mdtp/chunk_scheduler.hpp"
#include "mdtp/testbed.hpp"

namespace mdtp::bench {

struct Summary {
  double mean = 0;
  double standard_error = 0;  // sample stddev / sqrt(n)
  std::size_t samples = 0;
  bool single_sample = false;  // n == 1, standard error reported as 0
};

/// Mean and standard error of repeated measurements. Throws
/// Error(kInvalidInput) on an empty sample.
Summary summarize(std::span<const double> values);

/// Network condition applied to the replica with the highest configured rate
/// (unthrottled counts as highest; ties go to the lowest id).
struct Condition {
  enum class Kind { kBaseline, kAddLatency, kThrottle };

  Kind kind = Kind::kBaseline;
  double latency = 0;      // seconds, kAddLatency
  Rate throttle_rate = 0;  // bytes/second, kThrottle

  static Condition baseline() { return {}; }
  static Condition add_latency(double seconds) { return {Kind::kAddLatency, seconds, 0}; }
  static Condition throttle(Rate rate) { return {Kind::kThrottle, 0, rate}; }

  std::string name() const;
};

/// Id of the replica a condition targets.
ReplicaId fastest_configured(const std::vector<testbed::ReplicaProfile>& replicas);

/// Profiles with `condition` applied to the fastest configured replica.
std::vector<testbed::ReplicaProfile> apply_condition(std::vector<testbed::ReplicaProfile> replicas,
                                                     const Condition& condition);

struct ExperimentSpec {
  std::vector<ByteCount> sizes;
  std::vector<ChunkPolicy> policies;  // StaticPolicy{0} means "use the large chunk"
  std::size_t repeats = 10;
  std::optional<ChunkParams> chunk_params;  // unset: select_chunk_params(size)
  std::vector<testbed::ReplicaProfile> replicas;
  std::vector<Condition> conditions = {Condition::baseline()};
  std::uint64_t seed = 1;
  bool include_disk = false;  // write to a file instead of discarding
  bool simulate = false;      // virtual-clock model instead of the local testbed
  std::filesystem::path work_dir;  // scratch space; default temp directory

  void validate() const;
};

/// JSON layout:
///   {"sizes": ["64MiB", 1048576], "policies": ["mdtp", "static", "static:8MiB"],
///    "repeats": 10, "initial_chunk": "1MiB", "large_chunk": "10MiB",
///    "conditions": ["baseline", {"add_latency_ms": 500},
///                   {"throttle_bytes_per_sec": 1048576}],
///    "replicas": [{"id": 1, "rate_bytes_per_sec": 1e7, "latency_ms": 0}],
///    "seed": 1, "include_disk": false, "simulate": false}
ExperimentSpec parse_experiment_spec(const nlohmann::json& doc);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct RunRecord {
  bool ok = false;
  std::string error;
  double time = 0;
  double utilization = 0;
  bool digest_ok = false;
  std::uint64_t connections = 0;  // accepted by the testbed during the run
  std::map<ReplicaId, std::uint64_t> requests;
  std::map<ReplicaId, std::uint64_t> adaptive_requests;
  std::map<ReplicaId, ByteCount> bytes;
  std::map<ReplicaId, std::vector<ByteCount>> chunk_sizes;
};

struct CellReport {
  ByteCount size = 0;
  std::string policy;
  std::string condition;
  std::vector<RunRecord> runs;
  Summary time;
  double utilization = 0;  // mean over successful runs
  std::map<ReplicaId, double> mean_requests;
  bool incomplete = false;
};

struct BenchReport {
  std::vector<CellReport> cells;

  const CellReport* find(ByteCount size, const std::string& policy, const std::string& condition) const;
};

using Progress = std::function<void(const std::string&)>;

/// Runs every (size, condition, policy) cell `repeats` times, one cell after
/// another. A failed run is recorded and marks its cell incomplete; it does
/// not stop the matrix.
BenchReport run_experiment(const ExperimentSpec& spec, const Progress& progress = {});

/// Deterministic pseudo-random file of `size` bytes.
void write_random_file(const std::filesystem::path& path, ByteCount size, std::uint64_t seed);

nlohmann::json to_json(const BenchReport& report);
std::string format_table(const BenchReport& report);
std::string format_csv(const BenchReport& report);

}  // namespace mdtp::bench
