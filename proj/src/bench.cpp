#include "mdtp/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mdtp/digest.hpp"
#include "mdtp/error.hpp"
#include "mdtp/simulation.hpp"
#include "mdtp/transfer.hpp"

namespace mdtp::bench {

namespace {

std::string policy_label(const ChunkPolicy& policy) {
  if (const auto* fixed = std::get_if<StaticPolicy>(&policy)) {
    return fixed->chunk_size == 0 ? "static" : "static:" + format_byte_size(fixed->chunk_size);
  }
  return "mdtp";
}

ChunkPolicy parse_policy(const std::string& text) {
  if (text == "mdtp") return MdtpPolicy{};
  if (text == "static") return StaticPolicy{0};
  if (text.rfind("static:", 0) == 0) return StaticPolicy{parse_byte_size(text.substr(7))};
  throw Error(ErrorCode::kInvalidInput, "unknown policy '" + text + "'");
}

ByteCount parse_size_value(const nlohmann::json& v) {
  if (v.is_string()) return parse_byte_size(v.get<std::string>());
  return v.get<ByteCount>();
}

Condition parse_condition(const nlohmann::json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "baseline") return Condition::baseline();
    throw Error(ErrorCode::kInvalidInput, "unknown condition " + v.dump());
  }
  if (v.contains("add_latency_ms")) return Condition::add_latency(v["add_latency_ms"].get<double>() / 1000.0);
  if (v.contains("throttle_bytes_per_sec")) return Condition::throttle(v["throttle_bytes_per_sec"].get<double>());
  throw Error(ErrorCode::kInvalidInput, "unknown condition " + v.dump());
}

double configured_rate(const testbed::ReplicaProfile& p) {
  return p.rate_limit.value_or(std::numeric_limits<double>::infinity());
}

}  // namespace

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidInput, "cannot summarize an empty sample");
  Summary s;
  s.samples = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() == 1) {
    s.single_sample = true;
    return s;
  }
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  double stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  s.standard_error = stddev / std::sqrt(static_cast<double>(values.size()));
  return s;
}

std::string Condition::name() const {
  switch (kind) {
    case Kind::kBaseline: return "baseline";
    case Kind::kAddLatency: return fmt::format("latency+{}ms", std::lround(latency * 1000.0));
    case Kind::kThrottle: return fmt::format("throttle@{}B/s", std::llround(throttle_rate));
  }
  return "unknown";
}

ReplicaId fastest_configured(const std::vector<testbed::ReplicaProfile>& replicas) {
  if (replicas.empty()) throw Error(ErrorCode::kInvalidInput, "no replicas configured");
  const testbed::ReplicaProfile* best = &replicas.front();
  for (const auto& p : replicas) {
    double rate = configured_rate(p);
    double best_rate = configured_rate(*best);
    if (rate > best_rate || (rate == best_rate && p.id < best->id)) best = &p;
  }
  return best->id;
}

std::vector<testbed::ReplicaProfile> apply_condition(std::vector<testbed::ReplicaProfile> replicas,
                                                     const Condition& condition) {
  if (condition.kind == Condition::Kind::kBaseline) return replicas;
  ReplicaId target = fastest_configured(replicas);
  for (auto& p : replicas) {
    if (p.id != target) continue;
    if (condition.kind == Condition::Kind::kAddLatency) p.added_latency += condition.latency;
    if (condition.kind == Condition::Kind::kThrottle) p.rate_limit = condition.throttle_rate;
  }
  return replicas;
}

void ExperimentSpec::validate() const {
  if (sizes.empty() || std::find(sizes.begin(), sizes.end(), 0u) != sizes.end()) {
    throw Error(ErrorCode::kInvalidInput, "experiment sizes must be non-empty and positive");
  }
  if (policies.empty()) throw Error(ErrorCode::kInvalidInput, "experiment needs at least one policy");
  if (repeats < 1) throw Error(ErrorCode::kInvalidInput, "repeats must be >= 1");
  if (conditions.empty()) throw Error(ErrorCode::kInvalidInput, "experiment needs a condition");
  if (replicas.empty()) throw Error(ErrorCode::kInvalidInput, "experiment needs replicas");
  if (simulate) {
    for (const auto& p : replicas) {
      if (!p.rate_limit) throw Error(ErrorCode::kInvalidInput, "simulation needs a rate for every replica");
    }
  }
  testbed::TestbedSpec probe;
  probe.replicas = replicas;
  probe.validate();
}

ExperimentSpec parse_experiment_spec(const nlohmann::json& doc) {
  ExperimentSpec spec;
  try {
    for (const auto& s : doc.at("sizes")) spec.sizes.push_back(parse_size_value(s));
    spec.policies.clear();
    for (const auto& p : doc.value("policies", nlohmann::json::array({"mdtp", "static"}))) {
      spec.policies.push_back(parse_policy(p.get<std::string>()));
    }
    spec.repeats = doc.value("repeats", spec.repeats);
    if (doc.contains("initial_chunk") || doc.contains("large_chunk")) {
      ChunkParams params;
      params.initial_chunk = parse_size_value(doc.at("initial_chunk"));
      params.large_chunk = parse_size_value(doc.at("large_chunk"));
      if (doc.contains("min_chunk")) params.min_chunk = parse_size_value(doc["min_chunk"]);
      spec.chunk_params = params;
    }
    if (doc.contains("conditions")) {
      spec.conditions.clear();
      for (const auto& c : doc["conditions"]) spec.conditions.push_back(parse_condition(c));
    }
    nlohmann::json bed = {{"source", "unused"}, {"replicas", doc.at("replicas")}};
    spec.replicas = testbed::parse_testbed_spec(bed).replicas;
    spec.seed = doc.value("seed", spec.seed);
    spec.include_disk = doc.value("include_disk", false);
    spec.simulate = doc.value("simulate", false);
    if (doc.contains("work_dir")) spec.work_dir = doc["work_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("bad experiment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidInput, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
  return parse_experiment_spec(doc);
}

void write_random_file(const std::filesystem::path& path, ByteCount size, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidInput, "cannot write " + path.string());
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> block(1 << 17);
  ByteCount left = size;
  while (left > 0) {
    for (auto& w : block) w = rng();
    std::size_t n = static_cast<std::size_t>(std::min<ByteCount>(left, block.size() * sizeof(std::uint64_t)));
    out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(n));
    left -= n;
  }
  if (!out) throw Error(ErrorCode::kInvalidInput, "short write to " + path.string());
}

const CellReport* BenchReport::find(ByteCount size, const std::string& policy,
                                    const std::string& condition) const {
  for (const auto& c : cells) {
    if (c.size == size && c.policy == policy && c.condition == condition) return &c;
  }
  return nullptr;
}

namespace {

RunRecord record_from(const TransferReport& report) {
  RunRecord rec;
  rec.ok = true;
  rec.time = report.total_wall_time;
  rec.utilization = report.replicas_used_fraction;
  for (const auto& r : report.replicas) {
    rec.requests[r.replica] = r.request_count;
    rec.adaptive_requests[r.replica] = r.adaptive_requests;
    rec.bytes[r.replica] = r.bytes;
    rec.chunk_sizes[r.replica] = r.chunk_sizes;
  }
  return rec;
}

RunRecord simulated_run(const ExperimentSpec& spec, ByteCount size, const ChunkPolicy& policy,
                        const std::vector<testbed::ReplicaProfile>& profiles) {
  ChunkParams params = spec.chunk_params.value_or(select_chunk_params(size));
  SchedulerConfig config = make_scheduler_config(size, params);
  ChunkPolicy resolved = policy;
  if (auto* fixed = std::get_if<StaticPolicy>(&resolved); fixed && fixed->chunk_size == 0) {
    fixed->chunk_size = config.large_chunk;
  }
  std::vector<sim::SimReplica> replicas;
  for (const auto& p : profiles) replicas.push_back({p.id, *p.rate_limit, p.added_latency, std::nullopt});
  sim::SimResult sim = sim::simulate(config, resolved, replicas);

  RunRecord rec;
  rec.ok = true;
  rec.digest_ok = true;
  rec.time = sim.makespan;
  rec.utilization = sim.utilization;
  rec.connections = profiles.size();
  for (const auto& [id, r] : sim.replicas) {
    rec.requests[id] = r.requests;
    rec.adaptive_requests[id] = r.adaptive_requests;
    rec.bytes[id] = r.bytes;
    rec.chunk_sizes[id] = r.chunk_sizes;
  }
  return rec;
}

void finalize(CellReport& cell) {
  std::vector<double> times;
  double util = 0;
  std::map<ReplicaId, double> requests;
  for (const auto& run : cell.runs) {
    if (!run.ok || !run.digest_ok) {
      cell.incomplete = true;
      continue;
    }
    times.push_back(run.time);
    util += run.utilization;
    for (const auto& [id, n] : run.requests) requests[id] += static_cast<double>(n);
  }
  if (times.empty()) return;
  cell.time = summarize(times);
  cell.utilization = util / static_cast<double>(times.size());
  for (auto& [id, total] : requests) cell.mean_requests[id] = total / static_cast<double>(times.size());
}

}  // namespace

BenchReport run_experiment(const ExperimentSpec& spec, const Progress& progress) {
  spec.validate();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  std::filesystem::path work = spec.work_dir.empty() ? std::filesystem::temp_directory_path() : spec.work_dir;
  std::filesystem::create_directories(work);

  BenchReport report;
  for (ByteCount size : spec.sizes) {
    std::filesystem::path source = work / fmt::format("mdtp-bench-{}-{}.bin", size, spec.seed);
    std::string source_digest;
    if (!spec.simulate) {
      write_random_file(source, size, spec.seed ^ size);
      source_digest = sha256_file(source);
    }

    for (const auto& condition : spec.conditions) {
      auto profiles = apply_condition(spec.replicas, condition);
      std::unique_ptr<testbed::Testbed> bed;
      if (!spec.simulate) {
        testbed::TestbedSpec tb;
        tb.source = source;
        tb.replicas = profiles;
        for (auto& p : tb.replicas) p.port = 0;
        tb.seed = spec.seed;
        bed = testbed::Testbed::start(tb);
      }

      for (const auto& policy : spec.policies) {
        CellReport cell;
        cell.size = size;
        cell.policy = policy_label(policy);
        cell.condition = condition.name();
        for (std::size_t run = 0; run < spec.repeats; ++run) {
          if (spec.simulate) {
            cell.runs.push_back(simulated_run(spec, size, policy, profiles));
            continue;
          }
          RunRecord rec;
          std::uint64_t before = bed->total_connections();
          std::filesystem::path out_path = work / fmt::format("mdtp-bench-out-{}.bin", spec.seed);
          try {
            OutputSink sink(spec.include_disk ? OutputTarget{FileOutput{out_path}} : OutputTarget{DiscardOutput{}});
            TransferOptions options;
            options.policy = policy;
            options.chunk_params = spec.chunk_params;
            TransferReport transfer = download(bed->endpoints(), options, sink);
            rec = record_from(transfer);
            rec.digest_ok = transfer.digest == source_digest;
            if (!rec.digest_ok) rec.error = "digest mismatch";
          } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
          }
          rec.connections = bed->total_connections() - before;
          if (spec.include_disk) std::filesystem::remove(out_path);
          say(fmt::format("{} {} {} run {}/{}: {}", format_byte_size(size), cell.condition, cell.policy,
                          run + 1, spec.repeats,
                          rec.ok ? fmt::format("{:.3f}s", rec.time) : "FAILED: " + rec.error));
          cell.runs.push_back(std::move(rec));
        }
        finalize(cell);
        report.cells.push_back(std::move(cell));
      }
    }
    if (!spec.simulate) std::filesystem::remove(source);
  }
  return report;
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : c.runs) {
      nlohmann::json per_replica = nlohmann::json::array();
      for (const auto& [id, n] : r.requests) {
        per_replica.push_back({{"replica_id", id},
                               {"requests", n},
                               {"adaptive_requests", r.adaptive_requests.at(id)},
                               {"bytes", r.bytes.at(id)},
                               {"chunk_sizes", r.chunk_sizes.at(id)}});
      }
      runs.push_back({{"ok", r.ok},
                      {"error", r.error},
                      {"time", r.time},
                      {"utilization", r.utilization},
                      {"digest_ok", r.digest_ok},
                      {"connections", r.connections},
                      {"replicas", per_replica}});
    }
    nlohmann::json mean_requests = nlohmann::json::object();
    for (const auto& [id, n] : c.mean_requests) mean_requests[std::to_string(id)] = n;
    cells.push_back({{"size", c.size},
                     {"policy", c.policy},
                     {"condition", c.condition},
                     {"mean_time", c.time.mean},
                     {"standard_error", c.time.standard_error},
                     {"samples", c.time.samples},
                     {"single_sample", c.time.single_sample},
                     {"utilization", c.utilization},
                     {"mean_requests", mean_requests},
                     {"incomplete", c.incomplete},
                     {"runs", runs}});
  }
  return {{"cells", cells}};
}

std::string format_table(const BenchReport& report) {
  std::ostringstream out;
  out << fmt::format("{:>9}  {:<24} {:<14} {:>4} {:>10} {:>9} {:>6}  {}\n", "size", "condition", "policy",
                     "runs", "mean[s]", "se[s]", "util", "mean requests per replica");
  for (const auto& c : report.cells) {
    std::string reqs;
    for (const auto& [id, n] : c.mean_requests) reqs += fmt::format("r{}={:.1f} ", id, n);
    out << fmt::format("{:>9}  {:<24} {:<14} {:>4} {:>10.3f} {:>9.3f} {:>6.2f}  {}{}\n",
                       format_byte_size(c.size), c.condition, c.policy, c.time.samples, c.time.mean,
                       c.time.standard_error, c.utilization, reqs, c.incomplete ? " INCOMPLETE" : "");
  }
  return out.str();
}

std::string format_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "size,condition,policy,runs,mean_time,standard_error,utilization,incomplete\n";
  for (const auto& c : report.cells) {
    out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.4f},{}\n", c.size, c.condition, c.policy,
                       c.time.samples, c.time.mean, c.time.standard_error, c.utilization,
                       c.incomplete ? 1 : 0);
  }
  return out.str();
}

}  // namespace mdtp::bench
