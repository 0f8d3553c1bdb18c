#include "mdtp/testbed.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <httplib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "mdtp/error.hpp"
#include "mdtp/token_bucket.hpp"

namespace mdtp::testbed {

namespace {

constexpr std::size_t kSendSlice = 16 * 1024;
constexpr std::size_t kWorkerThreads = 8;

/// Forwards to a thread pool and counts every accepted connection; httplib
/// enqueues exactly one task per accept().
class CountingTaskQueue final : public httplib::TaskQueue {
 public:
  CountingTaskQueue(std::atomic<std::uint64_t>& accepts, std::size_t threads)
      : accepts_(accepts), pool_(threads) {}

  bool enqueue(std::function<void()> fn) override {
    accepts_.fetch_add(1, std::memory_order_relaxed);
    return pool_.enqueue(std::move(fn));
  }
  void shutdown() override { pool_.shutdown(); }

 private:
  std::atomic<std::uint64_t>& accepts_;
  httplib::ThreadPool pool_;
};

}  // namespace

void TestbedSpec::validate() const {
  if (replicas.empty()) throw Error(ErrorCode::kInvalidInput, "testbed needs at least one replica");
  if (burst == 0) throw Error(ErrorCode::kInvalidInput, "burst must be positive");
  std::set<ReplicaId> ids;
  std::set<std::uint16_t> ports;
  for (const auto& r : replicas) {
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::kInvalidInput, "duplicate replica id " + std::to_string(r.id));
    }
    if (r.port != 0 && !ports.insert(r.port).second) {
      throw Error(ErrorCode::kInvalidInput, "duplicate port " + std::to_string(r.port));
    }
    if (r.rate_limit && !(*r.rate_limit > 0)) {
      throw Error(ErrorCode::kInvalidInput, "rate limit must be positive");
    }
    if (r.added_latency < 0 || r.latency_jitter < 0) {
      throw Error(ErrorCode::kInvalidInput, "latency must be non-negative");
    }
  }
}

TestbedSpec parse_testbed_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  TestbedSpec spec;
  try {
    std::filesystem::path source = doc.at("source").get<std::string>();
    spec.source = source.is_relative() && !base_dir.empty() ? base_dir / source : source;
    spec.host = doc.value("host", spec.host);
    spec.burst = doc.value("burst_bytes", spec.burst);
    spec.seed = doc.value("seed", spec.seed);
    for (const auto& r : doc.at("replicas")) {
      ReplicaProfile p;
      p.id = r.at("id").get<ReplicaId>();
      p.port = r.value("port", std::uint16_t{0});
      if (r.contains("rate_bytes_per_sec") && !r["rate_bytes_per_sec"].is_null()) {
        p.rate_limit = r["rate_bytes_per_sec"].get<double>();
      }
      p.added_latency = r.value("latency_ms", 0.0) / 1000.0;
      p.latency_jitter = r.value("jitter_ms", 0.0) / 1000.0;
      if (r.contains("fail_after_bytes") && !r["fail_after_bytes"].is_null()) {
        p.fail_after = r["fail_after_bytes"].get<ByteCount>();
      }
      spec.replicas.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, std::string("bad testbed spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

TestbedSpec load_testbed_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidInput, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
  return parse_testbed_spec(doc, path.parent_path());
}

nlohmann::json to_json(const TestbedSpec& spec) {
  nlohmann::json replicas = nlohmann::json::array();
  for (const auto& r : spec.replicas) {
    replicas.push_back({
        {"id", r.id},
        {"port", r.port},
        {"rate_bytes_per_sec", r.rate_limit ? nlohmann::json(*r.rate_limit) : nlohmann::json()},
        {"latency_ms", r.added_latency * 1000.0},
        {"jitter_ms", r.latency_jitter * 1000.0},
        {"fail_after_bytes", r.fail_after ? nlohmann::json(*r.fail_after) : nlohmann::json()},
    });
  }
  return {{"source", spec.source.string()},
          {"host", spec.host},
          {"burst_bytes", spec.burst},
          {"seed", spec.seed},
          {"replicas", replicas}};
}

nlohmann::json to_json(const ReplicaCounters& c) {
  return {{"connections_accepted", c.connections_accepted},
          {"requests", c.requests},
          {"bytes_served", c.bytes_served},
          {"failed", c.failed}};
}

class Testbed::ReplicaServer {
 public:
  ReplicaServer(const ReplicaProfile& profile, const TestbedSpec& spec, int fd, ByteCount file_size,
                std::string resource_path)
      : profile_(profile), fd_(fd), file_size_(file_size), rng_(spec.seed * 1000003 + profile.id) {
    if (profile.rate_limit) bucket_.emplace(*profile.rate_limit, spec.burst);

    server_.new_task_queue = [this] { return new CountingTaskQueue(accepts_, kWorkerThreads); };
    server_.set_keep_alive_max_count(std::size_t{1} << 30);
    server_.set_keep_alive_timeout(60);
    // httplib's default adds SO_REUSEPORT, which would let a second testbed
    // bind a port that is already serving.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server_.Get(resource_path, [this](const httplib::Request& req, httplib::Response& res) {
      serve(req, res);
    });
    server_.Get("/_testbed/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(to_json(counters()).dump(), "application/json");
    });

    port_ = profile.port == 0 ? server_.bind_to_any_port(spec.host)
                              : (server_.bind_to_port(spec.host, profile.port) ? profile.port : -1);
    if (port_ < 0) {
      throw Error(ErrorCode::kStartup, "replica " + std::to_string(profile.id) + ": cannot bind " +
                                           spec.host + ":" + std::to_string(profile.port));
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ReplicaServer() { stop(); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  ReplicaCounters counters() const {
    return ReplicaCounters{accepts_.load(), requests_.load(), served_.load(), failed_.load()};
  }

 private:
  double draw_latency() {
    double latency = profile_.added_latency;
    if (profile_.latency_jitter > 0) {
      std::lock_guard lock(rng_mutex_);
      latency += std::uniform_real_distribution<double>(0.0, profile_.latency_jitter)(rng_);
    }
    return latency;
  }

  void serve(const httplib::Request&, httplib::Response& res) {
    requests_.fetch_add(1);
    if (failed_.load()) {
      res.status = httplib::StatusCode::ServiceUnavailable_503;
      return;
    }
    if (double latency = draw_latency(); latency > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(latency));
    }
    // httplib resolves the Range header against the declared length, answers
    // 206 with Content-Range, and rejects unsatisfiable ranges with 416.
    res.set_content_provider(
        file_size_, "application/octet-stream",
        [this](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
          return send_slice(offset, length, sink);
        });
  }

  bool send_slice(std::size_t offset, std::size_t length, httplib::DataSink& sink) {
    std::size_t n = std::min(length, kSendSlice);
    if (profile_.fail_after) {
      std::uint64_t served = served_.load();
      if (served >= *profile_.fail_after) {
        failed_.store(true);
        return false;
      }
      n = static_cast<std::size_t>(std::min<std::uint64_t>(n, *profile_.fail_after - served));
    }
    char buf[kSendSlice];
    ssize_t got = ::pread(fd_, buf, n, static_cast<off_t>(offset));
    if (got <= 0) return false;
    if (bucket_) bucket_->acquire(static_cast<ByteCount>(got));
    if (!sink.write(buf, static_cast<std::size_t>(got))) return false;
    served_.fetch_add(static_cast<std::uint64_t>(got));
    return true;
  }

  const ReplicaProfile profile_;
  const int fd_;
  const ByteCount file_size_;
  std::optional<TokenBucket> bucket_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;

  std::atomic<std::uint64_t> accepts_{0};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> served_{0};
  std::atomic<bool> failed_{false};

  httplib::Server server_;
  int port_ = -1;
  std::thread thread_;
};

Testbed::Testbed(TestbedSpec spec) : spec_(std::move(spec)) {}

std::unique_ptr<Testbed> Testbed::start(const TestbedSpec& spec) {
  spec.validate();
  std::unique_ptr<Testbed> bed(new Testbed(spec));
  bed->fd_ = ::open(spec.source.c_str(), O_RDONLY | O_CLOEXEC);
  if (bed->fd_ < 0) {
    throw Error(ErrorCode::kStartup,
                "cannot open source " + spec.source.string() + ": " + std::strerror(errno));
  }
  struct stat st {};
  if (::fstat(bed->fd_, &st) != 0 || !S_ISREG(st.st_mode)) {
    throw Error(ErrorCode::kStartup, "source is not a regular file: " + spec.source.string());
  }
  bed->file_size_ = static_cast<ByteCount>(st.st_size);

  std::string resource = "/" + spec.source.filename().string();
  for (const auto& profile : spec.replicas) {
    auto server = std::make_unique<ReplicaServer>(profile, bed->spec_, bed->fd_, bed->file_size_, resource);
    bed->endpoints_.push_back(ReplicaEndpoint{
        profile.id, "http://" + spec.host + ":" + std::to_string(server->port()), resource});
    bed->servers_.push_back(std::move(server));
  }
  return bed;
}

Testbed::~Testbed() {
  stop();
  if (fd_ >= 0) ::close(fd_);
}

void Testbed::stop() {
  for (auto& s : servers_) s->stop();
}

ReplicaCounters Testbed::counters(ReplicaId replica) const {
  for (std::size_t i = 0; i < spec_.replicas.size(); ++i) {
    if (spec_.replicas[i].id == replica) return servers_[i]->counters();
  }
  throw Error(ErrorCode::kInvalidInput, "unknown replica " + std::to_string(replica));
}

std::vector<ReplicaCounters> Testbed::all_counters() const {
  std::vector<ReplicaCounters> out;
  for (const auto& s : servers_) out.push_back(s->counters());
  return out;
}

std::uint64_t Testbed::total_connections() const {
  std::uint64_t total = 0;
  for (const auto& s : servers_) total += s->counters().connections_accepted;
  return total;
}

}  // namespace mdtp::testbed
