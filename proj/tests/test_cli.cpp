#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include "mdtp/digest.hpp"
#include "mdtp/testbed.hpp"
#include "support.hpp"

using namespace mdtp;

namespace {

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& args) {
  std::string cmd = std::string(MDTP_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

struct Served {
  test::TempDir dir;
  std::vector<char> data = test::random_bytes(2 * kMiB + 5, 77);
  std::unique_ptr<testbed::Testbed> bed;
  std::string urls;

  Served() {
    testbed::TestbedSpec spec;
    spec.source = test::write_file(dir / "data.bin", data);
    for (ReplicaId id = 1; id <= 6; ++id) spec.replicas.push_back(test::profile(id));
    bed = testbed::Testbed::start(spec);
    for (const auto& e : bed->endpoints()) urls += " " + e.url();
  }
};

}  // namespace

TEST(Cli, DownloadToFilePrintsDigest) {
  Served s;
  auto out = s.dir / "copy.bin";
  auto report = s.dir / "report.json";
  auto r = run("download --policy mdtp --out " + out.string() + " --report " + report.string() + s.urls);
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("sha256 " + sha256_hex(s.data)), std::string::npos) << r.output;
  EXPECT_EQ(test::read_file(out), s.data);
  EXPECT_TRUE(std::filesystem::exists(report));
}

TEST(Cli, StaticDiscardWritesNothing) {
  Served s;
  auto before = std::distance(std::filesystem::directory_iterator(s.dir.path()), {});
  auto r = run("download --policy static --chunk-size 8MiB --discard" + s.urls);
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find(sha256_hex(s.data)), std::string::npos);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(s.dir.path()), {}), before);
}

TEST(Cli, UnreachableReplicaExitsWithAbortCode) {
  auto r = run("download --discard http://127.0.0.1:1/data.bin");
  EXPECT_EQ(r.status, 2) << r.output;
}

TEST(Cli, InconsistentReplicasHaveTheirOwnCode) {
  test::TempDir dir;
  testbed::TestbedSpec a, b;
  a.source = test::write_file(dir / "a.bin", test::random_bytes(4096, 1));
  b.source = test::write_file(dir / "b.bin", test::random_bytes(4097, 1));
  a.replicas = b.replicas = {test::profile(1)};
  auto ta = testbed::Testbed::start(a);
  auto tb = testbed::Testbed::start(b);
  auto r = run("download --discard " + ta->endpoints()[0].url() + " " + tb->endpoints()[0].url());
  EXPECT_EQ(r.status, 4) << r.output;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("download http://127.0.0.1:1/x").status, 1);
  EXPECT_EQ(run("download --policy fastest --discard http://127.0.0.1:1/x").status, 1);
  EXPECT_EQ(run("").status, 1);
}

TEST(Cli, QueueModel) {
  auto r = run("queue-model --lambda 1 --rates 2,2 --single 2");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("rho_A 0.25"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("rho_B 0.5"), std::string::npos);
  EXPECT_NE(r.output.find("W_A   0.333333"), std::string::npos);
  EXPECT_NE(r.output.find("W_B   1"), std::string::npos);
  auto unstable = run("queue-model --lambda 5 --rates 2,2");
  EXPECT_NE(unstable.output.find("W_A   unstable"), std::string::npos);
}

TEST(Cli, BenchWritesReports) {
  test::TempDir dir;
  {
    std::ofstream spec(dir / "exp.json");
    spec << R"({"sizes": ["4MiB"], "policies": ["mdtp", "static"], "repeats": 2,
                "initial_chunk": "256KiB", "large_chunk": "1MiB",
                "conditions": ["baseline", {"add_latency_ms": 100}],
                "replicas": [{"id": 1, "rate_bytes_per_sec": 8388608},
                             {"id": 2, "rate_bytes_per_sec": 4194304}],
                "work_dir": ")" << dir.path().string() << R"("})";
  }
  auto report = dir / "bench.json";
  auto csv = dir / "bench.csv";
  auto r = run("bench -q --spec " + (dir / "exp.json").string() + " --report " + report.string() + " --csv " +
               csv.string());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("latency+100ms"), std::string::npos) << r.output;
  auto doc = nlohmann::json::parse(std::ifstream(report));
  EXPECT_EQ(doc["cells"].size(), 4u);
  for (const auto& cell : doc["cells"]) {
    EXPECT_FALSE(cell["incomplete"].get<bool>());
    for (const auto& run : cell["runs"]) EXPECT_TRUE(run["digest_ok"].get<bool>());
  }
  EXPECT_TRUE(std::filesystem::exists(csv));
}
