#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdtp/bench.hpp"
#include "mdtp/error.hpp"
#include "mdtp/queueing.hpp"
#include "mdtp/testbed.hpp"
#include "mdtp/transfer.hpp"

namespace {

// Process exit status per failure class.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kAbort = 2,
  kIncomplete = 3,
  kInconsistent = 4,
  kUnsupported = 5,
  kFailure = 6,
};

int exit_code(mdtp::ErrorCode code) {
  switch (code) {
    case mdtp::ErrorCode::kInvalidInput: return kUsage;
    case mdtp::ErrorCode::kTransferAbort: return kAbort;
    case mdtp::ErrorCode::kIncompleteTransfer: return kIncomplete;
    case mdtp::ErrorCode::kInconsistentReplica: return kInconsistent;
    case mdtp::ErrorCode::kUnsupportedServer: return kUnsupported;
    default: return kFailure;
  }
}

void write_json(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw mdtp::Error(mdtp::ErrorCode::kInvalidInput, "cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::optional<mdtp::ByteCount> size_flag(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return mdtp::parse_byte_size(text);
}

struct DownloadArgs {
  std::string policy = "mdtp";
  std::string initial_chunk, large_chunk, chunk_size, min_chunk;
  bool discard = false;
  std::string out, report;
  bool events = false;
  std::vector<std::string> urls;
};

int run_download(const DownloadArgs& args) {
  std::vector<mdtp::ReplicaEndpoint> endpoints;
  for (std::size_t i = 0; i < args.urls.size(); ++i) {
    endpoints.push_back(mdtp::parse_endpoint(static_cast<mdtp::ReplicaId>(i + 1), args.urls[i]));
  }

  mdtp::TransferOptions options;
  if (args.policy == "static") {
    options.policy = mdtp::StaticPolicy{size_flag(args.chunk_size).value_or(0)};
  } else if (!args.chunk_size.empty()) {
    throw mdtp::Error(mdtp::ErrorCode::kInvalidInput, "--chunk-size applies to --policy static");
  }
  auto initial = size_flag(args.initial_chunk);
  auto large = size_flag(args.large_chunk);
  auto min = size_flag(args.min_chunk);
  if (initial || large || min) {
    if (!initial || !large) {
      throw mdtp::Error(mdtp::ErrorCode::kInvalidInput, "--initial-chunk and --large-chunk go together");
    }
    options.chunk_params = mdtp::ChunkParams{*initial, *large, min, std::nullopt};
  }

  mdtp::OutputSink sink(args.discard ? mdtp::OutputTarget{mdtp::DiscardOutput{}}
                                     : mdtp::OutputTarget{mdtp::FileOutput{args.out}});
  mdtp::TransferReport report = mdtp::download(endpoints, options, sink);

  std::cout << fmt::format("{} bytes in {:.3f} s ({:.2f} MiB/s), policy {}\n", report.file_size,
                           report.total_wall_time,
                           report.total_wall_time > 0
                               ? static_cast<double>(report.file_size) / report.total_wall_time / mdtp::kMiB
                               : 0.0,
                           report.policy);
  for (const auto& r : report.replicas) {
    std::cout << fmt::format("  replica {} {:<40} {:>5} requests {:>12} bytes{}\n", r.replica, r.url,
                             r.request_count, r.bytes, r.failed ? "  FAILED: " + r.error : "");
  }
  std::cout << fmt::format("replicas used: {:.0f}%\n", report.replicas_used_fraction * 100);
  std::cout << "sha256 " << report.digest << '\n';
  if (!args.report.empty()) write_json(args.report, mdtp::to_json(report, args.events));
  return kOk;
}

struct BenchArgs {
  std::string spec;
  std::optional<std::size_t> repeats;
  std::string report, csv;
  bool simulate = false;
  bool quiet = false;
};

int run_bench(const BenchArgs& args) {
  mdtp::bench::ExperimentSpec spec = mdtp::bench::load_experiment_spec(args.spec);
  if (args.repeats) spec.repeats = *args.repeats;
  if (args.simulate) spec.simulate = true;
  auto progress = [&](const std::string& line) {
    if (!args.quiet) std::cerr << line << '\n';
  };
  mdtp::bench::BenchReport report = mdtp::bench::run_experiment(spec, progress);
  std::cout << mdtp::bench::format_table(report);
  if (!args.report.empty()) write_json(args.report, mdtp::bench::to_json(report));
  if (!args.csv.empty()) {
    std::ofstream out(args.csv);
    out << mdtp::bench::format_csv(report);
  }
  for (const auto& cell : report.cells) {
    if (cell.incomplete) return kIncomplete;
  }
  return kOk;
}

struct QueueArgs {
  double lambda = 0;
  std::vector<double> rates;
  std::optional<double> single;
};

std::string wait_text(const std::optional<double>& w) { return w ? fmt::format("{:.6g}", *w) : "unstable"; }

int run_queue_model(const QueueArgs& args) {
  mdtp::queueing::QueueModelParams params{args.lambda, args.rates};
  params.validate();
  double mu = args.single.value_or(*std::max_element(args.rates.begin(), args.rates.end()));
  std::cout << fmt::format("rho_A {:.6g}\n", mdtp::queueing::utilization_multi(params));
  std::cout << fmt::format("rho_B {:.6g}\n", mdtp::queueing::utilization_single(args.lambda, mu));
  std::cout << "W_A   " << wait_text(mdtp::queueing::wait_multi(params)) << '\n';
  std::cout << "W_B   " << wait_text(mdtp::queueing::wait_single(args.lambda, mu)) << '\n';
  return kOk;
}

int run_testbed(const std::string& spec_path) {
  // Block the stop signals before any server thread exists so only sigwait
  // below sees them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);

  auto bed = mdtp::testbed::Testbed::start(mdtp::testbed::load_testbed_spec(spec_path));
  std::cout << fmt::format("serving {} bytes\n", bed->file_size());
  for (const auto& e : bed->endpoints()) std::cout << e.url() << '\n';
  std::cout << std::flush;

  int sig = 0;
  sigwait(&stop, &sig);
  nlohmann::json counters = nlohmann::json::array();
  for (const auto& c : bed->all_counters()) counters.push_back(mdtp::testbed::to_json(c));
  bed->stop();
  std::cerr << counters.dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source ranged HTTP downloader with adaptive chunk sizing"};
  app.require_subcommand(1);

  DownloadArgs dl;
  auto* download = app.add_subcommand("download", "Fetch one resource from several replicas");
  download->add_option("--policy", dl.policy)->check(CLI::IsMember({"mdtp", "static"}));
  download->add_option("--initial-chunk", dl.initial_chunk, "probe chunk size, e.g. 4MiB");
  download->add_option("--large-chunk", dl.large_chunk, "chunk size for the fastest replica");
  download->add_option("--chunk-size", dl.chunk_size, "static chunk size (default: large chunk)");
  download->add_option("--min-chunk", dl.min_chunk, "smallest adaptive chunk");
  auto* discard = download->add_flag("--discard", dl.discard, "hash the content but keep nothing");
  auto* out = download->add_option("--out", dl.out, "output file");
  discard->excludes(out);
  download->add_option("--report", dl.report, "write a JSON transfer report");
  download->add_flag("--events", dl.events, "include scheduler events in the report");
  download->add_option("urls", dl.urls, "replica URLs")->required();

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Run an experiment matrix against a local testbed");
  bench->add_option("--spec", bn.spec, "experiment JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--repeats", bn.repeats)->check(CLI::PositiveNumber);
  bench->add_option("--report", bn.report, "write the JSON report");
  bench->add_option("--csv", bn.csv, "write the summary table as CSV");
  bench->add_flag("--simulate", bn.simulate, "use the virtual-clock model");
  bench->add_flag("-q,--quiet", bn.quiet, "no per-run progress");

  QueueArgs qa;
  auto* queue = app.add_subcommand("queue-model", "Mean chunk wait time, pooled replicas vs one server");
  queue->add_option("--lambda", qa.lambda, "chunk request arrival rate")->required();
  queue->add_option("--rates", qa.rates, "service rate of each replica")->required()->delimiter(',');
  queue->add_option("--single", qa.single, "single-server rate (default: the largest of --rates)");

  std::string testbed_spec;
  auto* testbed = app.add_subcommand("testbed", "Serve a file from throttled local replicas until interrupted");
  testbed->add_option("--spec", testbed_spec, "testbed JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*download) {
      if (!dl.discard && dl.out.empty()) {
        std::cerr << "download: give --out <file> or --discard\n";
        return kUsage;
      }
      return run_download(dl);
    }
    if (*bench) return run_bench(bn);
    if (*queue) return run_queue_model(qa);
    if (*testbed) return run_testbed(testbed_spec);
  } catch (const mdtp::Error& e) {
    std::cerr << "error (" << mdtp::to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
