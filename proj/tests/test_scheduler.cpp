#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "mdtp/chunk_scheduler.hpp"
#include "mdtp/error.hpp"

using namespace mdtp;

namespace {

SchedulerConfig config(ByteCount file, ByteCount c, ByteCount l, ByteCount min = 1) {
  SchedulerConfig cfg;
  cfg.file_size = file;
  cfg.initial_chunk = c;
  cfg.large_chunk = l;
  cfg.min_chunk = min;
  return cfg;
}

// Chunk size computed independently in extended precision.
ByteCount oracle_chunk(long double rate, long double fastest, const SchedulerConfig& cfg) {
  long double ideal = static_cast<long double>(cfg.large_chunk) * rate / fastest;
  auto rounded = static_cast<ByteCount>(std::floor(ideal + 0.5L));
  return std::clamp(rounded, cfg.min_chunk, cfg.large_chunk);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no mdtp::Error thrown";
  return ErrorCode::kStartup;
}

}  // namespace

TEST(GeometricMean, Examples) {
  std::vector<Rate> same{8, 8, 8};
  std::vector<Rate> pair{2, 8};
  std::vector<Rate> three{1, 10, 100};
  EXPECT_DOUBLE_EQ(geometric_mean(same), 8.0);
  EXPECT_NEAR(geometric_mean(pair), 4.0, 1e-12);
  EXPECT_NEAR(geometric_mean(three), 10.0, 1e-12);
}

TEST(GeometricMean, RejectsBadInput) {
  std::vector<Rate> empty;
  std::vector<Rate> zero{1, 0};
  std::vector<Rate> negative{-1};
  EXPECT_EQ(code_of([&] { geometric_mean(empty); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(code_of([&] { geometric_mean(zero); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(code_of([&] { geometric_mean(negative); }), ErrorCode::kInvalidInput);
}

TEST(GeometricMean, StaysWithinMinAndMax) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> exponent(-3, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Rate> rates(1 + rng() % 64);
    for (auto& r : rates) r = std::pow(10.0, exponent(rng));
    Rate gm = geometric_mean(rates);
    auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
    EXPECT_GE(gm, *lo);
    EXPECT_LE(gm, *hi);
    EXPECT_TRUE(classify_fast(*hi, gm));
  }
}

TEST(ClassifyFast, Examples) {
  EXPECT_TRUE(classify_fast(10, 10));
  EXPECT_FALSE(classify_fast(9.99, 10));
  std::vector<Rate> pair{2, 8};
  EXPECT_TRUE(classify_fast(8, geometric_mean(pair)));
}

TEST(FastestThroughput, Examples) {
  EXPECT_EQ(fastest_throughput({{1, 100}, {2, 50}, {3, 25}}), (ReplicaRate{1, 100}));
  EXPECT_EQ(fastest_throughput({{1, 7}, {2, 7}}), (ReplicaRate{1, 7}));
  EXPECT_EQ(fastest_throughput({{1, 1}, {2, 10}, {3, 100}}), (ReplicaRate{3, 100}));
  EXPECT_EQ(code_of([] { fastest_throughput({}); }), ErrorCode::kInvalidState);
}

TEST(ComputeChunkSize, FastestGetsLargeChunk) {
  auto cfg = config(1'000'000'000, 4'000'000, 40'000'000);
  ThroughputSnapshot snap{{1, 123.0}, {2, 456.7}, {3, 1.5}};
  EXPECT_EQ(compute_chunk_size(2, snap, cfg), cfg.large_chunk);
}

TEST(ComputeChunkSize, ProportionalExample) {
  auto cfg = config(1'000'000'000, 4'000'000, 40'000'000);
  ThroughputSnapshot snap{{1, 100e6}, {2, 50e6}, {3, 25e6}};
  for (ReplicaId id : {1u, 2u, 3u}) {
    EXPECT_EQ(compute_chunk_size(id, snap, cfg), oracle_chunk(*snap.get(id), 100e6, cfg));
  }
  EXPECT_EQ(compute_chunk_size(1, snap, cfg), 40'000'000u);
  EXPECT_EQ(compute_chunk_size(2, snap, cfg), 20'000'000u);
  EXPECT_EQ(compute_chunk_size(3, snap, cfg), 10'000'000u);
}

TEST(ComputeChunkSize, SlowReplicaClampsToFloor) {
  auto cfg = config(1'000'000'000, 4 * kMiB, 40 * kMiB, 64 * kKiB);
  ThroughputSnapshot snap{{1, 1e9}, {2, 10}};
  EXPECT_EQ(compute_chunk_size(2, snap, cfg), 64 * kKiB);
}

TEST(ComputeChunkSize, RequiresSample) {
  auto cfg = config(100, 10, 20);
  ThroughputSnapshot snap{{1, 5}};
  EXPECT_EQ(code_of([&] { compute_chunk_size(2, snap, cfg); }), ErrorCode::kInvalidState);
}

TEST(ComputeChunkSize, ProportionalityAndEqualFinish) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> exponent(4, 10);
  for (int trial = 0; trial < 2000; ++trial) {
    auto cfg = config(1ull << 40, 4 * kMiB, 40 * kMiB, 64 * kKiB);
    ThroughputSnapshot snap;
    std::size_t n = 1 + rng() % 8;
    for (ReplicaId id = 1; id <= n; ++id) snap.set(id, std::pow(10.0, exponent(rng)));
    auto rates = snap.rates();
    long double fastest = *std::max_element(rates.begin(), rates.end());
    double round = static_cast<double>(cfg.large_chunk) / static_cast<double>(fastest);
    for (const auto& [id, rate] : snap.entries()) {
      ByteCount got = compute_chunk_size(id, snap, cfg);
      EXPECT_EQ(got, oracle_chunk(rate, fastest, cfg));
      if (got > cfg.min_chunk && got < cfg.large_chunk) {
        // Within a byte of proportional, so the predicted finish times agree.
        EXPECT_LE(std::abs(static_cast<long double>(got) - cfg.large_chunk * rate / fastest), 0.5L + 1e-6L);
        EXPECT_NEAR(static_cast<double>(got) / rate, round, 1.0 / rate);
      }
    }
  }
}

TEST(RangeLedger, Examples) {
  RangeLedger ledger(100);
  EXPECT_EQ(ledger.allocate(4), (ByteRange{0, 3}));
  EXPECT_EQ(ledger.next_byte(), 4u);
  EXPECT_EQ(ledger.allocate(6), (ByteRange{4, 9}));
  while (ledger.next_byte() < 97) ledger.allocate(1);
  EXPECT_EQ(ledger.allocate(10), (ByteRange{97, 99}));
  EXPECT_TRUE(ledger.exhausted());
  EXPECT_FALSE(ledger.allocate(1).has_value());
  EXPECT_EQ(code_of([&] { ledger.allocate(0); }), ErrorCode::kInvalidInput);
}

TEST(RangeLedger, MonotoneAndCovering) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ByteCount size = 1 + rng() % 100000;
    RangeLedger ledger(size);
    ByteOffset before = 0;
    while (auto r = ledger.allocate(1 + rng() % 5000)) {
      EXPECT_EQ(r->start, before);
      EXPECT_EQ(ledger.next_byte(), before + r->size());
      before = ledger.next_byte();
    }
    ASSERT_EQ(before, size);
    ByteOffset cursor = 0;
    for (const auto& r : ledger.assigned()) {
      EXPECT_EQ(r.start, cursor);
      cursor = r.end + 1;
    }
    EXPECT_EQ(cursor, size);
  }
}

TEST(NextAssignment, ProbeThenAdaptive) {
  auto cfg = config(1000 * kMiB, 4 * kMiB, 40 * kMiB);
  RangeLedger ledger(cfg.file_size);
  ThroughputSnapshot snap;
  auto probe = next_assignment(1, snap, ledger, cfg, MdtpPolicy{});
  ASSERT_TRUE(probe);
  EXPECT_EQ(probe->kind, ChunkKind::kProbe);
  EXPECT_EQ(probe->size(), 4 * kMiB);

  snap.set(1, 100);
  snap.set(2, 50);
  auto big = next_assignment(1, snap, ledger, cfg, MdtpPolicy{}, 1);
  ASSERT_TRUE(big);
  EXPECT_EQ(big->kind, ChunkKind::kAdaptive);
  EXPECT_EQ(big->size(), 40 * kMiB);
  EXPECT_EQ(big->range.start, 4 * kMiB);
}

TEST(NextAssignment, StaticIgnoresThroughput) {
  auto cfg = config(100 * kMiB, 4 * kMiB, 40 * kMiB);
  RangeLedger ledger(cfg.file_size);
  ledger.allocate(10 * kMiB);
  ThroughputSnapshot snap{{1, 1}, {2, 1e9}};
  auto a = next_assignment(1, snap, ledger, cfg, StaticPolicy{8 * kMiB});
  ASSERT_TRUE(a);
  EXPECT_EQ(a->kind, ChunkKind::kStatic);
  EXPECT_EQ(a->size(), 8 * kMiB);
}

TEST(NextAssignment, StaticSizesConstantExceptLast) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ByteCount file = 1 + rng() % 1000000;
    ByteCount chunk = 1 + rng() % 50000;
    auto cfg = config(file, 1, 1);
    RangeLedger ledger(file);
    std::vector<ByteCount> sizes;
    while (auto a = next_assignment(1, {}, ledger, cfg, StaticPolicy{chunk})) sizes.push_back(a->size());
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) EXPECT_EQ(sizes[i], chunk);
    EXPECT_LE(sizes.back(), chunk);
  }
}

TEST(RecordCompletion, Examples) {
  ThroughputSnapshot snap;
  ChunkAssignment a{1, {0, 4'000'000 - 1}, ChunkKind::kProbe, 0};
  record_completion(snap, a, 0.5);
  EXPECT_DOUBLE_EQ(*snap.get(1), 8e6);

  ChunkAssignment b{2, {0, 40'000'000 - 1}, ChunkKind::kAdaptive, 1};
  record_completion(snap, b, 2.0);
  EXPECT_DOUBLE_EQ(*snap.get(2), 20e6);

  // The latest observation replaces the estimate.
  ChunkAssignment c{1, {0, 1'000'000 - 1}, ChunkKind::kAdaptive, 1};
  record_completion(snap, c, 0.5);
  EXPECT_DOUBLE_EQ(*snap.get(1), 2e6);

  EXPECT_EQ(code_of([&] { record_completion(snap, a, 0); }), ErrorCode::kInvalidInput);
}

TEST(RecordCompletion, OptionalSmoothing) {
  ThroughputSnapshot snap;
  ChunkAssignment a{1, {0, 999}, ChunkKind::kProbe, 0};
  record_completion(snap, a, 1.0, 0.25);
  EXPECT_DOUBLE_EQ(*snap.get(1), 1000);
  record_completion(snap, a, 0.5, 0.25);
  EXPECT_DOUBLE_EQ(*snap.get(1), 0.25 * 2000 + 0.75 * 1000);
}

TEST(SchedulerConfig, Validation) {
  EXPECT_EQ(code_of([] { config(0, 1, 1).validate(); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(code_of([] { config(10, 4, 2).validate(); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(code_of([] { config(10, 4, 8, 5).validate(); }), ErrorCode::kInvalidInput);
  EXPECT_NO_THROW(config(10, 4, 8, 4).validate());
}

TEST(ChunkScheduler, OneInFlightPerReplica) {
  ChunkScheduler s(config(100, 10, 20), MdtpPolicy{});
  auto d = s.next_assignment(1);
  ASSERT_EQ(d.status, ChunkScheduler::Status::kAssigned);
  EXPECT_EQ(code_of([&] { s.next_assignment(1); }), ErrorCode::kInvalidState);
}

TEST(ChunkScheduler, WaitWhileOthersInFlightThenExhausted) {
  ChunkScheduler s(config(10, 10, 10), MdtpPolicy{});
  auto a = s.next_assignment(1);
  ASSERT_EQ(a.status, ChunkScheduler::Status::kAssigned);
  EXPECT_EQ(s.next_assignment(2).status, ChunkScheduler::Status::kWait);
  s.record_completion(*a.assignment, 1.0);
  EXPECT_EQ(s.next_assignment(2).status, ChunkScheduler::Status::kExhausted);
  EXPECT_TRUE(s.finished());
}

TEST(ChunkScheduler, FailedRangeIsReassignedFirst) {
  ChunkScheduler s(config(1000, 100, 300), MdtpPolicy{});
  auto a1 = *s.next_assignment(1).assignment;
  auto a2 = *s.next_assignment(2).assignment;
  s.record_completion(a1, 1.0);
  s.record_failure(a2);
  EXPECT_EQ(code_of([&] { s.next_assignment(2); }), ErrorCode::kInvalidState);

  // Replica 1 is the only sample, so it asks for L = 300 and receives the
  // failed 100-byte range before any fresh bytes.
  auto again = *s.next_assignment(1).assignment;
  EXPECT_EQ(again.range, a2.range);
  s.record_completion(again, 1.0);
  auto fresh = *s.next_assignment(1).assignment;
  EXPECT_EQ(fresh.range.start, 200u);
}

TEST(ChunkScheduler, ReclaimedRangeSplitsToRequestedSize) {
  ChunkScheduler s(config(1000, 100, 100), StaticPolicy{30});
  auto a1 = *s.next_assignment(1).assignment;
  auto a2 = *s.next_assignment(2).assignment;
  s.record_failure(a2);
  s.record_completion(a1, 1.0);
  auto part = *s.next_assignment(1).assignment;
  EXPECT_EQ(part.range, (ByteRange{a2.range.start, a2.range.start + 29}));
}

TEST(ChunkScheduler, ConcurrentLoopsCoverFileExactlyOnce) {
  std::mt19937_64 seed_rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    ByteCount file = 1 + seed_rng() % 5'000'000;
    ChunkScheduler s(config(file, 4096, 65536, 512), MdtpPolicy{});
    std::vector<std::jthread> loops;
    for (ReplicaId id = 1; id <= 6; ++id) {
      loops.emplace_back([&s, id, seed = seed_rng()] {
        std::mt19937_64 rng(seed);
        for (;;) {
          auto d = s.next_assignment(id);
          if (d.status == ChunkScheduler::Status::kExhausted) return;
          if (d.status == ChunkScheduler::Status::kWait) {
            std::this_thread::yield();
            continue;
          }
          s.record_completion(*d.assignment, 1e-3 * (1 + rng() % 100));
        }
      });
    }
    loops.clear();
    std::vector<ByteRange> ranges;
    for (const auto& e : s.events()) {
      if (e.type == SchedulerEvent::Type::kCompleted) ranges.push_back(e.assignment.range);
    }
    std::sort(ranges.begin(), ranges.end());
    ByteOffset cursor = 0;
    for (const auto& r : ranges) {
      ASSERT_EQ(r.start, cursor);
      cursor = r.end + 1;
    }
    EXPECT_EQ(cursor, file);
    EXPECT_TRUE(s.finished());
  }
}

TEST(ChunkScheduler, TinyFileLeavesSomeReplicasWithoutProbe) {
  ChunkScheduler s(config(5, 4, 8), MdtpPolicy{});
  auto a = *s.next_assignment(1).assignment;
  auto b = *s.next_assignment(2).assignment;
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(b.size(), 1u);
  EXPECT_EQ(s.next_assignment(3).status, ChunkScheduler::Status::kWait);
  s.record_completion(a, 1);
  s.record_completion(b, 1);
  EXPECT_EQ(s.next_assignment(3).status, ChunkScheduler::Status::kExhausted);
}
