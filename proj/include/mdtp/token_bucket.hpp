#pragma once

#include <chrono>
#include <mutex>

#include "mdtp/units.hpp"

namespace mdtp {

/// Byte-rate limiter. Sends are reserved against the bucket immediately and
/// the caller sleeps off any debt, so sleep overshoot does not accumulate:
/// over any window of t seconds at most burst + rate * t bytes pass.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(Rate rate, ByteCount burst);

  /// Reserves `bytes` at time `now` and returns how long the caller must
  /// wait before sending them.
  Clock::duration reserve(ByteCount bytes, Clock::time_point now);

  /// Blocking form of reserve().
  void acquire(ByteCount bytes);

  Rate rate() const { return rate_; }
  ByteCount burst() const { return burst_; }

 private:
  const Rate rate_;
  const ByteCount burst_;
  std::mutex mutex_;
  double tokens_;
  Clock::time_point last_;
};

}  // namespace mdtp
