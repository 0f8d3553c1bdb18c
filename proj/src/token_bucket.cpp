#include "mdtp/token_bucket.hpp"

#include <algorithm>
#include <thread>

#include "mdtp/error.hpp"

namespace mdtp {

TokenBucket::TokenBucket(Rate rate, ByteCount burst)
    : rate_(rate), burst_(burst), tokens_(static_cast<double>(burst)), last_(Clock::now()) {
  if (!(rate > 0)) throw Error(ErrorCode::kInvalidInput, "token bucket rate must be positive");
  if (burst == 0) throw Error(ErrorCode::kInvalidInput, "token bucket burst must be positive");
}

TokenBucket::Clock::duration TokenBucket::reserve(ByteCount bytes, Clock::time_point now) {
  std::lock_guard lock(mutex_);
  if (now > last_) {
    double refill = std::chrono::duration<double>(now - last_).count() * rate_;
    tokens_ = std::min(static_cast<double>(burst_), tokens_ + refill);
    last_ = now;
  }
  tokens_ -= static_cast<double>(bytes);
  if (tokens_ >= 0) return Clock::duration::zero();
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(-tokens_ / rate_));
}

void TokenBucket::acquire(ByteCount bytes) {
  auto wait = reserve(bytes, Clock::now());
  if (wait > Clock::duration::zero()) std::this_thread::sleep_for(wait);
}

}  // namespace mdtp
