#include "mdtp/output_sink.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mdtp/error.hpp"

namespace mdtp {

OutputSink::OutputSink(OutputTarget target) : target_(std::move(target)) {}

OutputSink::~OutputSink() {
  stop_digest();
  if (fd_ >= 0) ::close(fd_);
}

void OutputSink::open(ByteCount expected_size) {
  if (opened_) throw Error(ErrorCode::kInvalidState, "output sink already opened");
  expected_size_ = expected_size;
  if (const auto* file = std::get_if<FileOutput>(&target_)) {
    fd_ = ::open(file->path.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw Error(ErrorCode::kInvalidInput,
                  "cannot open output " + file->path.string() + ": " + std::strerror(errno));
    }
    if (::ftruncate(fd_, static_cast<off_t>(expected_size)) != 0) {
      throw Error(ErrorCode::kInvalidInput,
                  "cannot size output " + file->path.string() + ": " + std::strerror(errno));
    }
  }
  opened_ = true;
  digest_thread_ = std::thread([this] { digest_loop(); });
}

void OutputSink::write(ByteRange range, Payload payload) {
  if (!opened_) throw Error(ErrorCode::kInvalidState, "output sink not opened");
  if (range.start > range.end || range.end >= expected_size_) {
    throw Error(ErrorCode::kInvalidState, "write outside the expected size");
  }
  if (payload.size() != range.size()) {
    throw Error(ErrorCode::kInvalidState, "payload length does not match its range");
  }
  {
    std::lock_guard lock(mutex_);
    auto next = received_.lower_bound(range.start);
    bool overlaps_next = next != received_.end() && next->first <= range.end;
    bool overlaps_prev = next != received_.begin() && std::prev(next)->second >= range.start;
    if (overlaps_next || overlaps_prev) {
      throw Error(ErrorCode::kInvalidState, "write overlaps an already received range");
    }
    received_.emplace(range.start, range.end);
  }

  // Ranges are disjoint, so positional writes need no lock.
  if (fd_ >= 0) {
    std::size_t done = 0;
    while (done < payload.size()) {
      ssize_t n = ::pwrite(fd_, payload.data() + done, payload.size() - done,
                           static_cast<off_t>(range.start + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kInvalidState, std::string("pwrite failed: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  {
    std::lock_guard lock(mutex_);
    bytes_received_ += range.size();
    pending_digest_.emplace(range.start, std::move(payload));
  }
  cv_.notify_one();
}

void OutputSink::digest_loop() {
  std::unique_lock lock(mutex_);
  while (true) {
    cv_.wait(lock, [&] {
      return stopping_ || digest_cursor_ == expected_size_ ||
             (!pending_digest_.empty() && pending_digest_.begin()->first == digest_cursor_);
    });
    if (digest_cursor_ == expected_size_ || stopping_) return;
    Payload chunk = std::move(pending_digest_.begin()->second);
    pending_digest_.erase(pending_digest_.begin());
    lock.unlock();
    hasher_.update(chunk);
    lock.lock();
    digest_cursor_ += chunk.size();
  }
}

void OutputSink::stop_digest() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (digest_thread_.joinable()) digest_thread_.join();
}

bool OutputSink::complete() const {
  std::lock_guard lock(mutex_);
  return opened_ && bytes_received_ == expected_size_;
}

ByteCount OutputSink::bytes_received() const {
  std::lock_guard lock(mutex_);
  return bytes_received_;
}

std::vector<ByteRange> OutputSink::received() const {
  std::lock_guard lock(mutex_);
  std::vector<ByteRange> out;
  for (const auto& [start, end] : received_) {
    if (!out.empty() && out.back().end + 1 == start) {
      out.back().end = end;
    } else {
      out.push_back({start, end});
    }
  }
  return out;
}

std::string OutputSink::finish() {
  if (!complete()) {
    throw Error(ErrorCode::kIncompleteTransfer,
                "output incomplete: " + std::to_string(bytes_received()) + " of " +
                    std::to_string(expected_size_) + " bytes");
  }
  if (digest_thread_.joinable()) digest_thread_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  return hasher_.finish();
}

}  // namespace mdtp
