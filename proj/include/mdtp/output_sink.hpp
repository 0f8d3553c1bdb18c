#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "mdtp/chunk_scheduler.hpp"
#include "mdtp/digest.hpp"
#include "mdtp/units.hpp"

namespace mdtp {

using Payload = std::vector<char>;

struct DiscardOutput {};
struct FileOutput {
  std::filesystem::path path;
};
using OutputTarget = std::variant<DiscardOutput, FileOutput>;

/// Destination of a transfer. Chunks arrive out of order from several
/// threads; file mode writes each one at its offset into a preallocated file,
/// discard mode keeps nothing. Both modes hash the content in file order on a
/// background thread so the digest never sits on a fetch loop's path.
class OutputSink {
 public:
  explicit OutputSink(OutputTarget target);
  ~OutputSink();

  OutputSink(const OutputSink&) = delete;
  OutputSink& operator=(const OutputSink&) = delete;

  /// Binds the sink to a resource of `expected_size` bytes. File mode creates
  /// (or truncates) the output and sizes it up front.
  void open(ByteCount expected_size);

  /// Accepts the payload for `range`. Throws Error(kInvalidState) if the range
  /// leaves [0, expected_size), overlaps an earlier write, or the payload
  /// length differs from the range size.
  void write(ByteRange range, Payload payload);

  bool complete() const;
  ByteCount bytes_received() const;
  ByteCount expected_size() const { return expected_size_; }
  /// Received ranges, coalesced.
  std::vector<ByteRange> received() const;
  bool discards() const { return std::holds_alternative<DiscardOutput>(target_); }

  /// Waits for the digest thread and returns the SHA-256 of the content.
  /// Throws Error(kIncompleteTransfer) if any byte is missing.
  std::string finish();

 private:
  void digest_loop();
  void stop_digest();

  OutputTarget target_;
  ByteCount expected_size_ = 0;
  int fd_ = -1;
  bool opened_ = false;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<ByteOffset, ByteOffset> received_;  // start -> end, inclusive
  ByteCount bytes_received_ = 0;
  std::map<ByteOffset, Payload> pending_digest_;
  ByteOffset digest_cursor_ = 0;
  bool stopping_ = false;
  Sha256 hasher_;
  std::thread digest_thread_;
};

}  // namespace mdtp
