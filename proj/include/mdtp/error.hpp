#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdtp {

enum class ErrorCode {
  kInvalidInput,
  kInvalidState,
  kTransferAbort,
  kInconsistentReplica,
  kUnsupportedServer,
  kPayloadMismatch,
  kProtocol,
  kReplicaFailure,
  kIncompleteTransfer,
  kStartup,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mdtp
