#include "mdtp/error.hpp"

namespace mdtp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kInvalidState: return "invalid-state";
    case ErrorCode::kTransferAbort: return "transfer-abort";
    case ErrorCode::kInconsistentReplica: return "inconsistent-replica";
    case ErrorCode::kUnsupportedServer: return "unsupported-server";
    case ErrorCode::kPayloadMismatch: return "payload-mismatch";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kReplicaFailure: return "replica-failure";
    case ErrorCode::kIncompleteTransfer: return "incomplete-transfer";
    case ErrorCode::kStartup: return "startup";
  }
  return "unknown";
}

}  // namespace mdtp
