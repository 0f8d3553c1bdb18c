#pragma once

#include <string>

#include "mdtp/units.hpp"

namespace mdtp {

/// One replica of the resource: scheme://host:port plus the resource path.
struct ReplicaEndpoint {
  ReplicaId id = 0;
  std::string base_url;       // e.g. "http://127.0.0.1:8080"
  std::string resource_path;  // e.g. "/data.bin"

  std::string url() const { return base_url + resource_path; }
};

/// Splits "http://host:port/path" into an endpoint. Throws
/// Error(kInvalidInput) for anything that is not an http(s) URL with a path.
ReplicaEndpoint parse_endpoint(ReplicaId id, const std::string& url);

}  // namespace mdtp
