#pragma once

#include <optional>
#include <span>
#include <vector>

namespace mdtp::queueing {

/// Arrival rate of chunk requests and the service rates of the serving
/// replicas. Model A pools every rate in `service_rates`; Model B uses a
/// single server.
struct QueueModelParams {
  double arrival_rate = 0;           // requests / second
  std::vector<double> service_rates;  // requests / second, per server

  /// Throws mdtp::Error(kInvalidInput) unless arrival_rate > 0 and every
  /// service rate is > 0 (and at least one is given).
  void validate() const;
};

/// Utilization of the pooled multi-source system, lambda / sum(mu_i).
double utilization_multi(const QueueModelParams& params);

/// Utilization of a single server, lambda / mu.
double utilization_single(double arrival_rate, double service_rate);

/// Mean per-chunk download time with pooled capacity, 1 / (sum(mu_i) - lambda).
/// This is the aggregated-server form, not the Erlang-C M/M/c delay.
/// Returns nullopt when the system is unstable (utilization >= 1).
std::optional<double> wait_multi(const QueueModelParams& params);

/// Mean per-chunk download time from one server, 1 / (mu - lambda); nullopt
/// when utilization >= 1.
std::optional<double> wait_single(double arrival_rate, double service_rate);

}  // namespace mdtp::queueing
