#include "mdtp/queueing.hpp"

#include <numeric>

#include "mdtp/error.hpp"

namespace mdtp::queueing {

namespace {

void check_rates(double arrival_rate, double service_rate) {
  if (!(arrival_rate > 0)) throw Error(ErrorCode::kInvalidInput, "arrival rate must be positive");
  if (!(service_rate > 0)) throw Error(ErrorCode::kInvalidInput, "service rate must be positive");
}

double total_capacity(const QueueModelParams& params) {
  return std::accumulate(params.service_rates.begin(), params.service_rates.end(), 0.0);
}

}  // namespace

void QueueModelParams::validate() const {
  if (service_rates.empty()) throw Error(ErrorCode::kInvalidInput, "at least one service rate is required");
  for (double mu : service_rates) check_rates(arrival_rate, mu);
}

double utilization_multi(const QueueModelParams& params) {
  params.validate();
  return params.arrival_rate / total_capacity(params);
}

double utilization_single(double arrival_rate, double service_rate) {
  check_rates(arrival_rate, service_rate);
  return arrival_rate / service_rate;
}

std::optional<double> wait_multi(const QueueModelParams& params) {
  if (utilization_multi(params) >= 1.0) return std::nullopt;
  return 1.0 / (total_capacity(params) - params.arrival_rate);
}

std::optional<double> wait_single(double arrival_rate, double service_rate) {
  if (utilization_single(arrival_rate, service_rate) >= 1.0) return std::nullopt;
  return 1.0 / (service_rate - arrival_rate);
}

}  // namespace mdtp::queueing
