#include "bwbroker/latency.hpp"

#include <cmath>
#include <limits>

#include "bwbroker/errors.hpp"

namespace bwbroker {

double fct_bound_seconds(const ArrivalEnvelope& env, double flow_bits) {
  if (!env.valid() || flow_bits < 0) {
    throw InvalidEnvelopeError("fct_bound needs sigma>=0, 0<rho<1, C>0, Z>=0");
  }
  return (env.sigma_bits + flow_bits) / (env.capacity_bps * (1.0 - env.rho));
}

EnvelopeCheck check_envelope(const ArrivalTrace& trace, const ArrivalEnvelope& env) {
  if (!env.valid()) throw InvalidEnvelopeError("invalid envelope");
  const double slope = env.rho * env.capacity_bps;
  double cumulative = 0;
  // Running minimum of (cumulative_before - slope*t) over all earlier window
  // starts, including the instant just before each batch.
  double min_start = std::numeric_limits<double>::infinity();
  double min_start_t = trace.empty() ? 0 : trace.front().first;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& [t, bits] : trace) {
    if (t < last_t) throw UnsortedTraceError("arrival trace must be time-sorted");
    last_t = t;
    const double start_value = cumulative - slope * t;
    if (start_value <= min_start) {
      min_start = start_value;
      min_start_t = t;
    }
    cumulative += bits;
    const double backlog = cumulative - slope * t - min_start;
    // Slack absorbs floating-point drift of the running sums; it stays many
    // orders of magnitude below one packet.
    if (backlog > env.sigma_bits + 1e-6 + 1e-9 * cumulative) {
      return {false, min_start_t, t};
    }
  }
  return {true, 0, 0};
}

double fit_sigma(const ArrivalTrace& trace, double rho, double capacity_bps) {
  if (!(rho > 0) || !(capacity_bps > 0)) {
    throw InvalidEnvelopeError("fit_sigma needs rho>0 and C>0");
  }
  if (trace.empty()) return 0;
  // Long-run rate over (t_first, t_last]: the opening batch belongs to no
  // window that starts inside the trace, so it does not count toward the
  // sustained rate.
  double total = 0;
  double first_batch = 0;
  for (const auto& [t, bits] : trace) {
    total += bits;
    if (t == trace.front().first) first_batch += bits;
  }
  const double duration = trace.back().first - trace.front().first;
  if (duration > 0 &&
      (total - first_batch) / duration > rho * capacity_bps * (1 + 1e-9)) {
    throw RhoTooSmallError("long-run trace rate exceeds rho*C");
  }

  const double slope = rho * capacity_bps;
  double cumulative = 0;
  double min_start = std::numeric_limits<double>::infinity();
  double sigma = 0;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& [t, bits] : trace) {
    if (t < last_t) throw UnsortedTraceError("arrival trace must be time-sorted");
    last_t = t;
    min_start = std::min(min_start, cumulative - slope * t);
    cumulative += bits;
    sigma = std::max(sigma, cumulative - slope * t - min_start);
  }
  return sigma;
}

double mm1_fct_quantile(const Mm1Model& model, double p) {
  if (!(p >= 0) || !(p < 1)) {
    throw InvalidProbabilityError("quantile probability must lie in [0, 1)");
  }
  if (!(model.mu_per_sec > 0) || !(model.rho >= 0) || !(model.rho < 1)) {
    throw InvalidEnvelopeError("M/M/1 model needs mu>0 and rho in [0,1)");
  }
  return -std::log1p(-p) / (model.mu_per_sec * (1.0 - model.rho));
}

double sigma_from_convergence(double capacity_bps, int iterations,
                              double interval_seconds, double limiter_burst_bits) {
  return capacity_bps * iterations * interval_seconds + limiter_burst_bits;
}

}  // namespace bwbroker
