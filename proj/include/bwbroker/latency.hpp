#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace bwbroker {

// A (sigma, rho) arrival constraint against a reference capacity C:
// bytes arriving in any window (t1, t2] stay below sigma + rho*C*(t2-t1).
struct ArrivalEnvelope {
  double sigma_bits = 0;
  double rho = 0;          // in (0, 1)
  double capacity_bps = 0;  // C

  bool valid() const { return sigma_bits >= 0 && rho > 0 && rho < 1 && capacity_bps > 0; }
};

// Worst-case completion time of a flow of `flow_bits` through a
// work-conserving queue fed by envelope-constrained arrivals:
//   FCT <= (sigma + Z) / (C * (1 - rho)).
// Throws InvalidEnvelopeError.
double fct_bound_seconds(const ArrivalEnvelope& env, double flow_bits);

// An arrival event: (time in seconds, bits arriving at that instant).
using ArrivalTrace = std::vector<std::pair<double, double>>;

struct EnvelopeCheck {
  bool satisfied = true;
  double t1 = 0;  // witness window when violated
  double t2 = 0;
};

// Exact check of the envelope over every pair of event boundaries via a
// running minimum of (cumulative - rho*C*t); O(n). Throws UnsortedTraceError.
EnvelopeCheck check_envelope(const ArrivalTrace& trace, const ArrivalEnvelope& env);

// Minimal sigma such that the trace satisfies the envelope at (rho, C).
// Throws RhoTooSmallError when the long-run trace rate exceeds rho*C.
double fit_sigma(const ArrivalTrace& trace, double rho, double capacity_bps);

// Steady-state M/M/1 FIFO flow-completion-time model: service rate mu
// (flows per second) under load rho. The completion time density is
// mu*(1-rho)*exp(-mu*(1-rho)*t).
struct Mm1Model {
  double mu_per_sec = 0;
  double rho = 0;
};

// p-quantile of the completion time: -ln(1-p) / (mu*(1-rho)).
// Throws InvalidProbabilityError for p outside [0, 1).
double mm1_fct_quantile(const Mm1Model& model, double p);

// sigma = C * (convergence iterations x meter interval) + limiter burst;
// the convergence burst dominates in practice.
double sigma_from_convergence(double capacity_bps, int iterations,
                              double interval_seconds, double limiter_burst_bits = 0);

}  // namespace bwbroker
