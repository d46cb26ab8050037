#include "bwbroker/latency.hpp"

#include <cmath>

#include "bwbroker/errors.hpp"
#include "bwbroker/sim/rng.hpp"
#include "gtest/gtest.h"
#include "oracles.hpp"

namespace bwbroker {
namespace {

constexpr double kPacketBits = 1500 * 8;

TEST(FctBound, ReproducesTheBoundTable) {
  // sigma = C * (15 iterations x 500us), C = 10Gb/s.
  const double sigma = sigma_from_convergence(10e9, 15, 500e-6);
  EXPECT_DOUBLE_EQ(sigma, 7.5e7);

  const double z_small = 200e3 * 8;  // 200kB RPCs
  const double expect_small[4][2] = {
      {0.15, 9.01}, {0.5, 15.32}, {0.7, 25.53}, {0.8, 38.30}};
  for (const auto& [rho, ms] : expect_small) {
    ArrivalEnvelope env{sigma, rho, 10e9};
    EXPECT_NEAR(fct_bound_seconds(env, z_small) * 1e3, ms, 0.01) << "rho=" << rho;
  }

  const double z_big = 1e6 * 8;  // 1MB RPCs
  const double expect_big[3][2] = {{0.15, 9.77}, {0.5, 16.60}, {0.7, 27.67}};
  for (const auto& [rho, ms] : expect_big) {
    ArrivalEnvelope env{sigma, rho, 10e9};
    EXPECT_NEAR(fct_bound_seconds(env, z_big) * 1e3, ms, 0.01) << "rho=" << rho;
  }
}

TEST(FctBound, ZeroBurstZeroFlowIsZero) {
  ArrivalEnvelope env{0, 0.5, 10e9};
  EXPECT_DOUBLE_EQ(fct_bound_seconds(env, 0), 0);
  EXPECT_THROW(fct_bound_seconds(ArrivalEnvelope{-1, 0.5, 1e9}, 0), InvalidEnvelopeError);
  EXPECT_THROW(fct_bound_seconds(ArrivalEnvelope{0, 1.0, 1e9}, 0), InvalidEnvelopeError);
}

TEST(FctBound, Monotonicity) {
  sim::Rng rng(3, 1);
  for (int i = 0; i < 100; ++i) {
    ArrivalEnvelope env{rng.uniform(0, 1e8), rng.uniform(0.05, 0.9), rng.uniform(1e8, 1e10)};
    const double z = rng.uniform(0, 1e7);
    const double base = fct_bound_seconds(env, z);
    ArrivalEnvelope more_burst = env;
    more_burst.sigma_bits += 1e6;
    EXPECT_GT(fct_bound_seconds(more_burst, z), base);
    ArrivalEnvelope more_load = env;
    more_load.rho = env.rho + (1 - env.rho) / 2;
    EXPECT_GT(fct_bound_seconds(more_load, z), base);
    ArrivalEnvelope more_capacity = env;
    more_capacity.capacity_bps *= 2;
    EXPECT_LT(fct_bound_seconds(more_capacity, z), base);
    EXPECT_GT(fct_bound_seconds(env, z + 1e5), base);
  }
}

ArrivalTrace constant_rate_trace(double rho, double c, int packets) {
  ArrivalTrace trace;
  const double gap = kPacketBits / (rho * c);
  for (int i = 0; i < packets; ++i) {
    trace.emplace_back(i * gap, kPacketBits);
  }
  return trace;
}

TEST(CheckEnvelope, ConstantRateNeedsOnePacketOfBurst) {
  const double rho = 0.5, c = 1e9;
  ArrivalTrace trace = constant_rate_trace(rho, c, 1000);
  EXPECT_TRUE(check_envelope(trace, {kPacketBits, rho, c}).satisfied);
  EXPECT_FALSE(check_envelope(trace, {kPacketBits - 1, rho, c}).satisfied);
}

TEST(CheckEnvelope, InstantBurstBeyondSigmaViolatesAtTimeZero) {
  ArrivalTrace trace{{0.0, 5 * kPacketBits}};
  EnvelopeCheck check = check_envelope(trace, {4 * kPacketBits, 0.5, 1e9});
  EXPECT_FALSE(check.satisfied);
  EXPECT_DOUBLE_EQ(check.t1, 0);
  EXPECT_DOUBLE_EQ(check.t2, 0);
}

TEST(CheckEnvelope, RejectsUnsortedTraces) {
  ArrivalTrace trace{{1.0, kPacketBits}, {0.5, kPacketBits}};
  EXPECT_THROW(check_envelope(trace, {1e6, 0.5, 1e9}), UnsortedTraceError);
}

TEST(FitSigma, ConstantRateAndBursts) {
  const double rho = 0.5, c = 1e9;
  EXPECT_NEAR(fit_sigma(constant_rate_trace(rho, c, 500), rho, c), kPacketBits, 1e-6);

  // Periodic bursts of k back-to-back packets.
  const int k = 4;
  ArrivalTrace bursty;
  for (int burst = 0; burst < 100; ++burst) {
    const double t = burst * (k * kPacketBits / (rho * c) * 1.0);
    for (int i = 0; i < k; ++i) bursty.emplace_back(t, kPacketBits);
  }
  EXPECT_NEAR(fit_sigma(bursty, rho, c), k * kPacketBits, 1e-6);

  EXPECT_DOUBLE_EQ(fit_sigma({}, rho, c), 0);
}

TEST(FitSigma, RhoTooSmallWhenRateExceedsBudget) {
  ArrivalTrace trace = constant_rate_trace(0.5, 1e9, 1000);
  EXPECT_THROW(fit_sigma(trace, 0.2, 1e9), RhoTooSmallError);
}

TEST(FitSigma, FitThenCheckIsConsistentAndTight) {
  sim::Rng rng(17, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const double c = 1e9;
    const double rho = rng.uniform(0.2, 0.9);
    ArrivalTrace trace;
    double t = 0;
    for (int i = 0; i < 300; ++i) {
      // Mean gap of 3.5 packet times against a mean batch of 2.5 packets
      // keeps the long-run rate safely under rho*C.
      t += rng.uniform(0, 7 * kPacketBits / (rho * c));
      const int pkts = 1 + static_cast<int>(rng.uniform_int(4));
      for (int p = 0; p < pkts; ++p) trace.emplace_back(t, kPacketBits);
    }
    const double sigma = fit_sigma(trace, rho, c);
    EXPECT_TRUE(check_envelope(trace, {sigma, rho, c}).satisfied);
    EXPECT_FALSE(check_envelope(trace, {sigma - kPacketBits, rho, c}).satisfied);
  }
}

TEST(Mm1Quantile, PaperExampleAndEdgeCases) {
  // 1MB flows at 10Gb/s: mu = 1.25/ms; at 80% load 99% finish under 18.4ms.
  Mm1Model model{1250, 0.8};
  EXPECT_NEAR(mm1_fct_quantile(model, 0.99) * 1e3, 18.42, 0.05);
  EXPECT_DOUBLE_EQ(mm1_fct_quantile(model, 0), 0);
  EXPECT_NEAR(mm1_fct_quantile({1.0, 0.0}, 1 - 1 / std::exp(1.0)), 1.0, 1e-12);
  EXPECT_THROW(mm1_fct_quantile(model, 1.0), InvalidProbabilityError);
  EXPECT_THROW(mm1_fct_quantile(model, -0.1), InvalidProbabilityError);
}

TEST(Mm1Quantile, InvertsTheCdf) {
  sim::Rng rng(23, 5);
  for (int i = 0; i < 200; ++i) {
    Mm1Model model{rng.uniform(0.1, 1e4), rng.uniform(0, 0.99)};
    const double p = rng.uniform(0, 0.999);
    const double t = mm1_fct_quantile(model, p);
    const double cdf = 1 - std::exp(-model.mu_per_sec * (1 - model.rho) * t);
    EXPECT_NEAR(cdf, p, 1e-12);
  }
}

// Token-bucket-shaped arrivals into a work-conserving FIFO queue: every flow
// must finish within (sigma + Z) / (C(1-rho)).
TEST(BoundSoundness, ShapedTrafficThroughFifoQueue) {
  sim::Rng rng(31, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const double c = 1e9;
    const double rho = rng.uniform(0.1, 0.9);
    const double sigma = rng.uniform(kPacketBits, 2e6);
    ArrivalEnvelope env{sigma, rho, c};

    std::vector<oracle::FifoJob> jobs;
    ArrivalTrace trace;
    double tokens = sigma;
    double t = 0;
    for (int i = 0; i < 400; ++i) {
      const double z = rng.uniform(kPacketBits, std::min(sigma, 8e5));
      double gap = rng.uniform(0, 2 * z / (rho * c));
      tokens = std::min(sigma, tokens + gap * rho * c);
      t += gap;
      if (tokens < z) {
        // Wait for the shaper to accumulate the flow's worth of tokens.
        const double wait = (z - tokens) / (rho * c);
        t += wait;
        tokens = z;
      }
      tokens -= z;
      jobs.push_back({t, z});
      trace.emplace_back(t, z);
    }
    ASSERT_TRUE(check_envelope(trace, env).satisfied) << "trial " << trial;

    std::vector<double> done = oracle::fifo_completion_times(jobs, c);
    for (size_t i = 0; i < jobs.size(); ++i) {
      const double fct = done[i] - jobs[i].arrival_s;
      EXPECT_LE(fct, fct_bound_seconds(env, jobs[i].bits) + 1e-12)
          << "trial " << trial << " flow " << i;
    }
  }
}

}  // namespace
}  // namespace bwbroker
