#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "bwbroker/units.hpp"

namespace bwbroker {

// Feedback from a receive meter back to one sender. `advertised` carries the
// meter's rate R; the sender applies its own weight on receipt. `meter_host`
// rides along as transport metadata (the IP source in the real system) and
// is not part of the 16-byte wire encoding.
struct FeedbackPacket {
  uint32_t src_host = 0;  // where the feedback is sent (the packet's source)
  uint32_t service = 0;
  int64_t advertised_bps = 0;
  uint32_t meter_host = 0;
};

// Trace-dump form: src host id (u32), service id (u32), advertised rate in
// Kb/s (u64), little-endian, 16 bytes.
std::array<uint8_t, 16> encode_feedback(const FeedbackPacket& fb);
FeedbackPacket decode_feedback(const std::array<uint8_t, 16>& buf);

struct MeterConfig {
  int64_t capacity_bps = 10'000'000'000;   // C
  int64_t line_rate_bps = 10'000'000'000;  // upper clamp for R
  int64_t min_rate_bps = 1'000'000;        // floor so silent senders can restart
  SimTime interval_ns = 200 * kMicrosecond;  // T
  double alpha = 0.5;
  int64_t feedback_quantum_bytes = 10'000;  // one feedback per 10kB received
};

// One step of the receive-rate control law:
//   R' = R * (1 - alpha*(y-C)/C - 1{marked}*beta/2), clamped to [rmin, line].
// The normalized utilization error (y-C)/C is capped at 1 so a single
// overloaded interval cannot collapse R by more than the factor (1-alpha),
// mirroring the law's built-in growth bound of (1+alpha) at y=0.
int64_t rcp_next_rate(int64_t rate_bps, double measured_bps, const MeterConfig& cfg,
                      double marked_fraction, bool any_marked);

// Receive-side rate meter for one (machine, service): measures utilization
// over intervals of T, adjusts the advertised rate, and emits feedback to
// senders by sampling arrivals once every feedback quantum.
class RateMeter {
 public:
  // R starts at the allocated capacity.
  explicit RateMeter(const MeterConfig& cfg) : cfg_(cfg), rate_(cfg.capacity_bps) {}

  // Counts an arrival; returns one feedback packet per quantum boundary the
  // cumulative byte count crosses (usually none or one).
  std::vector<FeedbackPacket> on_packet(uint32_t src_host, uint32_t service,
                                        int64_t bytes, bool ecn_marked);

  // Closes out one interval of length `elapsed_ns` (defaults to cfg.interval).
  void update(SimTime elapsed_ns = 0);

  // Applies the R growth that `intervals` update steps at zero utilization
  // would have produced, for meters whose update timer idled while no
  // traffic arrived.
  void idle_catchup(int64_t intervals);

  // Changing the capacity restarts the control law from R = C when the new
  // cap sits below the current rate, instead of relaxing through a deep
  // overload crash.
  void set_capacity(int64_t bps) {
    cfg_.capacity_bps = bps;
    if (rate_ > bps) rate_ = std::max(bps, cfg_.min_rate_bps);
  }
  int64_t capacity() const { return cfg_.capacity_bps; }
  int64_t rate() const { return rate_; }
  int64_t interval_bytes() const { return bytes_; }
  const MeterConfig& config() const { return cfg_; }

 private:
  MeterConfig cfg_;
  int64_t rate_;
  int64_t bytes_ = 0;
  int64_t packets_ = 0;
  int64_t marked_packets_ = 0;
  int64_t feedback_accum_ = 0;
};

enum class SendVerdict { kAllowed, kDelayed };

struct SendDecision {
  SendVerdict verdict;
  SimTime ready_at = 0;  // meaningful when delayed
  bool allowed() const { return verdict == SendVerdict::kAllowed; }
};

// Plain token bucket over bytes. Tokens refill continuously at `rate` up to
// `burst`; a packet passes only if the bucket holds its full size.
class TokenBucket {
 public:
  TokenBucket(int64_t rate_bps, int64_t burst_bytes, SimTime now)
      : rate_bps_(rate_bps), burst_bytes_(burst_bytes), tokens_(burst_bytes),
        last_refill_(now) {}

  void set_rate(int64_t rate_bps) { rate_bps_ = rate_bps; }
  int64_t rate() const { return rate_bps_; }
  int64_t burst() const { return burst_bytes_; }

  void refill(SimTime now);
  bool has_tokens(int64_t bytes) const { return tokens_ >= static_cast<double>(bytes); }
  // Earliest time the bucket will hold `bytes` tokens (no consumption).
  SimTime ready_time(int64_t bytes, SimTime now);
  void consume(int64_t bytes) { tokens_ -= static_cast<double>(bytes); }

 private:
  int64_t rate_bps_;
  int64_t burst_bytes_;
  double tokens_;
  SimTime last_refill_;
};

struct LimiterConfig {
  int64_t root_rate_bps = 10'000'000'000;
  int64_t root_burst_bytes = 65'536;
  int64_t child_burst_bytes = 65'536;
  double sender_weight = 1.0;  // applied to received feedback
  SimTime stale_child_ttl_ns = 10 * kSecond;  // 10 * T_rack by default
  // Off by default: share one limiter across destinations and fold the
  // feedback stream into its rate with an exponentially weighted harmonic
  // average, instead of keeping per-destination children.
  bool use_ewha = false;
  double ewha_gamma = 0.125;
};

// Sender-side rate limiter hierarchy for one (machine, service): a root
// bucket holding the broker-assigned service cap, with per-destination
// children driven by receiver feedback. A packet departs only when the
// destination bucket (if any) and the root both have tokens.
class RateLimiterTree {
 public:
  RateLimiterTree(const LimiterConfig& cfg, SimTime now)
      : cfg_(cfg), root_(cfg.root_rate_bps, cfg.root_burst_bytes, now) {}

  // Throws PacketTooLargeError when bytes exceed a governing burst.
  SendDecision try_send(uint32_t dst_host, int64_t bytes, SimTime now);

  // Creates or retargets the child for fb.meter_host at weight * advertised.
  void on_feedback(const FeedbackPacket& fb, SimTime now);

  void set_root_rate(int64_t bps) { root_.set_rate(bps); }
  int64_t root_rate() const { return root_.rate(); }
  double sender_weight() const { return cfg_.sender_weight; }

  bool has_child(uint32_t dst_host) const { return children_.count(dst_host) != 0; }
  int64_t child_rate(uint32_t dst_host) const;
  // Rate of the destination-agnostic shared limiter (EWHA mode).
  int64_t shared_rate() const;

  // Drops children that have not heard feedback within the TTL.
  void gc_stale_children(SimTime now);
  size_t child_count() const { return children_.size(); }

 private:
  struct Child {
    TokenBucket bucket;
    SimTime last_feedback;
  };
  LimiterConfig cfg_;
  TokenBucket root_;
  std::map<uint32_t, Child> children_;
  std::optional<TokenBucket> shared_;  // EWHA mode only
};

// Exponentially weighted harmonic average step for senders that share one
// rate limiter across destinations: R <- Ri*R / ((1-gamma)*Ri + gamma*R).
// The result lies strictly between min(R, Ri) and max(R, Ri) and scales
// linearly if both inputs do. Throws NonPositiveRateError.
double ewha_update(double rate_bps, double feedback_bps, double gamma = 0.125);

}  // namespace bwbroker
