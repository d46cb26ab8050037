#include "bwbroker/shaper.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bwbroker/errors.hpp"

namespace bwbroker {

namespace {

void put_u32(uint8_t* p, uint32_t v) {
  p[0] = static_cast<uint8_t>(v);
  p[1] = static_cast<uint8_t>(v >> 8);
  p[2] = static_cast<uint8_t>(v >> 16);
  p[3] = static_cast<uint8_t>(v >> 24);
}

void put_u64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::array<uint8_t, 16> encode_feedback(const FeedbackPacket& fb) {
  std::array<uint8_t, 16> buf{};
  put_u32(buf.data(), fb.src_host);
  put_u32(buf.data() + 4, fb.service);
  put_u64(buf.data() + 8, static_cast<uint64_t>(fb.advertised_bps / 1000));
  return buf;
}

FeedbackPacket decode_feedback(const std::array<uint8_t, 16>& buf) {
  FeedbackPacket fb;
  fb.src_host = get_u32(buf.data());
  fb.service = get_u32(buf.data() + 4);
  fb.advertised_bps = static_cast<int64_t>(get_u64(buf.data() + 8)) * 1000;
  return fb;
}

int64_t rcp_next_rate(int64_t rate_bps, double measured_bps, const MeterConfig& cfg,
                      double marked_fraction, bool any_marked) {
  const double c = static_cast<double>(cfg.capacity_bps);
  double err = (measured_bps - c) / c;
  if (err > 1.0) err = 1.0;
  double factor = 1.0 - cfg.alpha * err;
  if (any_marked) factor -= marked_fraction / 2.0;
  double next = static_cast<double>(rate_bps) * factor;
  next = std::max(next, static_cast<double>(cfg.min_rate_bps));
  next = std::min(next, static_cast<double>(cfg.line_rate_bps));
  return static_cast<int64_t>(std::llround(next));
}

std::vector<FeedbackPacket> RateMeter::on_packet(uint32_t src_host, uint32_t service,
                                                 int64_t bytes, bool ecn_marked) {
  bytes_ += bytes;
  packets_ += 1;
  if (ecn_marked) marked_packets_ += 1;

  std::vector<FeedbackPacket> out;
  feedback_accum_ += bytes;
  while (feedback_accum_ >= cfg_.feedback_quantum_bytes) {
    feedback_accum_ -= cfg_.feedback_quantum_bytes;
    out.push_back(FeedbackPacket{src_host, service, rate_});
  }
  return out;
}

void RateMeter::update(SimTime elapsed_ns) {
  if (elapsed_ns <= 0) elapsed_ns = cfg_.interval_ns;
  const double y = static_cast<double>(bytes_) * 8e9 / static_cast<double>(elapsed_ns);
  const bool any_marked = marked_packets_ > 0;
  const double beta =
      packets_ > 0 ? static_cast<double>(marked_packets_) / static_cast<double>(packets_) : 0.0;
  rate_ = rcp_next_rate(rate_, y, cfg_, beta, any_marked);
  bytes_ = 0;
  packets_ = 0;
  marked_packets_ = 0;
}

void RateMeter::idle_catchup(int64_t intervals) {
  // R * (1+alpha)^k, saturating at the line rate.
  double r = static_cast<double>(rate_);
  const double line = static_cast<double>(cfg_.line_rate_bps);
  for (int64_t i = 0; i < intervals && r < line; ++i) {
    r *= 1.0 + cfg_.alpha;
  }
  rate_ = static_cast<int64_t>(std::min(r, line));
}

void TokenBucket::refill(SimTime now) {
  if (now <= last_refill_) return;
  const double added =
      static_cast<double>(rate_bps_) * static_cast<double>(now - last_refill_) / 8e9;
  tokens_ = std::min(tokens_ + added, static_cast<double>(burst_bytes_));
  last_refill_ = now;
}

SimTime TokenBucket::ready_time(int64_t bytes, SimTime now) {
  refill(now);
  const double need = static_cast<double>(bytes) - tokens_;
  if (need <= 0) return now;
  if (rate_bps_ <= 0) return now + 3600 * kSecond;  // effectively blocked
  const double ns = need * 8e9 / static_cast<double>(rate_bps_);
  return now + static_cast<SimTime>(std::ceil(ns));
}

SendDecision RateLimiterTree::try_send(uint32_t dst_host, int64_t bytes, SimTime now) {
  if (bytes > root_.burst()) {
    throw PacketTooLargeError("packet of " + std::to_string(bytes) +
                              "B exceeds the root burst of " +
                              std::to_string(root_.burst()) + "B");
  }
  TokenBucket* gate = nullptr;
  if (cfg_.use_ewha) {
    if (shared_) gate = &*shared_;
  } else {
    auto it = children_.find(dst_host);
    if (it != children_.end()) gate = &it->second.bucket;
  }
  if (gate && bytes > gate->burst()) {
    throw PacketTooLargeError("packet exceeds the per-destination burst");
  }

  root_.refill(now);
  SimTime ready = now;
  if (!root_.has_tokens(bytes)) ready = root_.ready_time(bytes, now);
  if (gate) {
    gate->refill(now);
    if (!gate->has_tokens(bytes)) {
      ready = std::max(ready, gate->ready_time(bytes, now));
    }
  }
  if (ready > now) return {SendVerdict::kDelayed, ready};

  root_.consume(bytes);
  if (gate) gate->consume(bytes);
  return {SendVerdict::kAllowed, now};
}

void RateLimiterTree::on_feedback(const FeedbackPacket& fb, SimTime now) {
  const int64_t rate = std::max<int64_t>(
      1000, static_cast<int64_t>(std::llround(cfg_.sender_weight *
                                              static_cast<double>(fb.advertised_bps))));
  if (cfg_.use_ewha) {
    // One destination-agnostic limiter; the feedback stream itself carries
    // the per-destination traffic mix, so the harmonic average settles where
    // no receiver's advertised rate is violated.
    if (!shared_) {
      shared_.emplace(rate, cfg_.child_burst_bytes, now);
    } else {
      shared_->refill(now);
      shared_->set_rate(static_cast<int64_t>(std::llround(
          ewha_update(static_cast<double>(shared_->rate()), static_cast<double>(rate),
                      cfg_.ewha_gamma))));
    }
    return;
  }
  auto it = children_.find(fb.meter_host);
  if (it == children_.end()) {
    Child child{TokenBucket(rate, cfg_.child_burst_bytes, now), now};
    children_.emplace(fb.meter_host, std::move(child));
  } else {
    it->second.bucket.refill(now);
    it->second.bucket.set_rate(rate);
    it->second.last_feedback = now;
  }
}

int64_t RateLimiterTree::shared_rate() const {
  return shared_ ? shared_->rate() : -1;
}

int64_t RateLimiterTree::child_rate(uint32_t dst_host) const {
  auto it = children_.find(dst_host);
  return it == children_.end() ? -1 : it->second.bucket.rate();
}

void RateLimiterTree::gc_stale_children(SimTime now) {
  for (auto it = children_.begin(); it != children_.end();) {
    if (now - it->second.last_feedback > cfg_.stale_child_ttl_ns) {
      it = children_.erase(it);
    } else {
      ++it;
    }
  }
}

double ewha_update(double rate_bps, double feedback_bps, double gamma) {
  if (!(rate_bps > 0) || !(feedback_bps > 0)) {
    throw NonPositiveRateError("ewha_update requires positive rates");
  }
  if (!(gamma > 0) || !(gamma < 1)) {
    throw NonPositiveRateError("ewha gain must lie in (0,1)");
  }
  return feedback_bps * rate_bps / ((1.0 - gamma) * feedback_bps + gamma * rate_bps);
}

}  // namespace bwbroker
