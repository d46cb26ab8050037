#include "bwbroker/sim/transport.hpp"

#include <algorithm>
#include <limits>

namespace bwbroker::sim {

namespace {
constexpr int64_t kUnboundedEnd = std::numeric_limits<int64_t>::max() / 2;
}

Connection::Connection(uint64_t id, uint32_t src, uint32_t dst, uint32_t service,
                       TransportHooks* hooks, TransportParams params)
    : id_(id), src_(src), dst_(dst), service_(service), hooks_(hooks), params_(params),
      cwnd_(static_cast<double>(params.init_cwnd_mss) * params.mss_bytes) {}

void Connection::add_bytes(int64_t n) {
  stream_end_ += n;
  pump();
}

void Connection::set_unbounded() {
  unbounded_ = true;
  stream_end_ = kUnboundedEnd;
  pump();
}

void Connection::stop() {
  if (unbounded_) {
    stream_end_ = sent_;
    unbounded_ = false;
  }
}

void Connection::pump() {
  if (retry_pending_) return;
  while (sent_ < stream_end_) {
    const int64_t window_room = acked_ + static_cast<int64_t>(cwnd_) - sent_;
    if (window_room < std::min<int64_t>(params_.mss_bytes, stream_end_ - sent_)) break;
    const int32_t bytes = static_cast<int32_t>(
        std::min<int64_t>(params_.mss_bytes, stream_end_ - sent_));
    SendDecision verdict = hooks_->transport_send(*this, sent_, bytes, false);
    if (!verdict.allowed()) {
      retry_pending_ = true;
      hooks_->transport_schedule(verdict.ready_at, [this] {
        retry_pending_ = false;
        pump();
      });
      return;
    }
    sent_ += bytes;
    if (!rto_armed_) arm_rto();
  }
}

void Connection::on_ack(int64_t acked_prefix, bool ecn_echo) {
  if (acked_prefix > acked_) {
    const int64_t delta = acked_prefix - acked_;
    acked_ = acked_prefix;
    // One MSS per RTT of additive increase, spread across the window's ACKs.
    cwnd_ += static_cast<double>(params_.mss_bytes) * static_cast<double>(delta) / cwnd_;
    arm_rto();
  }
  if (ecn_echo && acked_ > recovery_point_) {
    cwnd_ = std::max(cwnd_ / 2.0, static_cast<double>(params_.mss_bytes));
    recovery_point_ = sent_;
  }
  if (acked_ >= sent_) {
    rto_armed_ = false;
    ++rto_epoch_;  // nothing outstanding; cancel the pending timer
  }
  pump();
}

void Connection::arm_rto() {
  rto_armed_ = true;
  const uint64_t epoch = ++rto_epoch_;
  hooks_->transport_schedule(hooks_->transport_now() + params_.rto_ns,
                             [this, epoch] { fire_rto(epoch); });
}

void Connection::fire_rto(uint64_t epoch) {
  if (epoch != rto_epoch_ || acked_ >= sent_) return;
  // Go-back-N: resume from the cumulative ACK with a cold window.
  sent_ = acked_;
  recovery_point_ = acked_;
  cwnd_ = params_.mss_bytes;
  arm_rto();
  pump();
}

int64_t FlowRx::on_data(int64_t offset, int32_t bytes, bool ecn) {
  if (ecn) ecn_pending_ = true;
  int64_t start = offset;
  int64_t end = offset + bytes;
  if (end <= prefix_) return prefix_;  // stale retransmission
  start = std::max(start, prefix_);
  if (start > prefix_) {
    // Hold out-of-order data, coalescing overlaps.
    auto it = out_of_order_.lower_bound(start);
    if (it != out_of_order_.begin()) {
      auto prev = std::prev(it);
      if (prev->second >= start) {
        start = prev->first;
        end = std::max(end, prev->second);
        it = out_of_order_.erase(prev);
      }
    }
    while (it != out_of_order_.end() && it->first <= end) {
      end = std::max(end, it->second);
      it = out_of_order_.erase(it);
    }
    out_of_order_[start] = end;
    return prefix_;
  }
  prefix_ = end;
  // Absorb any runs the new prefix reaches.
  auto it = out_of_order_.begin();
  while (it != out_of_order_.end() && it->first <= prefix_) {
    prefix_ = std::max(prefix_, it->second);
    it = out_of_order_.erase(it);
  }
  return prefix_;
}

bool FlowRx::take_ecn_echo() {
  const bool echo = ecn_pending_;
  ecn_pending_ = false;
  return echo;
}

}  // namespace bwbroker::sim
