#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>

#include "bwbroker/sim/event_loop.hpp"
#include "bwbroker/units.hpp"

namespace bwbroker::sim {

struct Packet {
  uint32_t src = 0;
  uint32_t dst = 0;
  uint32_t service = 0;
  uint64_t flow = 0;     // 0 for flowless (UDP-style) traffic
  int64_t offset = 0;    // stream byte offset of the payload
  int32_t bytes = 0;
  bool ecn = false;
  bool retx = false;
};

// FIFO output queue of one link: serialization at `capacity`, ECN mark on
// enqueue when the backlog exceeds the threshold, tail drop at the hard
// limit. Packets are handed to the sink when their serialization ends;
// propagation is accounted once per path in the control-message delays, not
// per hop, so it never throttles link throughput.
class LinkQueue {
 public:
  LinkQueue(std::string name, int64_t capacity_bps, int64_t ecn_threshold_bytes,
            int64_t hard_limit_bytes);

  void set_sink(std::function<void(Packet&&)> sink) { sink_ = std::move(sink); }
  // Observes every enqueue attempt: (packet, dropped).
  void set_observer(std::function<void(const Packet&, bool dropped)> obs) {
    observer_ = std::move(obs);
  }

  void enqueue(Packet&& p, EventLoop& loop);

  // 0 takes the link down and drops everything queued.
  void set_capacity(int64_t bps, EventLoop& loop);
  int64_t capacity() const { return capacity_bps_; }

  const std::string& name() const { return name_; }
  int64_t backlog_bytes() const { return bytes_queued_; }
  int64_t delivered_bytes() const { return delivered_bytes_; }
  int64_t marks() const { return marks_; }
  int64_t drops() const { return drops_; }

 private:
  SimTime tx_time(int32_t bytes) const {
    return static_cast<SimTime>(bytes) * 8 * kSecond / capacity_bps_;
  }
  void deliver_front(uint64_t generation);

  std::string name_;
  int64_t capacity_bps_;
  int64_t ecn_threshold_;
  int64_t hard_limit_;

  std::deque<Packet> q_;
  int64_t bytes_queued_ = 0;
  SimTime free_at_ = 0;
  uint64_t generation_ = 0;  // invalidates in-flight departures on toggles

  int64_t delivered_bytes_ = 0;
  int64_t marks_ = 0;
  int64_t drops_ = 0;

  std::function<void(Packet&&)> sink_;
  std::function<void(const Packet&, bool)> observer_;
};

}  // namespace bwbroker::sim
