#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include "bwbroker/shaper.hpp"
#include "bwbroker/units.hpp"

namespace bwbroker::sim {

class Connection;

// Services the transport needs from the surrounding simulation.
class TransportHooks {
 public:
  virtual ~TransportHooks() = default;
  virtual SimTime transport_now() const = 0;
  virtual void transport_schedule(SimTime at, std::function<void()> fn) = 0;
  // Pushes [offset, offset+bytes) of the connection's stream toward the
  // network; a delayed verdict means the shaper will have tokens at ready_at.
  virtual SendDecision transport_send(Connection& conn, int64_t offset, int32_t bytes,
                                      bool retx) = 0;
};

struct TransportParams {
  int mss_bytes = 1500;
  SimTime rto_ns = 200 * kMillisecond;
  int init_cwnd_mss = 2;
};

// Sender side of one connection: window-based, one MSS of additive increase
// per RTT, halves once per window on an ECN echo, go-back-N on a fixed
// retransmission timeout. Deliberately coarse; it reproduces back-off
// behavior, not any particular TCP.
class Connection {
 public:
  Connection(uint64_t id, uint32_t src, uint32_t dst, uint32_t service,
             TransportHooks* hooks, TransportParams params);

  uint64_t id() const { return id_; }
  uint32_t src() const { return src_; }
  uint32_t dst() const { return dst_; }
  uint32_t service() const { return service_; }

  // Appends `n` bytes to the stream (an RPC riding this connection).
  void add_bytes(int64_t n);
  void set_unbounded();
  // Stops an unbounded flow: the stream ends at what was already sent.
  void stop();

  void on_ack(int64_t acked_prefix, bool ecn_echo);
  // Attempts to transmit whatever the window and shaper allow.
  void pump();

  int64_t acked() const { return acked_; }
  int64_t sent() const { return sent_; }
  int64_t stream_end() const { return stream_end_; }
  double cwnd_bytes() const { return cwnd_; }
  bool idle() const { return sent_ >= stream_end_ && acked_ >= sent_; }

 private:
  void arm_rto();
  void fire_rto(uint64_t epoch);

  uint64_t id_;
  uint32_t src_, dst_, service_;
  TransportHooks* hooks_;
  TransportParams params_;

  int64_t stream_end_ = 0;
  bool unbounded_ = false;
  int64_t sent_ = 0;
  int64_t acked_ = 0;
  double cwnd_;
  int64_t recovery_point_ = 0;  // one multiplicative decrease per window
  bool retry_pending_ = false;
  uint64_t rto_epoch_ = 0;
  bool rto_armed_ = false;
};

// Receiver side of one connection: merges possibly-reordered segments,
// tracks the in-order prefix, and notes ECN marks to echo on the next ACK.
class FlowRx {
 public:
  // Returns the new in-order prefix after merging [offset, offset+bytes).
  int64_t on_data(int64_t offset, int32_t bytes, bool ecn);
  // True once per ACK when a marked segment arrived since the previous one.
  bool take_ecn_echo();
  int64_t prefix() const { return prefix_; }

 private:
  int64_t prefix_ = 0;
  std::map<int64_t, int64_t> out_of_order_;  // start -> end
  bool ecn_pending_ = false;
};

}  // namespace bwbroker::sim
