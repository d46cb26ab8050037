#include "bwbroker/sim/link.hpp"

namespace bwbroker::sim {

LinkQueue::LinkQueue(std::string name, int64_t capacity_bps, int64_t ecn_threshold_bytes,
                     int64_t hard_limit_bytes)
    : name_(std::move(name)),
      capacity_bps_(capacity_bps),
      ecn_threshold_(ecn_threshold_bytes),
      hard_limit_(hard_limit_bytes) {}

void LinkQueue::enqueue(Packet&& p, EventLoop& loop) {
  if (capacity_bps_ <= 0 || bytes_queued_ + p.bytes > hard_limit_) {
    ++drops_;
    if (observer_) observer_(p, true);
    return;
  }
  bytes_queued_ += p.bytes;
  if (bytes_queued_ > ecn_threshold_) {
    p.ecn = true;
    ++marks_;
  }
  if (observer_) observer_(p, false);

  const SimTime start = std::max(loop.now(), free_at_);
  free_at_ = start + tx_time(p.bytes);
  q_.push_back(std::move(p));
  const uint64_t gen = generation_;
  loop.at(free_at_, [this, gen] { deliver_front(gen); });
}

void LinkQueue::deliver_front(uint64_t generation) {
  if (generation != generation_ || q_.empty()) return;
  Packet p = std::move(q_.front());
  q_.pop_front();
  bytes_queued_ -= p.bytes;
  delivered_bytes_ += p.bytes;
  if (sink_) sink_(std::move(p));
}

void LinkQueue::set_capacity(int64_t bps, EventLoop& loop) {
  ++generation_;
  capacity_bps_ = bps;
  if (bps <= 0) {
    drops_ += static_cast<int64_t>(q_.size());
    q_.clear();
    bytes_queued_ = 0;
    free_at_ = loop.now();
    return;
  }
  // Requeue what is already waiting at the new rate.
  free_at_ = loop.now();
  const uint64_t gen = generation_;
  for (const Packet& p : q_) {
    free_at_ += tx_time(p.bytes);
    loop.at(free_at_, [this, gen] { deliver_front(gen); });
  }
}

}  // namespace bwbroker::sim
