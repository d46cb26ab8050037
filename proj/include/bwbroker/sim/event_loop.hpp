#pragma once

#include <functional>
#include <queue>
#include <vector>

#include "bwbroker/units.hpp"

namespace bwbroker::sim {

// Deterministic discrete-event loop: events fire in (time, insertion)
// order, so identical schedules replay identically.
class EventLoop {
 public:
  SimTime now() const { return now_; }

  void at(SimTime t, std::function<void()> fn) {
    heap_.push(Event{t < now_ ? now_ : t, next_seq_++, std::move(fn)});
  }
  void after(SimTime delay, std::function<void()> fn) { at(now_ + delay, std::move(fn)); }

  // Processes every event with t <= horizon; the clock ends at horizon.
  void run_until(SimTime horizon);

  size_t pending() const { return heap_.size(); }

 private:
  struct Event {
    SimTime t;
    uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  SimTime now_ = 0;
  uint64_t next_seq_ = 0;
};

}  // namespace bwbroker::sim
