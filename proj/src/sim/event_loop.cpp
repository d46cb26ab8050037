#include "bwbroker/sim/event_loop.hpp"

namespace bwbroker::sim {

void EventLoop::run_until(SimTime horizon) {
  while (!heap_.empty() && heap_.top().t <= horizon) {
    // Move the handler out before popping so the event may schedule more.
    Event ev = std::move(const_cast<Event&>(heap_.top()));
    heap_.pop();
    now_ = ev.t;
    ev.fn();
  }
  now_ = horizon;
}

}  // namespace bwbroker::sim
