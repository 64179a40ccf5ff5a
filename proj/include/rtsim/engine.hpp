#pragma once

// Deterministic discrete-event kernel. Time is an integer count of
// nanoseconds; events with equal fire times dispatch in insertion order.

#include <cstdint>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtsim {

using SimTime = std::uint64_t;

// Fatal simulation bug or watchdog trip. Runs that raise this are discarded.
class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Payload>
struct Event {
    SimTime fire_at = 0;
    std::uint64_t seq = 0;
    Payload payload{};
};

template <typename Payload>
class EventQueue {
public:
    using event_type = Event<Payload>;

    void schedule(SimTime at, Payload payload) {
        if (at < now_) {
            std::ostringstream os;
            os << "event scheduled in the past: fire_at=" << at << " now=" << now_;
            throw SimulationError(os.str());
        }
        heap_.push(event_type{at, next_seq_++, std::move(payload)});
    }

    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    SimTime now() const { return now_; }
    std::uint64_t dispatched() const { return dispatched_; }
    std::uint64_t scheduled() const { return next_seq_; }

    // Removes the earliest event and advances the clock to its fire time.
    event_type pop() {
        event_type ev = heap_.top();
        heap_.pop();
        now_ = ev.fire_at;
        ++dispatched_;
        return ev;
    }

private:
    struct Later {
        bool operator()(const event_type& a, const event_type& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<event_type, std::vector<event_type>, Later> heap_;
    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t dispatched_ = 0;
};

// Dispatches until the queue drains and returns the time of the last
// dispatched event (0 for an empty queue). `max_events` bounds the number of
// dispatches; exceeding it throws.
template <typename Payload, typename Handler>
SimTime run(EventQueue<Payload>& queue, Handler&& handler, std::uint64_t max_events) {
    SimTime last = 0;
    std::uint64_t count = 0;
    while (!queue.empty()) {
        if (count == max_events) {
            std::ostringstream os;
            os << "event watchdog tripped after " << count << " events at t=" << queue.now();
            throw SimulationError(os.str());
        }
        auto ev = queue.pop();
        ++count;
        last = ev.fire_at;
        handler(ev.fire_at, ev.payload);
    }
    return last;
}

}  // namespace rtsim
