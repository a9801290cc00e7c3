#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <vector>

#include "mrh/transport.hpp"

// Discrete-event network simulator: one thread, a logical millisecond clock,
// seeded latency/drop decisions, and a full send trace. Identical seeds give
// identical executions, which is what makes protocol properties testable.

namespace mrh::transport {

struct SimConfig {
  std::int64_t latency_ms = 5;         // base one-way latency
  std::int64_t latency_jitter_ms = 0;  // extra uniform in [0, jitter]
  double drop_probability = 0.0;       // per unicast send
  std::uint64_t seed = 1;
};

struct TraceEntry {
  std::int64_t send_time = 0;
  std::int64_t deliver_time = -1;  // -1 when dropped
  bool dropped = false;
  Message msg;
};

class SimNet {
 public:
  explicit SimNet(SimConfig cfg) : cfg_(cfg) {}

  using Handler = std::function<void(const Message&)>;

  // Handler nodes react inline as events are processed (scripted peers).
  void add_node(const std::string& name, Handler on_message);
  // Inbox nodes queue deliveries for next_inbox (the coordinator side).
  void add_inbox_node(const std::string& name);

  // Stamp seq for (from, to), draw drop/latency, enqueue the delivery.
  // Per-link FIFO holds regardless of jitter: a later send never overtakes
  // an earlier one on the same (from, to) link.
  void send(const std::string& from, const std::string& to, Kind kind,
            json payload);

  void schedule_at(std::int64_t at_ms, std::function<void()> fn);
  void schedule_in(std::int64_t delay_ms, std::function<void()> fn);

  // The node stops receiving; inbox nodes hear peer_closed after one latency.
  void crash(const std::string& name);
  bool alive(const std::string& name) const { return !dead_.count(name); }

  std::int64_t now() const { return now_; }
  // Process every queued event with time <= until; clock lands on
  // max(now, until).
  void advance_until(std::int64_t until);

  struct InboxItem {
    bool closed = false;
    std::string peer;  // when closed
    Message msg;       // otherwise
  };
  // Drive the simulation until `name` has something queued or the clock hits
  // `deadline`. nullopt = deadline.
  std::optional<InboxItem> next_inbox(const std::string& name,
                                      std::int64_t deadline);

  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  struct Ev {
    std::int64_t time;
    std::uint64_t order;  // tie-break: enqueue order
    std::function<void()> fn;
  };
  struct EvLater {
    bool operator()(const Ev& a, const Ev& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };

  void push_event(std::int64_t at, std::function<void()> fn);
  bool run_next(std::int64_t deadline);  // one event if due; false otherwise
  std::uint64_t draw() { return stream_u64(cfg_.seed, draw_counter_++); }

  SimConfig cfg_;
  std::int64_t now_ = 0;
  std::uint64_t order_counter_ = 0;
  std::uint64_t draw_counter_ = 0;
  std::priority_queue<Ev, std::vector<Ev>, EvLater> events_;
  std::map<std::string, Handler> handlers_;
  std::map<std::string, std::deque<InboxItem>> inboxes_;
  std::set<std::string> dead_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> seqs_;
  std::map<std::pair<std::string, std::string>, std::int64_t> link_clock_;
  std::vector<TraceEntry> trace_;
};

// Coordinator endpoint over a SimNet.
class SimSession : public Session {
 public:
  SimSession(SimNet& net, std::string self) : net_(net), self_(std::move(self)) {
    net_.add_inbox_node(self_);
  }
  std::string self() const override { return self_; }
  std::int64_t now_ms() override { return net_.now(); }
  void send(const std::string& to, Kind kind, json payload) override {
    net_.send(self_, to, kind, std::move(payload));
  }
  Event wait(std::int64_t deadline_ms) override;
  bool peer_open(const std::string& peer) const override {
    return !closed_.count(peer);
  }

 private:
  SimNet& net_;
  std::string self_;
  std::set<std::string> closed_;
};

}  // namespace mrh::transport
