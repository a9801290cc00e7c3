#include "mrh/sim.hpp"

#include <stdexcept>

namespace mrh::transport {

void SimNet::add_node(const std::string& name, Handler on_message) {
  handlers_[name] = std::move(on_message);
}

void SimNet::add_inbox_node(const std::string& name) { inboxes_[name]; }

void SimNet::push_event(std::int64_t at, std::function<void()> fn) {
  events_.push(Ev{at, order_counter_++, std::move(fn)});
}

void SimNet::send(const std::string& from, const std::string& to, Kind kind,
                  json payload) {
  Message m;
  m.kind = kind;
  m.sender = from;
  m.recipient = to;
  m.seq = ++seqs_[{from, to}];
  m.payload = std::move(payload);

  TraceEntry entry;
  entry.send_time = now_;
  entry.msg = m;

  bool drop = false;
  if (cfg_.drop_probability > 0.0)
    drop = unit_double(draw()) < cfg_.drop_probability;
  if (!drop && dead_.count(to)) drop = true;

  if (drop) {
    entry.dropped = true;
    trace_.push_back(std::move(entry));
    return;
  }

  std::int64_t lat = cfg_.latency_ms;
  if (cfg_.latency_jitter_ms > 0)
    lat += static_cast<std::int64_t>(
        draw() % static_cast<std::uint64_t>(cfg_.latency_jitter_ms + 1));
  std::int64_t at = now_ + lat;
  auto& link = link_clock_[{from, to}];
  if (at < link) at = link;  // FIFO per link
  link = at;

  entry.deliver_time = at;
  trace_.push_back(std::move(entry));

  push_event(at, [this, m = std::move(m)] {
    if (dead_.count(m.recipient)) return;
    auto inbox = inboxes_.find(m.recipient);
    if (inbox != inboxes_.end()) {
      inbox->second.push_back(InboxItem{false, {}, m});
      return;
    }
    auto h = handlers_.find(m.recipient);
    if (h != handlers_.end()) h->second(m);
  });
}

void SimNet::schedule_at(std::int64_t at_ms, std::function<void()> fn) {
  if (at_ms < now_) at_ms = now_;
  push_event(at_ms, std::move(fn));
}

void SimNet::schedule_in(std::int64_t delay_ms, std::function<void()> fn) {
  schedule_at(now_ + (delay_ms < 0 ? 0 : delay_ms), std::move(fn));
}

void SimNet::crash(const std::string& name) {
  if (!dead_.insert(name).second) return;
  std::int64_t at = now_ + cfg_.latency_ms;
  for (auto& [inbox_name, queue] : inboxes_) {
    if (inbox_name == name) continue;
    // Close must not overtake data already in flight on the link.
    auto& link = link_clock_[{name, inbox_name}];
    if (at < link) at = link;
    link = at;
    push_event(at, [this, inbox_name, name] {
      inboxes_[inbox_name].push_back(InboxItem{true, name, {}});
    });
  }
}

bool SimNet::run_next(std::int64_t deadline) {
  if (events_.empty() || events_.top().time > deadline) return false;
  Ev ev = events_.top();
  events_.pop();
  if (ev.time > now_) now_ = ev.time;
  ev.fn();
  return true;
}

void SimNet::advance_until(std::int64_t until) {
  while (run_next(until)) {
  }
  if (now_ < until) now_ = until;
}

std::optional<SimNet::InboxItem> SimNet::next_inbox(const std::string& name,
                                                    std::int64_t deadline) {
  auto it = inboxes_.find(name);
  if (it == inboxes_.end())
    throw std::invalid_argument("no inbox node '" + name + "'");
  for (;;) {
    if (!it->second.empty()) {
      InboxItem item = std::move(it->second.front());
      it->second.pop_front();
      return item;
    }
    if (!run_next(deadline)) {
      if (now_ < deadline) now_ = deadline;
      return std::nullopt;
    }
  }
}

Event SimSession::wait(std::int64_t deadline_ms) {
  auto item = net_.next_inbox(self_, deadline_ms);
  Event ev;
  if (!item) {
    ev.type = Event::Type::deadline;
    return ev;
  }
  if (item->closed) {
    ev.type = Event::Type::peer_closed;
    ev.peer = item->peer;
    closed_.insert(item->peer);
    return ev;
  }
  ev.type = Event::Type::message;
  ev.msg = std::move(item->msg);
  return ev;
}

}  // namespace mrh::transport
