#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "mrh/sim.hpp"
#include "mrh/transport.hpp"

using namespace mrh::transport;
using mrh::json;

TEST_CASE("kind names round-trip and match the wire vocabulary") {
  CHECK(kind_name(Kind::reg) == "REGISTER");
  CHECK(kind_name(Kind::reg_ack) == "REGISTER_ACK");
  CHECK(kind_name(Kind::execute) == "EXECUTE");
  CHECK(kind_name(Kind::verdict) == "VERDICT");
  CHECK(kind_name(Kind::ping) == "PING");
  CHECK(kind_name(Kind::pong) == "PONG");
  CHECK(kind_name(Kind::shutdown) == "SHUTDOWN");
  for (Kind k : {Kind::reg, Kind::reg_ack, Kind::execute, Kind::verdict,
                 Kind::ping, Kind::pong, Kind::shutdown})
    CHECK(kind_from_name(kind_name(k)) == k);
  CHECK_FALSE(kind_from_name("HELLO").has_value());
  CHECK_FALSE(kind_from_name("register").has_value());  // case-sensitive
}

TEST_CASE("frame bytes are frozen: length prefix plus canonical JSON") {
  Message m;
  m.kind = Kind::ping;
  m.sender = "t1";
  m.recipient = "coordinator";
  m.seq = 7;
  m.payload = json::object();

  std::string expected_body =
      R"({"kind":"PING","payload":{},"recipient":"coordinator","sender":"t1","seq":7})";
  std::string frame = encode_frame(m);
  REQUIRE(frame.size() == 4 + expected_body.size());
  // 4-byte big-endian length
  auto b = [&](int i) { return static_cast<unsigned char>(frame[i]); };
  CHECK(b(0) == 0);
  CHECK(b(1) == 0);
  CHECK(b(2) == 0);
  CHECK(b(3) == expected_body.size());
  CHECK(frame.substr(4) == expected_body);
}

TEST_CASE("message json round-trip, strict shape") {
  Message m;
  m.kind = Kind::verdict;
  m.sender = "t2";
  m.recipient = "coordinator";
  m.seq = 3;
  m.payload = {{"action", "a1"}, {"outcome", "pass"}};
  std::string err;
  auto back = message_from_json(to_json(m), &err);
  REQUIRE(back.has_value());
  CHECK(back->kind == Kind::verdict);
  CHECK(back->sender == "t2");
  CHECK(back->recipient == "coordinator");
  CHECK(back->seq == 3);
  CHECK(back->payload == m.payload);

  auto reject = [&](json j, const std::string& needle) {
    std::string why;
    auto r = message_from_json(j, &why);
    CHECK_FALSE(r.has_value());
    CHECK_MESSAGE(why.find(needle) != std::string::npos,
                  "got: " << why << " wanted: " << needle);
  };
  json good = to_json(m);
  json extra = good;
  extra["hop"] = 1;
  reject(extra, "unknown message field");
  json nokind = good;
  nokind.erase("kind");
  reject(nokind, "missing string 'kind'");
  json badkind = good;
  badkind["kind"] = "GOSSIP";
  reject(badkind, "unknown kind");
  json badseq = good;
  badseq["seq"] = -1;
  reject(badseq, "non-negative integer 'seq'");
  json badpayload = good;
  badpayload["payload"] = 5;
  reject(badpayload, "missing object 'payload'");
  reject(json::array(), "not an object");
}

TEST_CASE("decoder reassembles frames from arbitrary chunking") {
  Message m1;
  m1.kind = Kind::execute;
  m1.sender = "coordinator";
  m1.recipient = "t0";
  m1.seq = 1;
  m1.payload = {{"action", "a0"}};
  Message m2;
  m2.kind = Kind::pong;
  m2.sender = "coordinator";
  m2.recipient = "t0";
  m2.seq = 2;
  m2.payload = json::object();

  std::string stream = encode_frame(m1) + encode_frame(m2);

  SUBCASE("byte by byte") {
    FrameDecoder d;
    std::vector<Message> got;
    for (char c : stream) {
      d.feed(std::string_view(&c, 1));
      while (auto m = d.next()) got.push_back(*m);
    }
    REQUIRE(got.size() == 2);
    CHECK(got[0].kind == Kind::execute);
    CHECK(got[0].payload == m1.payload);
    CHECK(got[1].kind == Kind::pong);
    CHECK(got[1].seq == 2);
  }

  SUBCASE("both frames in one feed") {
    FrameDecoder d;
    d.feed(stream);
    auto a = d.next();
    auto b = d.next();
    auto c = d.next();
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK_FALSE(c.has_value());
    CHECK(a->seq == 1);
    CHECK(b->seq == 2);
  }

  SUBCASE("split in the middle of the length prefix") {
    FrameDecoder d;
    d.feed(stream.substr(0, 2));
    CHECK_FALSE(d.next().has_value());
    d.feed(stream.substr(2));
    CHECK(d.next().has_value());
    CHECK(d.next().has_value());
  }
}

TEST_CASE("decoder rejects oversized, non-JSON, and misshapen frames") {
  SUBCASE("length prefix beyond the limit") {
    FrameDecoder d;
    d.feed(std::string("\xff\xff\xff\xff", 4));
    CHECK_THROWS_AS(d.next(), std::runtime_error);
  }
  SUBCASE("body is not JSON") {
    FrameDecoder d;
    std::string body = "hello";
    std::string frame;
    frame.push_back(0);
    frame.push_back(0);
    frame.push_back(0);
    frame.push_back(static_cast<char>(body.size()));
    frame += body;
    d.feed(frame);
    CHECK_THROWS_AS(d.next(), std::runtime_error);
  }
  SUBCASE("valid JSON, wrong shape") {
    FrameDecoder d;
    std::string body = R"({"kind":"PING"})";
    std::string frame;
    frame.push_back(0);
    frame.push_back(0);
    frame.push_back(0);
    frame.push_back(static_cast<char>(body.size()));
    frame += body;
    d.feed(frame);
    CHECK_THROWS_AS(d.next(), std::runtime_error);
  }
}

TEST_CASE("simulator: fixed latency, logical clock, inbox delivery") {
  SimNet net(SimConfig{.latency_ms = 5});
  net.add_inbox_node("coordinator");
  net.send("t0", "coordinator", Kind::ping, json::object());
  CHECK(net.now() == 0);

  auto item = net.next_inbox("coordinator", 100);
  REQUIRE(item.has_value());
  CHECK_FALSE(item->closed);
  CHECK(item->msg.kind == Kind::ping);
  CHECK(item->msg.sender == "t0");
  CHECK(net.now() == 5);  // the clock advanced exactly one latency

  // Deadline with nothing in flight: clock lands on the deadline.
  auto nothing = net.next_inbox("coordinator", 42);
  CHECK_FALSE(nothing.has_value());
  CHECK(net.now() == 42);
}

TEST_CASE("simulator: seq stamping and per-link FIFO under jitter") {
  SimNet net(SimConfig{.latency_ms = 2, .latency_jitter_ms = 9, .seed = 99});
  net.add_inbox_node("coordinator");
  for (int i = 0; i < 20; ++i)
    net.send("t0", "coordinator", Kind::ping, {{"n", i}});

  std::int64_t last_deliver = -1;
  for (int i = 0; i < 20; ++i) {
    auto item = net.next_inbox("coordinator", 1000);
    REQUIRE(item.has_value());
    CHECK(item->msg.payload["n"] == i);          // FIFO: order preserved
    CHECK(item->msg.seq == static_cast<std::uint64_t>(i + 1));
    CHECK(net.now() >= last_deliver);            // delivery times never regress
    last_deliver = net.now();
  }
  // The trace records every send with its delivery time.
  CHECK(net.trace().size() == 20);
  std::int64_t prev = -1;
  for (const auto& e : net.trace()) {
    CHECK_FALSE(e.dropped);
    CHECK(e.deliver_time >= e.send_time + 2);
    CHECK(e.deliver_time >= prev);
    prev = e.deliver_time;
  }
}

TEST_CASE("simulator: identical seeds give identical executions") {
  auto run = [](std::uint64_t seed) {
    SimNet net(SimConfig{.latency_ms = 3, .latency_jitter_ms = 7,
                         .drop_probability = 0.3, .seed = seed});
    net.add_inbox_node("coordinator");
    for (int i = 0; i < 50; ++i)
      net.send("t1", "coordinator", Kind::ping, {{"n", i}});
    net.advance_until(500);
    std::vector<std::tuple<std::int64_t, std::int64_t, bool>> shape;
    for (const auto& e : net.trace())
      shape.emplace_back(e.send_time, e.deliver_time, e.dropped);
    return shape;
  };
  auto a = run(7);
  auto b = run(7);
  auto c = run(8);
  CHECK(a == b);
  CHECK(a != c);  // a different seed actually changes something
}

TEST_CASE("simulator: drop probability one loses every unicast") {
  SimNet net(SimConfig{.latency_ms = 1, .drop_probability = 1.0, .seed = 3});
  net.add_inbox_node("coordinator");
  for (int i = 0; i < 10; ++i)
    net.send("t0", "coordinator", Kind::ping, json::object());
  CHECK_FALSE(net.next_inbox("coordinator", 50).has_value());
  for (const auto& e : net.trace()) {
    CHECK(e.dropped);
    CHECK(e.deliver_time == -1);
  }
}

TEST_CASE("simulator: crash silences a node and notifies inboxes once") {
  SimNet net(SimConfig{.latency_ms = 4});
  net.add_inbox_node("coordinator");
  bool tester_heard = false;
  net.add_node("t0", [&](const Message&) { tester_heard = true; });

  net.send("t0", "coordinator", Kind::ping, json::object());  // in flight
  net.crash("t0");
  CHECK_FALSE(net.alive("t0"));

  // The in-flight message still arrives (it left before the crash)...
  auto first = net.next_inbox("coordinator", 100);
  REQUIRE(first.has_value());
  CHECK_FALSE(first->closed);
  // ...then the close notification, respecting link FIFO.
  auto second = net.next_inbox("coordinator", 100);
  REQUIRE(second.has_value());
  CHECK(second->closed);
  CHECK(second->peer == "t0");

  // Messages to the dead node vanish and its handler never runs.
  net.send("coordinator", "t0", Kind::execute, json::object());
  net.advance_until(net.now() + 50);
  CHECK_FALSE(tester_heard);
  CHECK(net.trace().back().dropped);
}

TEST_CASE("simulator: scheduled callbacks fire in time order") {
  SimNet net(SimConfig{.latency_ms = 1});
  net.add_inbox_node("sink");
  std::vector<int> order;
  net.schedule_at(30, [&] { order.push_back(3); });
  net.schedule_at(10, [&] { order.push_back(1); });
  net.schedule_at(20, [&] { order.push_back(2); });
  net.schedule_at(10, [&] { order.push_back(11); });  // same time: enqueue order
  net.advance_until(25);
  CHECK(order == std::vector<int>{1, 11, 2});
  net.advance_until(35);
  CHECK(order == std::vector<int>{1, 11, 2, 3});
  CHECK(net.now() == 35);
}

TEST_CASE("sim session adapts the inbox to the session interface") {
  SimNet net(SimConfig{.latency_ms = 2});
  SimSession session(net, "coordinator");
  CHECK(session.self() == "coordinator");
  CHECK(session.peer_open("t0"));  // never heard from = open

  net.add_node("t0", [&](const Message& m) {
    if (m.kind == Kind::pong) return;
  });
  session.send("t0", Kind::pong, json::object());

  net.send("t0", "coordinator", Kind::ping, json::object());
  Event ev = session.wait(net.now() + 100);
  REQUIRE(ev.type == Event::Type::message);
  CHECK(ev.msg.kind == Kind::ping);

  Event deadline = session.wait(net.now() + 10);
  CHECK(deadline.type == Event::Type::deadline);

  net.crash("t0");
  Event closed = session.wait(net.now() + 100);
  REQUIRE(closed.type == Event::Type::peer_closed);
  CHECK(closed.peer == "t0");
  CHECK_FALSE(session.peer_open("t0"));
}
