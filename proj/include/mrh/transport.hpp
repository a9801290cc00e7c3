#pragma once

#include "mrh/message.hpp"

namespace mrh::transport {

struct Event {
  enum class Type { message, peer_closed, deadline };
  Type type = Type::deadline;
  Message msg;       // set when type == message
  std::string peer;  // set when type == peer_closed
};

// The coordinator's endpoint. Both backends satisfy it: real TCP sockets,
// and the deterministic single-threaded simulator used for protocol tests.
class Session {
 public:
  virtual ~Session() = default;
  virtual std::string self() const = 0;
  virtual std::int64_t now_ms() = 0;
  // Fire-and-forget. The session stamps seq per (self, recipient); sends to
  // unknown or departed peers vanish (the caller learns via peer_open).
  virtual void send(const std::string& to, Kind kind, json payload) = 0;
  // Block until something happens or now reaches `deadline_ms` (absolute).
  virtual Event wait(std::int64_t deadline_ms) = 0;
  // False once the peer has disconnected or crashed. Peers never heard from
  // are reported open (indistinguishable from not-yet-connected).
  virtual bool peer_open(const std::string& peer) const = 0;
};

}  // namespace mrh::transport
