#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mrh/util.hpp"

// Control-plane wire format, shared by the TCP backend and the simulator:
// a 4-byte big-endian length prefix followed by that many bytes of UTF-8
// JSON holding exactly {kind, sender, recipient, seq, payload}.

namespace mrh::transport {

enum class Kind {
  reg,       // REGISTER
  reg_ack,   // REGISTER_ACK
  execute,   // EXECUTE
  verdict,   // VERDICT
  ping,      // PING
  pong,      // PONG
  shutdown,  // SHUTDOWN
};

std::string kind_name(Kind k);
std::optional<Kind> kind_from_name(const std::string& s);

struct Message {
  Kind kind{};
  std::string sender;
  std::string recipient;
  std::uint64_t seq = 0;  // strictly increasing per (sender, recipient)
  json payload = json::object();
};

json to_json(const Message& m);
// Rejects unknown kinds, missing or extra fields, wrong types.
std::optional<Message> message_from_json(const json& j, std::string* err);

// Full frame bytes: length prefix + canonical JSON body.
std::string encode_frame(const Message& m);

// Largest frame body accepted by decoders (guards against garbage prefixes).
inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;

// Incremental decoder: feed arbitrary byte chunks, pull complete messages.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  // nullopt = need more bytes. Throws std::runtime_error on a malformed
  // frame (oversized length, bad JSON, bad message shape).
  std::optional<Message> next();

 private:
  std::string buf_;
};

}  // namespace mrh::transport
