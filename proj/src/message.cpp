#include "mrh/message.hpp"

#include <stdexcept>

namespace mrh::transport {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::reg: return "REGISTER";
    case Kind::reg_ack: return "REGISTER_ACK";
    case Kind::execute: return "EXECUTE";
    case Kind::verdict: return "VERDICT";
    case Kind::ping: return "PING";
    case Kind::pong: return "PONG";
    case Kind::shutdown: return "SHUTDOWN";
  }
  return "?";
}

std::optional<Kind> kind_from_name(const std::string& s) {
  if (s == "REGISTER") return Kind::reg;
  if (s == "REGISTER_ACK") return Kind::reg_ack;
  if (s == "EXECUTE") return Kind::execute;
  if (s == "VERDICT") return Kind::verdict;
  if (s == "PING") return Kind::ping;
  if (s == "PONG") return Kind::pong;
  if (s == "SHUTDOWN") return Kind::shutdown;
  return std::nullopt;
}

json to_json(const Message& m) {
  return {{"kind", kind_name(m.kind)},
          {"sender", m.sender},
          {"recipient", m.recipient},
          {"seq", m.seq},
          {"payload", m.payload}};
}

std::optional<Message> message_from_json(const json& j, std::string* err) {
  auto fail = [&](const std::string& what) -> std::optional<Message> {
    if (err) *err = what;
    return std::nullopt;
  };
  if (!j.is_object()) return fail("message is not an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "kind" && k != "sender" && k != "recipient" && k != "seq" &&
        k != "payload")
      return fail("unknown message field '" + k + "'");
  }
  if (!j.contains("kind") || !j["kind"].is_string())
    return fail("missing string 'kind'");
  auto kind = kind_from_name(j["kind"].get<std::string>());
  if (!kind) return fail("unknown kind '" + j["kind"].get<std::string>() + "'");
  if (!j.contains("sender") || !j["sender"].is_string())
    return fail("missing string 'sender'");
  if (!j.contains("recipient") || !j["recipient"].is_string())
    return fail("missing string 'recipient'");
  if (!j.contains("seq") ||
      !(j["seq"].is_number_unsigned() || j["seq"].is_number_integer()) ||
      (j["seq"].is_number_integer() && j["seq"].get<std::int64_t>() < 0))
    return fail("missing non-negative integer 'seq'");
  if (!j.contains("payload") || !j["payload"].is_object())
    return fail("missing object 'payload'");
  Message m;
  m.kind = *kind;
  m.sender = j["sender"].get<std::string>();
  m.recipient = j["recipient"].get<std::string>();
  m.seq = j["seq"].get<std::uint64_t>();
  m.payload = j["payload"];
  return m;
}

std::string encode_frame(const Message& m) {
  std::string body = canon(to_json(m));
  if (body.size() > kMaxFrameBytes)
    throw std::runtime_error("frame body too large");
  auto len = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((len >> 24) & 0xff));
  out.push_back(static_cast<char>((len >> 16) & 0xff));
  out.push_back(static_cast<char>((len >> 8) & 0xff));
  out.push_back(static_cast<char>(len & 0xff));
  out += body;
  return out;
}

void FrameDecoder::feed(std::string_view bytes) { buf_.append(bytes); }

std::optional<Message> FrameDecoder::next() {
  if (buf_.size() < 4) return std::nullopt;
  auto b = [&](size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[i]));
  };
  std::uint32_t len = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (len > kMaxFrameBytes) throw std::runtime_error("frame length too large");
  if (buf_.size() < 4 + static_cast<size_t>(len)) return std::nullopt;
  std::string body = buf_.substr(4, len);
  buf_.erase(0, 4 + static_cast<size_t>(len));
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("frame is not valid JSON: ") + e.what());
  }
  std::string err;
  auto m = message_from_json(doc, &err);
  if (!m) throw std::runtime_error("bad message: " + err);
  return m;
}

}  // namespace mrh::transport
