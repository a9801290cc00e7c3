#include "mrh/coordinator.hpp"

#include <algorithm>
#include <map>

namespace mrh::coord {

using transport::Event;
using transport::Kind;

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::pass: return "pass";
    case Outcome::fail: return "fail";
    case Outcome::inconclusive: return "inconclusive";
  }
  return "?";
}

std::optional<Outcome> outcome_from_name(const std::string& s) {
  if (s == "pass") return Outcome::pass;
  if (s == "fail") return Outcome::fail;
  if (s == "inconclusive") return Outcome::inconclusive;
  return std::nullopt;
}

json verdict_payload(const LocalVerdict& v) {
  json j = {{"action", v.action_id},
            {"outcome", outcome_name(v.outcome)},
            {"detail", v.detail},
            {"elapsed_ms", v.elapsed_ms}};
  if (v.observed) j["observed"] = *v.observed;
  return j;
}

std::optional<LocalVerdict> verdict_from_payload(const json& payload,
                                                 model::TesterId sender,
                                                 std::string* err) {
  auto fail = [&](const std::string& m) -> std::optional<LocalVerdict> {
    if (err) *err = m;
    return std::nullopt;
  };
  if (!payload.is_object()) return fail("verdict payload is not an object");
  if (!payload.contains("action") || !payload["action"].is_string())
    return fail("verdict missing string 'action'");
  if (!payload.contains("outcome") || !payload["outcome"].is_string())
    return fail("verdict missing string 'outcome'");
  auto outcome = outcome_from_name(payload["outcome"].get<std::string>());
  if (!outcome) return fail("unknown outcome");
  LocalVerdict v;
  v.action_id = payload["action"].get<std::string>();
  v.tester = sender;
  v.outcome = *outcome;
  if (payload.contains("detail") && payload["detail"].is_string())
    v.detail = payload["detail"].get<std::string>();
  if (payload.contains("elapsed_ms") && payload["elapsed_ms"].is_number())
    v.elapsed_ms = payload["elapsed_ms"].get<std::int64_t>();
  if (payload.contains("observed")) v.observed = payload["observed"];
  return v;
}

bool VerdictLog::append(LocalVerdict v) {
  if (!seen_.insert({v.action_id, v.tester.index}).second) return false;
  entries_.push_back(std::move(v));
  return true;
}

bool VerdictLog::has(const std::string& action_id, model::TesterId t) const {
  return seen_.count({action_id, t.index}) > 0;
}

Outcome oracle(const VerdictLog& log, std::size_t expected_pairs) {
  if (log.size() != expected_pairs)
    throw std::invalid_argument(
        "verdict log incomplete: " + std::to_string(log.size()) + " of " +
        std::to_string(expected_pairs) + " pairs");
  bool any_inconclusive = false;
  for (const auto& v : log.entries()) {
    if (v.outcome == Outcome::fail) return Outcome::fail;
    if (v.outcome == Outcome::inconclusive) any_inconclusive = true;
  }
  return any_inconclusive ? Outcome::inconclusive : Outcome::pass;
}

RegistrationTimeout::RegistrationTimeout(std::vector<model::TesterId> who)
    : std::runtime_error([&who] {
        std::string m = "testers never registered:";
        std::sort(who.begin(), who.end());
        for (const auto& t : who) m += " " + t.str();
        return m;
      }()),
      missing(std::move(who)) {
  std::sort(missing.begin(), missing.end());
}

void register_testers(const model::TestCase& tc, transport::Session& session,
                      const RunOptions& opts) {
  std::set<model::TesterId> pending;
  for (const auto& t : tc.testers) pending.insert(t.id);

  // Per-tester action digests, sent with REGISTER.
  std::map<model::TesterId, json> digests;
  for (const auto& t : tc.testers) digests[t.id] = json::array();
  for (const auto& a : tc.actions)
    for (const auto& t : a.targets)
      if (digests.count(t))
        digests[t].push_back({{"id", a.id},
                              {"level", a.level},
                              {"timeout_ms", a.timeout_ms}});

  std::set<model::TesterId> invited;
  std::int64_t deadline = session.now_ms() + opts.registration_window_ms;
  while (!pending.empty()) {
    Event ev = session.wait(deadline);
    switch (ev.type) {
      case Event::Type::message: {
        auto id = model::TesterId::parse(ev.msg.sender);
        if (!id) break;
        if (ev.msg.kind == Kind::ping) {
          session.send(ev.msg.sender, Kind::pong, json::object());
          if (pending.count(*id) && invited.insert(*id).second)
            session.send(ev.msg.sender, Kind::reg,
                         {{"test", tc.name}, {"actions", digests[*id]}});
        } else if (ev.msg.kind == Kind::reg_ack) {
          pending.erase(*id);
        }
        break;
      }
      case Event::Type::peer_closed:
        break;  // still pending; named at the deadline
      case Event::Type::deadline:
        throw RegistrationTimeout(
            std::vector<model::TesterId>(pending.begin(), pending.end()));
    }
  }
}

namespace {

json instructions_json(const model::Action& a) {
  json out = json::array();
  for (const auto& ins : a.instructions)
    out.push_back({{"op", model::opcode_name(ins.op)}, {"args", ins.args}});
  return out;
}

}  // namespace

void dispatch_level(const std::vector<model::Action>& actions,
                    transport::Session& session, VerdictLog& log) {
  struct Pending {
    const model::Action* action;
    model::TesterId tester;
    std::int64_t deadline;
  };

  std::int64_t level_start = session.now_ms();
  std::vector<Pending> pending;
  for (const auto& a : actions) {
    json payload = {{"action", a.id},
                    {"level", a.level},
                    {"timeout_ms", a.timeout_ms},
                    {"instructions", instructions_json(a)}};
    for (const auto& t : a.targets) {
      session.send(t.str(), Kind::execute, payload);
      pending.push_back({&a, t, level_start + a.timeout_ms});
    }
  }

  auto resolve = [&](std::size_t idx, Outcome o, std::string detail) {
    const Pending& p = pending[idx];
    LocalVerdict v;
    v.action_id = p.action->id;
    v.tester = p.tester;
    v.outcome = o;
    v.detail = std::move(detail);
    v.elapsed_ms = session.now_ms() - level_start;
    log.append(std::move(v));
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(idx));
  };

  while (!pending.empty()) {
    // Testers that vanished (now or in an earlier level) can never reply.
    for (std::size_t i = pending.size(); i-- > 0;)
      if (!session.peer_open(pending[i].tester.str()))
        resolve(i, Outcome::inconclusive, "tester unreachable");
    if (pending.empty()) break;

    std::int64_t next_deadline = pending[0].deadline;
    for (const auto& p : pending) next_deadline = std::min(next_deadline, p.deadline);

    Event ev = session.wait(next_deadline);
    if (ev.type == Event::Type::message && ev.msg.kind == Kind::verdict) {
      auto id = model::TesterId::parse(ev.msg.sender);
      if (!id) continue;
      std::string err;
      auto v = verdict_from_payload(ev.msg.payload, *id, &err);
      if (!v) continue;  // malformed: the pair will time out
      for (std::size_t i = 0; i < pending.size(); ++i) {
        if (pending[i].action->id == v->action_id &&
            pending[i].tester == *id) {
          log.append(*v);
          pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(i));
          break;
        }
      }
    } else if (ev.type == Event::Type::message && ev.msg.kind == Kind::ping) {
      session.send(ev.msg.sender, Kind::pong, json::object());
    } else if (ev.type == Event::Type::deadline) {
      std::int64_t now = session.now_ms();
      for (std::size_t i = pending.size(); i-- > 0;)
        if (pending[i].deadline <= now)
          resolve(i, Outcome::inconclusive,
                  "timeout after " +
                      std::to_string(pending[i].action->timeout_ms) + "ms");
    }
    // peer_closed events need no direct handling: the sweep above reads
    // session.peer_open, which the event just flipped.
  }
}

GlobalVerdict run_test(const model::TestCase& tc, transport::Session& session,
                       const RunOptions& opts) {
  std::int64_t start = session.now_ms();
  model::Schedule schedule = model::build_schedule(tc);
  register_testers(tc, session, opts);

  GlobalVerdict gv;
  for (const auto& [level, actions] : schedule.levels)
    dispatch_level(actions, session, gv.log);

  gv.outcome = oracle(gv.log, schedule.total_pairs);
  gv.wall_ms = session.now_ms() - start;
  return gv;
}

}  // namespace mrh::coord
