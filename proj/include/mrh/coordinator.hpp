#pragma once

#include <set>
#include <stdexcept>

#include "mrh/model.hpp"
#include "mrh/transport.hpp"

// The coordinator runs a test case against remote testers: register everyone,
// then walk the hierarchy level by level — every action in a level is
// dispatched at the same time and awaited in parallel; the next level starts
// only when the current one is fully resolved. Every dispatched (action,
// tester) pair resolves to exactly one local verdict, timeouts and vanished
// testers included, so teardown levels always run.

namespace mrh::coord {

enum class Outcome { pass, fail, inconclusive };
std::string outcome_name(Outcome o);
std::optional<Outcome> outcome_from_name(const std::string& s);

struct LocalVerdict {
  std::string action_id;
  model::TesterId tester;
  Outcome outcome = Outcome::inconclusive;
  std::string detail;
  std::int64_t elapsed_ms = 0;
  std::optional<json> observed;  // job output the tester saw, when relevant
};

// Payload of a VERDICT message (tester identity travels in the envelope).
json verdict_payload(const LocalVerdict& v);
std::optional<LocalVerdict> verdict_from_payload(const json& payload,
                                                 model::TesterId sender,
                                                 std::string* err);

// Append-only; at most one entry per (action, tester) — later duplicates
// (late or repeated verdicts) are ignored.
class VerdictLog {
 public:
  bool append(LocalVerdict v);
  bool has(const std::string& action_id, model::TesterId t) const;
  const std::vector<LocalVerdict>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<LocalVerdict> entries_;
  std::set<std::pair<std::string, int>> seen_;
};

// fail beats inconclusive beats pass; an empty complete log passes.
// Throws std::invalid_argument when |log| != expected_pairs: a verdict for
// every dispatched pair is a precondition, not a best effort.
Outcome oracle(const VerdictLog& log, std::size_t expected_pairs);

struct GlobalVerdict {
  Outcome outcome = Outcome::inconclusive;
  VerdictLog log;
  std::int64_t wall_ms = 0;
};

struct RunOptions {
  std::int64_t registration_window_ms = 10000;
};

struct RegistrationTimeout : std::runtime_error {
  explicit RegistrationTimeout(std::vector<model::TesterId> who);
  std::vector<model::TesterId> missing;
};

// Handshake with every declared tester (PING -> REGISTER -> REGISTER_ACK).
// Throws RegistrationTimeout naming the absentees.
void register_testers(const model::TestCase& tc, transport::Session& session,
                      const RunOptions& opts);

// One level: dispatch everything, then multiplex replies/timeouts/closures
// until each pair has a verdict. Appends to `log`.
void dispatch_level(const std::vector<model::Action>& actions,
                    transport::Session& session, VerdictLog& log);

// The whole algorithm. Throws std::invalid_argument (invalid test case) or
// RegistrationTimeout; anything dispatched always yields a complete log.
GlobalVerdict run_test(const model::TestCase& tc, transport::Session& session,
                       const RunOptions& opts = {});

}  // namespace mrh::coord
