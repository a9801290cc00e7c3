#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mrh/coordinator.hpp"
#include "mrh/model.hpp"
#include "mrh/procutil.hpp"

// A tester is the harness's hands on one node: it registers with the
// coordinator, executes dispatched instruction lists against the engine
// processes it manages, and reports one local verdict per action. Roles gate
// what it may touch — a master-controller runs the engine master and speaks
// to it (SEND_JOB, ASSERT_OUTPUT); a worker-controller owns worker processes
// (start, drop, stop).

namespace mrh::tester {

struct AgentConfig {
  std::string coordinator_host = "127.0.0.1";
  int coordinator_port = 7717;
  model::TesterId id;
  model::Role role = model::Role::worker_controller;

  // Engine endpoints/knobs the instructions act on.
  std::string mr_host = "127.0.0.1";
  int mr_port = 7800;
  std::string mr_output_file;
  std::int64_t mr_heartbeat_ms = 500;
  int mr_miss_k = 3;
  std::int64_t mr_stall_ms = 30000;

  std::int64_t stop_grace_ms = 1000;  // SIGTERM -> SIGKILL window
  std::int64_t connect_timeout_ms = 10000;
};

// Everything a tester owns between instructions.
struct TesterState {
  AgentConfig cfg;
  std::optional<proc::Child> master;
  std::vector<proc::Child> workers;
  std::optional<json> last_output;  // latest job output; null = NULL result
};

struct ExecResult {
  coord::Outcome outcome = coord::Outcome::inconclusive;
  std::string detail;
  std::optional<json> observed;
};

// Run one action's instructions in order against `st`. Stops at the first
// non-pass. `deadline_ms` is absolute (net::steady_ms clock); crossing it
// yields inconclusive. Instructions come in EXECUTE-payload form:
// [{"op": ..., "args": {...}}, ...].
ExecResult execute_action(const json& instructions, std::int64_t deadline_ms,
                          TesterState& st);

// Kill everything the tester still manages (used at shutdown).
void teardown(TesterState& st);

// Process entry: connect, register, serve EXECUTEs until SHUTDOWN.
// Returns the process exit code (0 orderly, 1 lost coordinator, 3 config).
int run_agent(const AgentConfig& cfg);

}  // namespace mrh::tester
