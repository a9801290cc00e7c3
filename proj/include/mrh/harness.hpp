#pragma once

#include "mrh/coordinator.hpp"
#include "mrh/model.hpp"
#include "mrh/mutation.hpp"

// Orchestration: bring up a coordinator endpoint, spawn (or await) the tester
// processes, run the test case, and tear everything down. Two backends:
//   - processes: real TCP, one OS process per tester
//   - sim: the deterministic message layer; testers execute inline (real
//     engine subprocesses, simulated transport), so same-level actions
//     serialize and coordinator timeouts follow the logical clock
// Either way the caller gets a RunOutcome mapping onto the exit-code policy:
// 0 pass, 1 fail, 2 inconclusive, 3 harness error.

namespace mrh::harness {

struct HarnessOptions {
  int coordinator_port = 7717;  // 0 = ephemeral
  int mr_port = 7800;           // 0 = pick a free port per run
  std::string mr_output_file;
  std::int64_t registration_window_ms = 10000;
  std::int64_t heartbeat_ms = 500;
  int miss_k = 3;
  std::int64_t stall_limit_ms = 30000;
  std::int64_t stop_grace_ms = 1000;
  bool spawn_testers = true;  // false: external testers dial in (--hosts)
};

struct RunOutcome {
  bool harness_error = false;
  std::string error;  // set iff harness_error
  std::optional<coord::GlobalVerdict> verdict;
  std::optional<json> observed_output;  // last job output seen in the log
};

RunOutcome run_with_processes(const model::TestCase& tc,
                              const HarnessOptions& opts);
RunOutcome run_in_sim(const model::TestCase& tc, const HarnessOptions& opts);

// 0 pass / 1 fail / 2 inconclusive / 3 harness error.
int exit_code_for(const RunOutcome& r);

// Descriptor of the first SEND_JOB instruction ({"name","args"[,"mutation"]});
// nullopt when the case submits nothing.
std::optional<json> find_job_descriptor(const model::TestCase& tc);

// Copy of `tc` with the first SEND_JOB instruction's mutation replaced
// (nullopt clears it). Throws std::invalid_argument when no SEND_JOB exists.
model::TestCase with_mutation(const model::TestCase& tc,
                              const std::optional<jobs::MutationDesc>& m);

// Adapter for mutation::run_analysis: every call is one full harnessed run of
// `tc` with the mutation swapped in. Verdicts map straight through; the
// observed output (NULL included) feeds classification.
mutation::Runner process_runner(const model::TestCase& tc,
                                const HarnessOptions& opts, bool sim = false);

// Run report: name, global verdict, per-(action, tester) table with
// elapsed_ms, wall clock, and a config echo.
json report_to_json(const model::TestCase& tc, const RunOutcome& r,
                    const json& config_echo);
std::string render_report(const model::TestCase& tc, const RunOutcome& r,
                          const json& config_echo);

}  // namespace mrh::harness
