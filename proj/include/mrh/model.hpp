#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrh/util.hpp"

// The test-case model: who participates (testers and their roles), what runs
// (actions holding instruction lists), and when (hierarchy levels: level k
// finishes before level k+1 starts; actions within a level run in parallel).

namespace mrh::model {

struct TesterId {
  int index = -1;
  std::string str() const { return "t" + std::to_string(index); }
  static std::optional<TesterId> parse(const std::string& s);
  auto operator<=>(const TesterId&) const = default;
};

enum class Role { master_controller, worker_controller };
std::string role_name(Role r);
std::optional<Role> role_from_name(const std::string& s);

enum class Opcode {
  start_master,
  start_workers,
  send_job,
  drop_worker,
  assert_output,
  stop_workers,
  stop_master,
  sleep_for,
};
std::string opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(const std::string& s);
// Opcodes only a master-controller / only a worker-controller may run.
bool master_only(Opcode op);
bool worker_only(Opcode op);

struct Instruction {
  Opcode op;
  json args = json::object();
};

struct Action {
  std::string id;
  int level = 0;
  std::vector<TesterId> targets;
  std::vector<Instruction> instructions;
  std::int64_t timeout_ms = 0;
};

struct TesterDecl {
  TesterId id;
  Role role;
};

struct TestCase {
  std::string name;
  std::vector<TesterDecl> testers;
  std::vector<Action> actions;
};

// Semantic checks: unique ids, declared targets, contiguous levels from 0,
// positive timeouts, role/opcode compatibility, at most one master
// controller, and buildable SEND_JOB descriptors. Empty result = valid.
std::vector<std::string> validate(const TestCase& tc);

struct Schedule {
  // Ascending level order; within a level, declaration order.
  std::vector<std::pair<int, std::vector<Action>>> levels;
  std::size_t total_pairs = 0;  // sum of |targets| over all actions
};
// Throws std::invalid_argument (joined validate() messages) when invalid.
Schedule build_schedule(const TestCase& tc);

// Strict parse: unknown keys anywhere are errors, as are missing fields and
// malformed opcode arguments. All problems are reported, not just the first.
struct ParseResult {
  std::optional<TestCase> test_case;
  std::vector<std::string> errors;
};
ParseResult parse_test_case(const json& doc);
ParseResult load_test_case_file(const std::string& path);

json to_json(const TestCase& tc);

}  // namespace mrh::model
