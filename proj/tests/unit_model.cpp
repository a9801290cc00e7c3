#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <stdexcept>

#include "doctest.h"
#include "mrh/model.hpp"

using namespace mrh::model;
using mrh::json;

namespace {

// The canonical worker-drop scenario: six testers, seven actions, six levels,
// a worker kill racing the job at level 2.
json scenario_doc() {
  return json::parse(R"({
    "name": "pi-under-worker-drop",
    "testers": [
      {"id": "t0", "role": "master"},
      {"id": "t1", "role": "worker"},
      {"id": "t2", "role": "worker"},
      {"id": "t3", "role": "worker"},
      {"id": "t4", "role": "worker"},
      {"id": "t5", "role": "worker"}
    ],
    "actions": [
      {"id": "a0", "level": 0, "targets": ["t0"],
       "instructions": [{"op": "START_MASTER"}], "timeout_ms": 100},
      {"id": "a1", "level": 1, "targets": ["t1", "t2", "t3", "t4", "t5"],
       "instructions": [{"op": "START_WORKERS", "args": {"count": 1}}],
       "timeout_ms": 1000},
      {"id": "a2", "level": 2, "targets": ["t0"],
       "instructions": [{"op": "SEND_JOB", "args": {"job": "pi",
         "args": {"maps": 10, "points_per_map": 100000, "seed": 21}}}],
       "timeout_ms": 1000000},
      {"id": "a3", "level": 2, "targets": ["t2"],
       "instructions": [{"op": "DROP_WORKER"}], "timeout_ms": 1000},
      {"id": "a4", "level": 3, "targets": ["t0"],
       "instructions": [{"op": "ASSERT_OUTPUT",
         "args": {"expected": 3.1416, "mode": "round4"}}],
       "timeout_ms": 10000},
      {"id": "a5", "level": 4, "targets": ["t1", "t3", "t4", "t5"],
       "instructions": [{"op": "STOP_WORKERS"}], "timeout_ms": 1000},
      {"id": "a6", "level": 5, "targets": ["t0"],
       "instructions": [{"op": "STOP_MASTER"}], "timeout_ms": 1000}
    ]
  })");
}

TestCase parsed_scenario() {
  auto r = parse_test_case(scenario_doc());
  REQUIRE(r.errors.empty());
  REQUIRE(r.test_case.has_value());
  return *r.test_case;
}

}  // namespace

TEST_CASE("tester ids parse strictly") {
  REQUIRE(TesterId::parse("t0").has_value());
  CHECK(TesterId::parse("t0")->index == 0);
  CHECK(TesterId::parse("t12")->index == 12);
  CHECK(TesterId::parse("t12")->str() == "t12");
  CHECK_FALSE(TesterId::parse("").has_value());
  CHECK_FALSE(TesterId::parse("t").has_value());
  CHECK_FALSE(TesterId::parse("x1").has_value());
  CHECK_FALSE(TesterId::parse("t-1").has_value());
  CHECK_FALSE(TesterId::parse("t01").has_value());  // no leading zeros
  CHECK_FALSE(TesterId::parse("t1x").has_value());
  CHECK_FALSE(TesterId::parse("t999999999").has_value());
}

TEST_CASE("roles and opcodes round-trip; role gating is split correctly") {
  CHECK(role_from_name("master") == Role::master_controller);
  CHECK(role_from_name("worker") == Role::worker_controller);
  CHECK_FALSE(role_from_name("admin").has_value());
  CHECK(role_name(Role::master_controller) == "master");

  for (Opcode op : {Opcode::start_master, Opcode::start_workers,
                    Opcode::send_job, Opcode::drop_worker,
                    Opcode::assert_output, Opcode::stop_workers,
                    Opcode::stop_master, Opcode::sleep_for}) {
    auto round = opcode_from_name(opcode_name(op));
    REQUIRE(round.has_value());
    CHECK(*round == op);
    bool claimed_by_both_roles = master_only(op) && worker_only(op);
    CHECK_FALSE(claimed_by_both_roles);
  }
  CHECK(master_only(Opcode::start_master));
  CHECK(master_only(Opcode::send_job));
  CHECK(master_only(Opcode::assert_output));
  CHECK(master_only(Opcode::stop_master));
  CHECK(worker_only(Opcode::start_workers));
  CHECK(worker_only(Opcode::drop_worker));
  CHECK(worker_only(Opcode::stop_workers));
  CHECK_FALSE(master_only(Opcode::sleep_for));
  CHECK_FALSE(worker_only(Opcode::sleep_for));
}

TEST_CASE("the worker-drop scenario parses, validates, and schedules") {
  TestCase tc = parsed_scenario();
  CHECK(tc.name == "pi-under-worker-drop");
  CHECK(tc.testers.size() == 6);
  CHECK(tc.actions.size() == 7);
  CHECK(validate(tc).empty());

  Schedule s = build_schedule(tc);
  REQUIRE(s.levels.size() == 6);
  // Levels ascend 0..5; level 2 holds the job and the concurrent drop.
  for (int l = 0; l < 6; ++l) CHECK(s.levels[l].first == l);
  REQUIRE(s.levels[2].second.size() == 2);
  CHECK(s.levels[2].second[0].id == "a2");
  CHECK(s.levels[2].second[1].id == "a3");
  CHECK(s.levels[2].second[1].targets ==
        std::vector<TesterId>{TesterId{2}});
  // One verdict per dispatched (action, tester) pair: 1+5+1+1+1+4+1.
  CHECK(s.total_pairs == 14);
  // Timeouts carried through verbatim.
  CHECK(s.levels[0].second[0].timeout_ms == 100);
  CHECK(s.levels[2].second[0].timeout_ms == 1000000);
  CHECK(s.levels[3].second[0].timeout_ms == 10000);
}

TEST_CASE("to_json round-trips the parsed case") {
  TestCase tc = parsed_scenario();
  auto r = parse_test_case(to_json(tc));
  REQUIRE(r.errors.empty());
  CHECK(to_json(*r.test_case) == to_json(tc));
}

TEST_CASE("unknown keys are rejected at every nesting depth") {
  auto reject = [](json doc, const std::string& needle) {
    auto r = parse_test_case(doc);
    CHECK_FALSE(r.test_case.has_value());
    bool found = false;
    for (const auto& e : r.errors)
      if (e.find(needle) != std::string::npos) found = true;
    CHECK_MESSAGE(found, "expected an error mentioning: " << needle);
  };

  json top = scenario_doc();
  top["comment"] = "not allowed";
  reject(top, "unknown key 'comment'");

  json tester = scenario_doc();
  tester["testers"][0]["host"] = "somewhere";
  reject(tester, "unknown key 'host'");

  json action = scenario_doc();
  action["actions"][0]["retries"] = 3;
  reject(action, "unknown key 'retries'");

  json instr = scenario_doc();
  instr["actions"][0]["instructions"][0]["extra"] = 1;
  reject(instr, "unknown key 'extra'");

  json args = scenario_doc();
  args["actions"][1]["instructions"][0]["args"]["burst"] = true;
  reject(args, "unknown key 'burst'");
}

TEST_CASE("malformed fields are all reported, not just the first") {
  json doc = scenario_doc();
  doc["actions"][0]["timeout_ms"] = "fast";       // not an integer
  doc["actions"][1]["targets"][0] = "q1";         // not a tester id
  doc["actions"][2]["instructions"][0]["op"] = "LAUNCH";  // unknown op
  auto r = parse_test_case(doc);
  CHECK_FALSE(r.test_case.has_value());
  CHECK(r.errors.size() >= 3);
}

TEST_CASE("per-opcode argument schemas") {
  auto one_action_doc = [](json instruction) {
    return json{{"name", "x"},
                {"testers", json::array({json{{"id", "t0"}, {"role", "master"}},
                                         json{{"id", "t1"}, {"role", "worker"}}})},
                {"actions",
                 json::array({json{{"id", "a0"},
                                   {"level", 0},
                                   {"targets", json::array({"t1"})},
                                   {"instructions", json::array({instruction})},
                                   {"timeout_ms", 1000}}})}};
  };
  auto ok = [&](json ins) {
    auto r = parse_test_case(one_action_doc(std::move(ins)));
    CHECK_MESSAGE(r.errors.empty(), (r.errors.empty() ? "" : r.errors[0]));
  };
  auto bad = [&](json ins) {
    auto r = parse_test_case(one_action_doc(std::move(ins)));
    CHECK_FALSE(r.errors.empty());
  };

  ok({{"op", "START_WORKERS"}});  // count defaults to 1
  ok({{"op", "START_WORKERS"}, {"args", {{"count", 4}}}});
  bad({{"op", "START_WORKERS"}, {"args", {{"count", 0}}}});
  bad({{"op", "START_WORKERS"}, {"args", {{"count", 65}}}});
  bad({{"op", "START_WORKERS"}, {"args", {{"count", "two"}}}});
  bad({{"op", "DROP_WORKER"}, {"args", {{"victim", 1}}}});  // takes none
  ok({{"op", "SLEEP"}, {"args", {{"ms", 0}}}});
  bad({{"op", "SLEEP"}});                       // ms required
  bad({{"op", "SLEEP"}, {"args", {{"ms", -1}}}});
  bad({{"op", "SLEEP"}, {"args", {{"ms", 20000000}}}});
}

TEST_CASE("assert and job instructions validate their payloads") {
  auto master_action_doc = [](json instruction) {
    return json{{"name", "x"},
                {"testers", json::array({json{{"id", "t0"}, {"role", "master"}}})},
                {"actions",
                 json::array({json{{"id", "a0"},
                                   {"level", 0},
                                   {"targets", json::array({"t0"})},
                                   {"instructions", json::array({instruction})},
                                   {"timeout_ms", 1000}}})}};
  };
  auto parse_ok = [&](json ins) {
    auto r = parse_test_case(master_action_doc(std::move(ins)));
    CHECK_MESSAGE(r.errors.empty(), (r.errors.empty() ? "" : r.errors[0]));
    return r.test_case;
  };
  auto parse_bad = [&](json ins) {
    auto r = parse_test_case(master_action_doc(std::move(ins)));
    CHECK_FALSE(r.errors.empty());
  };

  parse_ok({{"op", "ASSERT_OUTPUT"}, {"args", {{"expected", 3.1416}}}});
  parse_ok({{"op", "ASSERT_OUTPUT"},
            {"args", {{"expected", 3.1416}, {"mode", "round4"}}}});
  parse_ok({{"op", "ASSERT_OUTPUT"},
            {"args", {{"expected", 3.14}, {"mode", "abs_tol"}, {"tol", 0.01}}}});
  parse_bad({{"op", "ASSERT_OUTPUT"}, {"args", {{"mode", "round4"}}}});
  parse_bad({{"op", "ASSERT_OUTPUT"},
             {"args", {{"expected", 1}, {"mode", "fuzzy"}}}});
  parse_bad({{"op", "ASSERT_OUTPUT"},
             {"args", {{"expected", 1}, {"mode", "abs_tol"}}}});  // tol missing
  parse_bad({{"op", "ASSERT_OUTPUT"},
             {"args", {{"expected", 1}, {"tol", 0.1}}}});  // tol without abs_tol
  parse_bad({{"op", "SEND_JOB"}, {"args", {{"job", "pi"}}}});  // args missing
  parse_bad({{"op", "SEND_JOB"},
             {"args", {{"job", 7}, {"args", json::object()}}}});

  // Job descriptors must actually build: unknown names and bad parameters
  // are caught by validation, not at dispatch time.
  auto tc = parse_ok({{"op", "SEND_JOB"},
                      {"args", {{"job", "pi"},
                                {"args", {{"maps", 2}, {"points_per_map", 100},
                                          {"seed", 1}}}}}});
  REQUIRE(tc.has_value());
  CHECK(validate(*tc).empty());

  auto bad_tc = parse_ok({{"op", "SEND_JOB"},
                          {"args", {{"job", "sort"}, {"args", json::object()}}}});
  REQUIRE(bad_tc.has_value());
  CHECK_FALSE(validate(*bad_tc).empty());
}

TEST_CASE("semantic validation catches roster and level mistakes") {
  auto count_errors = [](json doc) {
    auto r = parse_test_case(doc);
    if (!r.test_case) return std::size_t{999};
    return validate(*r.test_case).size();
  };

  CHECK(count_errors(scenario_doc()) == 0);

  json dup = scenario_doc();
  dup["actions"][1]["id"] = "a0";
  CHECK(count_errors(dup) >= 1);

  json strange = scenario_doc();
  strange["actions"][2]["targets"] = json::array({"t9"});
  CHECK(count_errors(strange) >= 1);

  json gap = scenario_doc();
  gap["actions"][6]["level"] = 7;  // leaves level 5 empty
  CHECK(count_errors(gap) >= 1);

  json twice = scenario_doc();
  twice["actions"][1]["targets"] = json::array({"t1", "t1"});
  CHECK(count_errors(twice) >= 1);

  json wrong_role = scenario_doc();
  wrong_role["actions"][0]["targets"] = json::array({"t1"});  // worker starts master
  CHECK(count_errors(wrong_role) >= 1);

  json two_masters = scenario_doc();
  two_masters["testers"][1]["role"] = "master";
  CHECK(count_errors(two_masters) >= 1);

  // Structural mistakes a hand-built case could make.
  TestCase empty;
  empty.name = "empty";
  CHECK_FALSE(validate(empty).empty());
  CHECK_THROWS_AS(build_schedule(empty), std::invalid_argument);

  TestCase no_timeout = parsed_scenario();
  no_timeout.actions[0].timeout_ms = 0;
  CHECK_FALSE(validate(no_timeout).empty());

  TestCase no_targets = parsed_scenario();
  no_targets.actions[0].targets.clear();
  CHECK_FALSE(validate(no_targets).empty());

  TestCase no_instructions = parsed_scenario();
  no_instructions.actions[0].instructions.clear();
  CHECK_FALSE(validate(no_instructions).empty());
}

TEST_CASE("load_test_case_file reports missing files and bad JSON") {
  auto missing = load_test_case_file("/nonexistent/path.json");
  CHECK_FALSE(missing.test_case.has_value());
  REQUIRE_FALSE(missing.errors.empty());
  CHECK(missing.errors[0].find("cannot open") != std::string::npos);
}
