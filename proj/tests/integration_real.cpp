#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <string>

#include "doctest.h"
#include "mrh/harness.hpp"

using namespace mrh;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

// Test binaries re-exec the CLI for tester/engine processes; make sure the
// override is in place even when run outside ctest.
const bool kEnvReady = [] {
  if (!std::getenv("MRHARNESS_BIN") && std::getenv("MRH_BIN"))
    ::setenv("MRHARNESS_BIN", std::getenv("MRH_BIN"), 0);
  return true;
}();

std::string cli() { return env_or("MRH_BIN", "build/mrharness"); }
std::string fixture(const std::string& name) {
  return env_or("MRH_FIXTURES", "testcases") + "/" + name;
}

int run_cli(const std::string& args, std::string* out) {
  std::string cmd = cli() + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string collected;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0)
    collected.append(buf, n);
  int status = ::pclose(pipe);
  if (out) *out = std::move(collected);
  if (status < 0 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

model::TestCase load_fixture(const std::string& name) {
  auto parsed = model::load_test_case_file(fixture(name));
  REQUIRE(parsed.test_case.has_value());
  return *parsed.test_case;
}

harness::HarnessOptions ephemeral() {
  harness::HarnessOptions o;
  o.coordinator_port = 0;
  o.mr_port = 0;
  return o;
}

}  // namespace

TEST_CASE("the cli runs the base pi case to a passing verdict") {
  std::string out;
  int rc = run_cli("run " + fixture("replay_pi.json") + " --port 0 --mr-port 0",
                   &out);
  CHECK(rc == 0);
  CHECK(out.find("global verdict: pass") != std::string::npos);
  CHECK(out.find("observed output: 3.1416") != std::string::npos);
}

TEST_CASE("the cli fails a value-changing mutant and a null mutant") {
  std::string out;
  int rc = run_cli(
      "run " + fixture("replay_value.json") + " --port 0 --mr-port 0", &out);
  CHECK(rc == 1);
  CHECK(out.find("global verdict: fail") != std::string::npos);

  rc = run_cli("run " + fixture("replay_null.json") + " --port 0 --mr-port 0",
               &out);
  CHECK(rc == 1);
  CHECK(out.find("global verdict: fail") != std::string::npos);
  CHECK(out.find("observed output: null") != std::string::npos);
}

TEST_CASE("the cli passes an output-equivalent mutant") {
  std::string out;
  int rc = run_cli(
      "run " + fixture("replay_equiv.json") + " --port 0 --mr-port 0", &out);
  CHECK(rc == 0);
  CHECK(out.find("global verdict: pass") != std::string::npos);
}

TEST_CASE("a missing test-case file is a harness error") {
  std::string out;
  int rc = run_cli("run /nonexistent/case.json", &out);
  CHECK(rc == 3);
}

TEST_CASE("--json emits a parseable report") {
  std::string out;
  int rc = run_cli("run " + fixture("replay_pi.json") +
                       " --port 0 --mr-port 0 --json",
                   &out);
  REQUIRE(rc == 0);
  json rep = json::parse(out, nullptr, false);
  REQUIRE_FALSE(rep.is_discarded());
  CHECK(rep["test"] == json("pi-replay-base"));
  CHECK(rep["verdict"] == json("pass"));
  CHECK(rep["observed_output"] == json(3.1416));
  REQUIRE(rep["verdicts"].is_array());
  CHECK(rep["verdicts"].size() == 8);  // 4 single + 2 double-target actions
  for (const auto& row : rep["verdicts"])
    CHECK(row["outcome"] == json("pass"));
  CHECK(rep["wall_ms"].is_number());
  CHECK(rep.contains("config"));
}

TEST_CASE("--expect rewrites the assertion and flips the verdict") {
  std::string out;
  int rc = run_cli("run " + fixture("replay_pi.json") +
                       " --port 0 --mr-port 0 --expect 9.9",
                   &out);
  CHECK(rc == 1);
  CHECK(out.find("global verdict: fail") != std::string::npos);
}

TEST_CASE("the simulated backend reaches the same verdict") {
  std::string out;
  int rc = run_cli("run " + fixture("replay_pi.json") +
                       " --backend sim --mr-port 0",
                   &out);
  CHECK(rc == 0);
  CHECK(out.find("global verdict: pass") != std::string::npos);
}

TEST_CASE("run_with_processes drives real testers over TCP") {
  model::TestCase tc = load_fixture("replay_pi.json");
  harness::RunOutcome r = harness::run_with_processes(tc, ephemeral());

  REQUIRE_FALSE(r.harness_error);
  REQUIRE(r.verdict.has_value());
  CHECK(r.verdict->outcome == coord::Outcome::pass);
  CHECK(r.verdict->log.size() == 8);
  REQUIRE(r.observed_output.has_value());
  CHECK(*r.observed_output == json(3.1416));
  CHECK(harness::exit_code_for(r) == 0);
}

TEST_CASE("run_in_sim reaches the same verdict through the message layer") {
  model::TestCase tc = load_fixture("replay_pi.json");
  harness::RunOutcome r = harness::run_in_sim(tc, ephemeral());

  REQUIRE_FALSE(r.harness_error);
  REQUIRE(r.verdict.has_value());
  CHECK(r.verdict->outcome == coord::Outcome::pass);
  REQUIRE(r.observed_output.has_value());
  CHECK(*r.observed_output == json(3.1416));
}

TEST_CASE("job descriptors are findable and swappable") {
  model::TestCase tc = load_fixture("replay_pi.json");

  auto desc = harness::find_job_descriptor(tc);
  REQUIRE(desc.has_value());
  CHECK((*desc)["name"] == json("pi"));
  CHECK_FALSE(desc->contains("mutation"));

  jobs::MutationDesc m;
  m.tree = "finalize";
  m.path = {0};
  m.op = jobs::BinOp::mul;
  model::TestCase mutated = harness::with_mutation(tc, m);
  auto desc2 = harness::find_job_descriptor(mutated);
  REQUIRE(desc2.has_value());
  CHECK(desc2->contains("mutation"));
  CHECK((*desc2)["mutation"]["op"] == json("mul"));

  model::TestCase cleared = harness::with_mutation(mutated, std::nullopt);
  auto desc3 = harness::find_job_descriptor(cleared);
  REQUIRE(desc3.has_value());
  CHECK_FALSE(desc3->contains("mutation"));

  model::TestCase no_job = tc;
  no_job.actions.erase(no_job.actions.begin() + 2);  // drop the SEND_JOB level
  CHECK_THROWS_AS(harness::with_mutation(no_job, m), std::invalid_argument);
}

TEST_CASE("exit codes follow the verdict policy") {
  harness::RunOutcome err;
  err.harness_error = true;
  err.error = "boom";
  CHECK(harness::exit_code_for(err) == 3);

  harness::RunOutcome pass;
  pass.verdict = coord::GlobalVerdict{};
  pass.verdict->outcome = coord::Outcome::pass;
  CHECK(harness::exit_code_for(pass) == 0);
  pass.verdict->outcome = coord::Outcome::fail;
  CHECK(harness::exit_code_for(pass) == 1);
  pass.verdict->outcome = coord::Outcome::inconclusive;
  CHECK(harness::exit_code_for(pass) == 2);
}
