#include "mrh/harness.hpp"

#include <cstdlib>
#include <map>
#include <memory>
#include <sstream>

#include "mrh/netutil.hpp"
#include "mrh/procutil.hpp"
#include "mrh/real_transport.hpp"
#include "mrh/sim.hpp"
#include "mrh/tester_agent.hpp"

namespace mrh::harness {

using model::TestCase;

namespace {

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& e : v) {
    if (!s.empty()) s += "; ";
    s += e;
  }
  return s;
}

void scan_observed(RunOutcome& out) {
  if (!out.verdict) return;
  for (const auto& v : out.verdict->log.entries())
    if (v.observed) out.observed_output = v.observed;
}

// Node roles normally re-exec this binary; MRHARNESS_BIN points elsewhere
// when the caller is not the CLI itself (test binaries driving the harness).
std::string node_binary() {
  const char* env = std::getenv("MRHARNESS_BIN");
  if (env && *env) return env;
  return proc::self_exe();
}

std::vector<std::string> tester_argv(const model::TesterDecl& decl, int port,
                                     int mr_port, const HarnessOptions& opts) {
  std::vector<std::string> argv = {
      node_binary(),
      "tester",
      "--coordinator",
      "127.0.0.1:" + std::to_string(port),
      "--id",
      decl.id.str(),
      "--role",
      model::role_name(decl.role),
      "--mr-port",
      std::to_string(mr_port),
      "--heartbeat-ms",
      std::to_string(opts.heartbeat_ms),
      "--miss-k",
      std::to_string(opts.miss_k),
      "--stall-limit-ms",
      std::to_string(opts.stall_limit_ms),
      "--stop-grace-ms",
      std::to_string(opts.stop_grace_ms),
  };
  if (!opts.mr_output_file.empty()) {
    argv.push_back("--mr-output-file");
    argv.push_back(opts.mr_output_file);
  }
  return argv;
}

}  // namespace

RunOutcome run_with_processes(const TestCase& tc, const HarnessOptions& opts) {
  RunOutcome out;
  auto errs = model::validate(tc);
  if (!errs.empty()) {
    out.harness_error = true;
    out.error = joined(errs);
    return out;
  }
  int mr_port = opts.mr_port == 0 ? net::pick_free_port() : opts.mr_port;

  std::unique_ptr<transport::TcpCoordinatorSession> session;
  try {
    session = std::make_unique<transport::TcpCoordinatorSession>(
        opts.coordinator_port);
  } catch (const std::exception& e) {
    out.harness_error = true;
    out.error = std::string("cannot open coordinator endpoint: ") + e.what();
    return out;
  }

  std::vector<proc::Child> kids;
  if (opts.spawn_testers) {
    for (const auto& decl : tc.testers) {
      std::string err;
      auto child = proc::spawn(tester_argv(decl, session->port(), mr_port, opts),
                               &err, "tester " + decl.id.str());
      if (!child) {
        out.harness_error = true;
        out.error = "cannot spawn tester " + decl.id.str() + ": " + err;
        for (auto& k : kids) proc::kill_hard(k);
        session->close();
        return out;
      }
      kids.push_back(*child);
    }
  }

  try {
    coord::RunOptions ro;
    ro.registration_window_ms = opts.registration_window_ms;
    out.verdict = coord::run_test(tc, *session, ro);
    scan_observed(out);
  } catch (const std::exception& e) {
    out.harness_error = true;
    out.error = e.what();
  }

  // Orderly shutdown regardless of how the run ended; unknown peers no-op.
  for (const auto& decl : tc.testers)
    session->send(decl.id.str(), transport::Kind::shutdown, json::object());
  for (auto& k : kids)
    if (!proc::wait_exit(k, 3000)) proc::kill_hard(k);
  session->close();
  return out;
}

RunOutcome run_in_sim(const TestCase& tc, const HarnessOptions& opts) {
  RunOutcome out;
  auto errs = model::validate(tc);
  if (!errs.empty()) {
    out.harness_error = true;
    out.error = joined(errs);
    return out;
  }
  int mr_port = opts.mr_port == 0 ? net::pick_free_port() : opts.mr_port;

  transport::SimNet net(transport::SimConfig{});
  transport::SimSession session(net, "coordinator");

  // Inline testers: real instruction execution, simulated transport. States
  // live past run_test so the final SHUTDOWN sweep can tear down engines.
  auto states =
      std::make_shared<std::map<std::string, tester::TesterState>>();
  for (const auto& decl : tc.testers) {
    tester::TesterState st;
    st.cfg.id = decl.id;
    st.cfg.role = decl.role;
    st.cfg.mr_port = mr_port;
    st.cfg.mr_output_file = opts.mr_output_file;
    st.cfg.mr_heartbeat_ms = opts.heartbeat_ms;
    st.cfg.mr_miss_k = opts.miss_k;
    st.cfg.mr_stall_ms = opts.stall_limit_ms;
    st.cfg.stop_grace_ms = opts.stop_grace_ms;
    (*states)[decl.id.str()] = std::move(st);

    std::string name = decl.id.str();
    net.add_node(name, [&net, states, name](const transport::Message& m) {
      tester::TesterState& st = (*states)[name];
      switch (m.kind) {
        case transport::Kind::reg:
          net.send(name, m.sender, transport::Kind::reg_ack, json::object());
          break;
        case transport::Kind::execute: {
          std::int64_t t0 = net::steady_ms();
          std::int64_t budget = m.payload.value("timeout_ms", std::int64_t{0});
          auto res = tester::execute_action(
              m.payload.value("instructions", json::array()), t0 + budget, st);
          coord::LocalVerdict v;
          v.action_id = m.payload.value("action", "");
          v.outcome = res.outcome;
          v.detail = res.detail;
          v.elapsed_ms = net::steady_ms() - t0;
          v.observed = res.observed;
          net.send(name, m.sender, transport::Kind::verdict,
                   coord::verdict_payload(v));
          break;
        }
        case transport::Kind::ping:
          net.send(name, m.sender, transport::Kind::pong, json::object());
          break;
        case transport::Kind::shutdown:
          tester::teardown(st);
          break;
        default:
          break;
      }
    });
    // Testers announce themselves; the coordinator registers whoever pings.
    net.schedule_at(0, [&net, name] {
      net.send(name, "coordinator", transport::Kind::ping, json::object());
    });
  }

  try {
    coord::RunOptions ro;
    ro.registration_window_ms = opts.registration_window_ms;
    out.verdict = coord::run_test(tc, session, ro);
    scan_observed(out);
  } catch (const std::exception& e) {
    out.harness_error = true;
    out.error = e.what();
  }

  for (const auto& decl : tc.testers)
    session.send(decl.id.str(), transport::Kind::shutdown, json::object());
  net.advance_until(net.now() + 100);  // deliver the shutdowns
  for (auto& [_, st] : *states) tester::teardown(st);  // belt and braces
  return out;
}

int exit_code_for(const RunOutcome& r) {
  if (r.harness_error) return 3;
  if (!r.verdict) return 3;
  switch (r.verdict->outcome) {
    case coord::Outcome::pass:
      return 0;
    case coord::Outcome::fail:
      return 1;
    case coord::Outcome::inconclusive:
      return 2;
  }
  return 3;
}

std::optional<json> find_job_descriptor(const TestCase& tc) {
  for (const auto& a : tc.actions)
    for (const auto& ins : a.instructions)
      if (ins.op == model::Opcode::send_job) {
        json desc = {{"name", ins.args.value("job", "")},
                     {"args", ins.args.value("args", json::object())}};
        if (ins.args.contains("mutation")) desc["mutation"] = ins.args["mutation"];
        return desc;
      }
  return std::nullopt;
}

TestCase with_mutation(const TestCase& tc,
                       const std::optional<jobs::MutationDesc>& m) {
  TestCase copy = tc;
  for (auto& a : copy.actions)
    for (auto& ins : a.instructions)
      if (ins.op == model::Opcode::send_job) {
        if (m)
          ins.args["mutation"] = jobs::mutation_to_json(*m);
        else
          ins.args.erase("mutation");
        return copy;
      }
  throw std::invalid_argument("test case has no SEND_JOB instruction");
}

mutation::Runner process_runner(const TestCase& tc, const HarnessOptions& opts,
                                bool sim) {
  return [tc, opts, sim](const std::optional<jobs::MutationDesc>& m) {
    TestCase variant = with_mutation(tc, m);
    RunOutcome r = sim ? run_in_sim(variant, opts)
                       : run_with_processes(variant, opts);
    if (r.harness_error)
      throw mutation::AnalysisError("harness error during " +
                                    std::string(m ? "mutant" : "base") +
                                    " run: " + r.error);
    mutation::MutantRun run;
    run.verdict = r.verdict->outcome;
    if (r.observed_output) run.output = *r.observed_output;
    return run;
  };
}

json report_to_json(const TestCase& tc, const RunOutcome& r,
                    const json& config_echo) {
  json rep = {{"test", tc.name}, {"config", config_echo}};
  if (r.harness_error) {
    rep["harness_error"] = r.error;
    return rep;
  }
  rep["verdict"] = coord::outcome_name(r.verdict->outcome);
  rep["wall_ms"] = r.verdict->wall_ms;
  json rows = json::array();
  for (const auto& v : r.verdict->log.entries()) {
    json row = {{"action", v.action_id},
                {"tester", v.tester.str()},
                {"outcome", coord::outcome_name(v.outcome)},
                {"detail", v.detail},
                {"elapsed_ms", v.elapsed_ms}};
    if (v.observed) row["observed"] = *v.observed;
    rows.push_back(std::move(row));
  }
  rep["verdicts"] = std::move(rows);
  if (r.observed_output) rep["observed_output"] = *r.observed_output;
  return rep;
}

std::string render_report(const TestCase& tc, const RunOutcome& r,
                          const json& config_echo) {
  std::ostringstream out;
  out << "test: " << tc.name << "\n";
  out << "config: " << canon(config_echo) << "\n";
  if (r.harness_error) {
    out << "harness error: " << r.error << "\n";
    return out.str();
  }
  const auto& gv = *r.verdict;
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  std::size_t aw = 6, tw = 6, dw = 6;
  for (const auto& v : gv.log.entries()) {
    aw = std::max(aw, v.action_id.size());
    tw = std::max(tw, v.tester.str().size());
    dw = std::max(dw, v.detail.size());
  }
  out << "\n" << pad("action", aw + 2) << pad("tester", tw + 2)
      << pad("outcome", 14) << pad("elapsed_ms", 12) << "detail\n";
  for (const auto& v : gv.log.entries())
    out << pad(v.action_id, aw + 2) << pad(v.tester.str(), tw + 2)
        << pad(coord::outcome_name(v.outcome), 14)
        << pad(std::to_string(v.elapsed_ms), 12) << v.detail << "\n";
  if (r.observed_output)
    out << "\nobserved output: " << canon(*r.observed_output) << "\n";
  out << "\nglobal verdict: " << coord::outcome_name(gv.outcome)
      << "  (wall " << gv.wall_ms << " ms)\n";
  return out.str();
}

}  // namespace mrh::harness
