#include "mrh/tester_agent.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include "mrh/minimr.hpp"
#include "mrh/netutil.hpp"
#include "mrh/real_transport.hpp"

namespace mrh::tester {

using coord::Outcome;
using model::Opcode;

namespace {

ExecResult pass(std::string detail) {
  return {Outcome::pass, std::move(detail), std::nullopt};
}
ExecResult fail(std::string detail) {
  return {Outcome::fail, std::move(detail), std::nullopt};
}
ExecResult inconclusive(std::string detail) {
  return {Outcome::inconclusive, std::move(detail), std::nullopt};
}

std::string trimmed_canon(const json& v) {
  std::string s = canon(v);
  if (s.size() > 160) s = s.substr(0, 157) + "...";
  return s;
}

// Engine nodes re-exec this binary; MRHARNESS_BIN redirects the spawn when
// the tester logic runs inside a process that is not the CLI (sim backend
// driven from a test binary).
std::string node_binary() {
  const char* env = std::getenv("MRHARNESS_BIN");
  if (env && *env) return env;
  return proc::self_exe();
}

ExecResult exec_start_master(TesterState& st, std::int64_t deadline) {
  if (st.master && proc::alive(*st.master))
    return fail("master already running");
  std::vector<std::string> argv = {
      node_binary(),
      "mr-master",
      "--mr-port", std::to_string(st.cfg.mr_port),
      "--heartbeat-ms", std::to_string(st.cfg.mr_heartbeat_ms),
      "--miss-k", std::to_string(st.cfg.mr_miss_k),
      "--stall-limit-ms", std::to_string(st.cfg.mr_stall_ms),
  };
  if (!st.cfg.mr_output_file.empty()) {
    argv.push_back("--output-file");
    argv.push_back(st.cfg.mr_output_file);
  }
  std::string err;
  auto child = proc::spawn(argv, &err, "engine master");
  if (!child) return fail("cannot spawn master: " + err);
  st.master = *child;

  // The op succeeds once the master accepts connections.
  for (;;) {
    std::string cerr;
    int fd = net::tcp_connect(st.cfg.mr_host, st.cfg.mr_port, 200, &cerr);
    if (fd >= 0) {
      net::close_fd(fd);
      return pass("master accepting on port " + std::to_string(st.cfg.mr_port));
    }
    if (!proc::alive(*st.master)) {
      st.master.reset();
      return fail("master exited before accepting (port in use?)");
    }
    if (net::steady_ms() >= deadline)
      return inconclusive("master not accepting before the deadline");
    proc::sleep_ms(25);
  }
}

ExecResult exec_start_workers(TesterState& st, const json& args) {
  std::int64_t count = args.value("count", std::int64_t(1));
  std::vector<proc::Child> started;
  for (std::int64_t i = 0; i < count; ++i) {
    std::vector<std::string> argv = {
        node_binary(),
        "mr-worker",
        "--master", st.cfg.mr_host + ":" + std::to_string(st.cfg.mr_port),
        "--heartbeat-ms", std::to_string(st.cfg.mr_heartbeat_ms),
    };
    std::string err;
    auto child = proc::spawn(argv, &err, "engine worker");
    if (!child) return fail("cannot spawn worker: " + err);
    started.push_back(*child);
  }
  proc::sleep_ms(50);
  for (auto& w : started)
    if (!proc::alive(w))
      return fail("a worker exited immediately (master unreachable?)");
  for (auto& w : started) st.workers.push_back(w);
  return pass("started " + std::to_string(count) + " worker(s)");
}

ExecResult exec_send_job(TesterState& st, const json& args,
                         std::int64_t deadline) {
  if (!st.master || !proc::alive(*st.master)) {
    if (st.master) st.master.reset();
    return fail("no engine master running");
  }
  json descriptor = {{"name", args.value("job", "")},
                     {"args", args.value("args", json::object())}};
  if (args.contains("mutation")) descriptor["mutation"] = args["mutation"];

  std::int64_t budget = deadline - net::steady_ms();
  if (budget <= 0) return inconclusive("local deadline exceeded");
  auto res =
      minimr::submit_job(st.cfg.mr_host, st.cfg.mr_port, descriptor, budget);
  if (!res.transport_ok) {
    if (net::steady_ms() >= deadline)
      return inconclusive("no job result before the deadline");
    return fail("job submission failed: " + res.error);
  }
  if (res.status == "error") return fail("engine rejected job: " + res.error);

  // "ok" and "null" both complete the op; the value speaks at ASSERT_OUTPUT.
  st.last_output = res.output;
  ExecResult r = pass(res.status == "null"
                          ? "job returned NULL (" + res.error + ")"
                          : "job output " + trimmed_canon(res.output));
  r.observed = res.output;
  return r;
}

ExecResult exec_drop_worker(TesterState& st) {
  while (!st.workers.empty() && !proc::alive(st.workers.front()))
    st.workers.erase(st.workers.begin());
  if (st.workers.empty()) return fail("no live worker to drop");
  proc::Child victim = st.workers.front();
  st.workers.erase(st.workers.begin());
  pid_t pid = victim.pid;
  proc::kill_hard(victim);
  return pass("killed worker pid " + std::to_string(pid));
}

ExecResult exec_assert_output(TesterState& st, const json& args) {
  if (!st.last_output) return inconclusive("no job output to assert");
  const json& observed = *st.last_output;
  const json expected = args.at("expected");
  const std::string mode = args.value("mode", "exact");

  ExecResult r{Outcome::pass, "", observed};
  if (mode == "exact") {
    if (canon(observed) == canon(expected)) {
      r.detail = "output matches " + trimmed_canon(expected);
      return r;
    }
    r.outcome = Outcome::fail;
    r.detail = "expected " + trimmed_canon(expected) + ", observed " +
               trimmed_canon(observed);
    return r;
  }
  // Numeric modes: a non-number (the NULL output included) cannot match.
  if (!observed.is_number() || !expected.is_number()) {
    r.outcome = Outcome::fail;
    r.detail = "expected " + trimmed_canon(expected) + ", observed " +
               trimmed_canon(observed);
    return r;
  }
  double obs = observed.get<double>();
  double exp = expected.get<double>();
  bool ok;
  std::string how;
  if (mode == "round4") {
    ok = round_half_up4(obs) == round_half_up4(exp);
    how = "at 4 decimal places";
  } else {  // abs_tol
    double tol = args.value("tol", 0.0);
    ok = std::fabs(obs - exp) <= tol;
    how = "within " + std::to_string(tol);
  }
  if (ok) {
    r.detail = "output " + trimmed_canon(observed) + " matches " +
               trimmed_canon(expected) + " " + how;
    return r;
  }
  r.outcome = Outcome::fail;
  r.detail = "expected " + trimmed_canon(expected) + " " + how + ", observed " +
             trimmed_canon(observed);
  return r;
}

ExecResult exec_stop_workers(TesterState& st) {
  if (st.workers.empty()) return pass("no workers running (already stopped)");
  int n = 0;
  for (auto& w : st.workers) {
    proc::stop_graceful(w, st.cfg.stop_grace_ms);
    ++n;
  }
  st.workers.clear();
  return pass("stopped " + std::to_string(n) + " worker(s)");
}

ExecResult exec_stop_master(TesterState& st) {
  if (!st.master) return pass("master not running (already stopped)");
  bool graceful = proc::stop_graceful(*st.master, st.cfg.stop_grace_ms);
  st.master.reset();
  return pass(graceful ? "master stopped" : "master killed after grace");
}

ExecResult exec_sleep(const json& args, std::int64_t deadline) {
  std::int64_t ms = args.value("ms", std::int64_t(0));
  std::int64_t budget = deadline - net::steady_ms();
  if (ms > budget) {
    proc::sleep_ms(std::max<std::int64_t>(budget, 0));
    return inconclusive("local deadline exceeded during sleep");
  }
  proc::sleep_ms(ms);
  return pass("slept " + std::to_string(ms) + "ms");
}

ExecResult dispatch_instruction(Opcode op, const json& args, TesterState& st,
                                std::int64_t deadline) {
  bool is_master = st.cfg.role == model::Role::master_controller;
  if (model::master_only(op) && !is_master)
    return fail("role mismatch: " + model::opcode_name(op) +
                " needs a master controller");
  if (model::worker_only(op) && is_master)
    return fail("role mismatch: " + model::opcode_name(op) +
                " needs a worker controller");
  switch (op) {
    case Opcode::start_master: return exec_start_master(st, deadline);
    case Opcode::start_workers: return exec_start_workers(st, args);
    case Opcode::send_job: return exec_send_job(st, args, deadline);
    case Opcode::drop_worker: return exec_drop_worker(st);
    case Opcode::assert_output: return exec_assert_output(st, args);
    case Opcode::stop_workers: return exec_stop_workers(st);
    case Opcode::stop_master: return exec_stop_master(st);
    case Opcode::sleep_for: return exec_sleep(args, deadline);
  }
  return fail("unknown instruction");
}

}  // namespace

ExecResult execute_action(const json& instructions, std::int64_t deadline_ms,
                          TesterState& st) {
  if (!instructions.is_array() || instructions.empty())
    return fail("malformed action: no instructions");
  ExecResult last{Outcome::pass, "nothing to do", std::nullopt};
  std::optional<json> observed;
  for (const auto& ins : instructions) {
    if (net::steady_ms() >= deadline_ms) {
      ExecResult r = inconclusive("local deadline exceeded");
      r.observed = observed;
      return r;
    }
    auto op = ins.is_object() && ins.contains("op") && ins["op"].is_string()
                  ? model::opcode_from_name(ins["op"].get<std::string>())
                  : std::nullopt;
    if (!op) {
      ExecResult r = fail("malformed instruction");
      r.observed = observed;
      return r;
    }
    json args = ins.value("args", json::object());
    if (!args.is_object()) args = json::object();
    ExecResult r;
    try {
      r = dispatch_instruction(*op, args, st, deadline_ms);
    } catch (const std::exception& e) {
      r = fail(std::string("instruction error: ") + e.what());
    }
    if (r.observed) observed = r.observed;
    r.detail = model::opcode_name(*op) + ": " + r.detail;
    if (r.outcome != Outcome::pass) {
      r.observed = observed;
      return r;
    }
    last = std::move(r);
  }
  last.observed = observed;
  return last;
}

void teardown(TesterState& st) {
  for (auto& w : st.workers) proc::stop_graceful(w, 300);
  st.workers.clear();
  if (st.master) {
    proc::stop_graceful(*st.master, 300);
    st.master.reset();
  }
}

int run_agent(const AgentConfig& cfg) {
  transport::TcpPeerChannel channel(cfg.coordinator_host, cfg.coordinator_port,
                                    cfg.id.str(), cfg.connect_timeout_ms);
  if (!channel.connected()) return 3;

  TesterState st;
  st.cfg = cfg;

  channel.send(transport::Kind::ping, json::object());

  // EXECUTEs run on a separate thread so PING/SHUTDOWN stay responsive while
  // an action is in flight; a tester still serves one action at a time.
  struct Pending {
    json payload;
    std::int64_t received_at;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Pending> queue;
  std::atomic<bool> stopping{false};

  std::thread executor([&] {
    for (;;) {
      Pending item;
      {
        std::unique_lock<std::mutex> lk(mu);
        cv.wait(lk, [&] { return !queue.empty() || stopping.load(); });
        if (queue.empty() && stopping) return;
        item = std::move(queue.front());
        queue.pop_front();
      }
      const json& p = item.payload;
      std::string action = p.value("action", "");
      std::int64_t timeout = p.value("timeout_ms", std::int64_t(0));
      std::int64_t deadline = item.received_at + timeout;
      ExecResult r =
          execute_action(p.value("instructions", json::array()), deadline, st);
      coord::LocalVerdict v;
      v.action_id = action;
      v.tester = cfg.id;
      v.outcome = r.outcome;
      v.detail = r.detail;
      v.elapsed_ms = net::steady_ms() - item.received_at;
      v.observed = r.observed;
      channel.send(transport::Kind::verdict, coord::verdict_payload(v));
    }
  });

  int exit_code = 1;  // coordinator vanished unless told otherwise
  for (;;) {
    auto msg = channel.recv(std::nullopt);
    if (!msg) break;
    switch (msg->kind) {
      case transport::Kind::reg:
        channel.send(transport::Kind::reg_ack, json::object());
        break;
      case transport::Kind::execute: {
        std::lock_guard<std::mutex> lk(mu);
        queue.push_back({msg->payload, net::steady_ms()});
        cv.notify_all();
        break;
      }
      case transport::Kind::ping:
        channel.send(transport::Kind::pong, json::object());
        break;
      case transport::Kind::shutdown:
        exit_code = 0;
        goto done;
      default:
        break;
    }
  }
done:
  stopping = true;
  cv.notify_all();
  if (executor.joinable()) executor.join();
  teardown(st);
  channel.close();
  return exit_code;
}

}  // namespace mrh::tester
