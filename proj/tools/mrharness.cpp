// mrharness — run distributed test cases against the bundled MapReduce
// engine, measure the harness's own bug-finding power (mutation analysis) and
// runtime overhead (bench), and host the per-node roles (tester, engine
// master/worker) behind hidden subcommands so every node is this one binary.

#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mrh/harness.hpp"
#include "mrh/minimr.hpp"
#include "mrh/mutation.hpp"
#include "mrh/netutil.hpp"
#include "mrh/procutil.hpp"
#include "mrh/tester_agent.hpp"

namespace {

using mrh::json;
namespace coord = mrh::coord;
namespace harness = mrh::harness;
namespace jobs = mrh::jobs;
namespace minimr = mrh::minimr;
namespace model = mrh::model;
namespace mut = mrh::mutation;
namespace net = mrh::net;
namespace proc = mrh::proc;

volatile std::sig_atomic_t g_stop = 0;
void stop_on_signal(int) { g_stop = 1; }
void trap_stop_signals() {
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
}

json parse_json_or_string(const std::string& s) {
  json parsed = json::parse(s, nullptr, false);
  return parsed.is_discarded() ? json(s) : parsed;
}

std::optional<model::TestCase> load_case(const std::string& path) {
  auto res = model::load_test_case_file(path);
  if (!res.test_case) {
    std::cerr << "invalid test case " << path << ":\n";
    for (const auto& e : res.errors) std::cerr << "  " << e << "\n";
    return std::nullopt;
  }
  return res.test_case;
}

struct CommonFlags {
  int port = 7717;   // MRHARNESS_PORT env applies; 0 = ephemeral
  int mr_port = 0;   // 0 = free port per run
  std::string backend = "real";
  std::optional<std::int64_t> seed;
  std::optional<std::string> hosts;
};

harness::HarnessOptions to_options(const CommonFlags& f) {
  harness::HarnessOptions o;
  o.coordinator_port = f.port;
  o.mr_port = f.mr_port;
  o.spawn_testers = !f.hosts.has_value();
  return o;
}

// --seed rewrites the seed argument of jobs that already take one.
int apply_seed(model::TestCase& tc, std::int64_t seed) {
  int hits = 0;
  for (auto& a : tc.actions)
    for (auto& ins : a.instructions)
      if (ins.op == model::Opcode::send_job && ins.args.contains("args") &&
          ins.args["args"].is_object() && ins.args["args"].contains("seed")) {
        ins.args["args"]["seed"] = seed;
        ++hits;
      }
  return hits;
}

int apply_expect(model::TestCase& tc, const json& expected) {
  int hits = 0;
  for (auto& a : tc.actions)
    for (auto& ins : a.instructions)
      if (ins.op == model::Opcode::assert_output) {
        ins.args["expected"] = expected;
        ++hits;
      }
  return hits;
}

// ---- run -------------------------------------------------------------------

int cmd_run(const std::string& file, CommonFlags flags,
            const std::optional<std::string>& expect, bool as_json,
            std::optional<std::int64_t> reg_window,
            const std::string& mr_output_file) {
  auto tc = load_case(file);
  if (!tc) return 3;
  if (flags.hosts && flags.backend == "sim") {
    std::cerr << "--hosts needs the real backend\n";
    return 3;
  }
  if (flags.seed && apply_seed(*tc, *flags.seed) == 0)
    std::cerr << "note: --seed matched no job argument in " << file << "\n";
  json expect_json;
  if (expect) {
    expect_json = parse_json_or_string(*expect);
    if (apply_expect(*tc, expect_json) == 0)
      std::cerr << "note: --expect matched no assertion in " << file << "\n";
  }

  harness::HarnessOptions opts = to_options(flags);
  opts.mr_output_file = mr_output_file;
  if (reg_window)
    opts.registration_window_ms = *reg_window;
  else if (flags.hosts)
    opts.registration_window_ms = 60000;  // manual starts need slack

  if (flags.hosts) {
    std::ifstream in(*flags.hosts);
    if (!in) {
      std::cerr << "cannot read hosts file " << *flags.hosts << "\n";
      return 3;
    }
    std::cerr << "external testers: start each node below, pointing "
                 "--coordinator at this machine (port "
              << (opts.coordinator_port == 0 ? std::string("<ephemeral>")
                                             : std::to_string(
                                                   opts.coordinator_port))
              << "):\n";
    for (const auto& decl : tc->testers)
      std::cerr << "  mrharness tester --coordinator <this-host>:"
                << opts.coordinator_port << " --id " << decl.id.str()
                << " --role " << model::role_name(decl.role)
                << " --mr-port <engine-port>\n";
  }

  harness::RunOutcome r = flags.backend == "sim"
                              ? harness::run_in_sim(*tc, opts)
                              : harness::run_with_processes(*tc, opts);
  json echo = {{"backend", flags.backend},
               {"port", opts.coordinator_port},
               {"mr_port", opts.mr_port},
               {"registration_window_ms", opts.registration_window_ms}};
  if (flags.seed) echo["seed"] = *flags.seed;
  if (expect) echo["expect"] = expect_json;
  if (as_json)
    std::cout << harness::report_to_json(*tc, r, echo).dump(2) << "\n";
  else
    std::cout << harness::render_report(*tc, r, echo);
  if (r.harness_error && !as_json)
    std::cerr << "harness error: " << r.error << "\n";
  return harness::exit_code_for(r);
}

// ---- mutate ----------------------------------------------------------------

int cmd_mutate(const std::string& job, const std::string& file,
               CommonFlags flags, const std::string& matrix_out) {
  auto tc = load_case(file);
  if (!tc) return 3;
  auto desc = harness::find_job_descriptor(*tc);
  if (!desc) {
    std::cerr << file << " submits no job; nothing to mutate\n";
    return 3;
  }
  if ((*desc)["name"] != job) {
    std::cerr << file << " submits '" << (*desc)["name"].get<std::string>()
              << "', not '" << job << "'\n";
    return 3;
  }
  if (desc->contains("mutation")) {
    std::cerr << file << " already carries a mutation; use a clean case\n";
    return 3;
  }
  if (flags.seed) apply_seed(*tc, *flags.seed);
  jobs::JobSpec spec;
  try {
    spec = jobs::job_from_descriptor(*harness::find_job_descriptor(*tc));
  } catch (const std::exception& e) {
    std::cerr << "cannot build job: " << e.what() << "\n";
    return 3;
  }

  mut::KillMatrix matrix;
  try {
    matrix = mut::run_analysis(
        spec, job,
        harness::process_runner(*tc, to_options(flags),
                                flags.backend == "sim"));
  } catch (const mut::AnalysisError& e) {
    std::cerr << "mutation analysis aborted: " << e.what() << "\n";
    return 3;
  }

  std::cout << mut::render_report(matrix);
  if (!matrix_out.empty()) {
    std::ofstream out(matrix_out);
    if (!out) {
      std::cerr << "cannot write " << matrix_out << "\n";
      return 3;
    }
    out << mut::matrix_to_json(matrix).dump(2) << "\n";
    std::cout << "matrix written to " << matrix_out << "\n";
  }
  return mut::consistency_violations(matrix).empty() ? 0 : 1;
}

// ---- bench -----------------------------------------------------------------

struct Stats {
  double mean = 0;
  std::optional<double> stddev;  // n/a for a single sample
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() > 1) {
    double acc = 0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / (xs.size() - 1));
  }
  return s;
}

std::string fmt_stats(const Stats& s) {
  char buf[64];
  if (s.stddev)
    std::snprintf(buf, sizeof buf, "%.1f ms (stddev %.1f)", s.mean, *s.stddev);
  else
    std::snprintf(buf, sizeof buf, "%.1f ms (stddev n/a)", s.mean);
  return buf;
}

model::TestCase bench_case(const std::string& job, const json& args,
                           int workers) {
  using model::Action;
  using model::Instruction;
  using model::Opcode;
  model::TestCase tc;
  tc.name = "bench-" + job;
  tc.testers = {{model::TesterId{0}, model::Role::master_controller},
                {model::TesterId{1}, model::Role::worker_controller}};
  auto act = [](std::string id, int level, std::vector<model::TesterId> tgt,
                std::vector<Instruction> ins, std::int64_t timeout) {
    return Action{std::move(id), level, std::move(tgt), std::move(ins),
                  timeout};
  };
  tc.actions = {
      act("a0", 0, {model::TesterId{0}},
          {{Opcode::start_master, json::object()}}, 10000),
      act("a1", 1, {model::TesterId{1}},
          {{Opcode::start_workers, json{{"count", workers}}}}, 10000),
      act("a2", 2, {model::TesterId{0}},
          {{Opcode::send_job, json{{"job", job}, {"args", args}}}}, 180000),
      act("a3", 3, {model::TesterId{1}},
          {{Opcode::stop_workers, json::object()}}, 10000),
      act("a4", 4, {model::TesterId{0}},
          {{Opcode::stop_master, json::object()}}, 10000),
  };
  return tc;
}

int cmd_bench(const std::string& job, CommonFlags flags, int runs, int workers,
              std::int64_t maps, std::int64_t points) {
  if (!jobs::known_job(job)) {
    std::cerr << "unknown job '" << job << "'\n";
    return 3;
  }
  json args;
  if (job == "pi")
    args = {{"maps", maps},
            {"points_per_map", points},
            {"seed", flags.seed.value_or(21)}};
  else
    args = {{"input", "the quick brown fox jumps over the lazy dog\nthe fox"}};
  json desc = {{"name", job}, {"args", args}};

  // Raw side: the engine alone, pre-started, timed submit -> result.
  int port = flags.mr_port == 0 ? net::pick_free_port() : flags.mr_port;
  std::vector<proc::Child> kids;
  auto cleanup = [&kids] {
    for (auto it = kids.rbegin(); it != kids.rend(); ++it)
      if (!proc::stop_graceful(*it, 1000)) proc::kill_hard(*it);
  };
  std::string err;
  auto master = proc::spawn({proc::self_exe(), "mr-master", "--mr-port",
                             std::to_string(port)},
                            &err, "bench master");
  if (!master) {
    std::cerr << "cannot spawn engine master: " << err << "\n";
    return 3;
  }
  kids.push_back(*master);
  std::int64_t deadline = net::steady_ms() + 10000;
  while (!minimr::query_status("127.0.0.1", port, 200)) {
    if (net::steady_ms() > deadline) {
      std::cerr << "engine master never came up\n";
      cleanup();
      return 3;
    }
    proc::sleep_ms(25);
  }
  for (int i = 0; i < workers; ++i) {
    auto w = proc::spawn({proc::self_exe(), "mr-worker", "--master",
                          "127.0.0.1:" + std::to_string(port)},
                         &err, "bench worker");
    if (!w) {
      std::cerr << "cannot spawn engine worker: " << err << "\n";
      cleanup();
      return 3;
    }
    kids.push_back(*w);
  }
  while (true) {
    auto st = minimr::query_status("127.0.0.1", port, 500);
    if (st && st->live_workers >= workers) break;
    if (net::steady_ms() > deadline) {
      std::cerr << "engine workers never registered\n";
      cleanup();
      return 3;
    }
    proc::sleep_ms(25);
  }

  auto raw_once = [&](double* out_ms) {
    std::int64_t t0 = net::steady_ms();
    auto res = minimr::submit_job("127.0.0.1", port, desc, 180000);
    if (!res.transport_ok || res.status != "ok") {
      std::cerr << "raw run failed: "
                << (res.error.empty() ? res.status : res.error) << "\n";
      return false;
    }
    if (out_ms) *out_ms = double(net::steady_ms() - t0);
    return true;
  };
  if (!raw_once(nullptr)) {  // warmup, discarded
    cleanup();
    return 3;
  }
  std::vector<double> raw_ms(runs);
  for (int i = 0; i < runs; ++i)
    if (!raw_once(&raw_ms[i])) {
      cleanup();
      return 3;
    }
  cleanup();
  kids.clear();

  // Harnessed side: the same job inside a full test-case run (coordinator,
  // testers, engine all spawned per run) — wall clock per run, plus the
  // job action's own elapsed time for a like-for-like view.
  model::TestCase tc = bench_case(job, args, workers);
  harness::HarnessOptions opts = to_options(flags);
  auto harnessed_once = [&](double* wall_ms, double* job_ms) {
    harness::RunOutcome r = harness::run_with_processes(tc, opts);
    if (r.harness_error || !r.verdict ||
        r.verdict->outcome != coord::Outcome::pass) {
      std::cerr << "harnessed run did not pass"
                << (r.harness_error ? ": " + r.error : "") << "\n";
      return false;
    }
    if (wall_ms) *wall_ms = double(r.verdict->wall_ms);
    if (job_ms)
      for (const auto& v : r.verdict->log.entries())
        if (v.action_id == "a2") *job_ms = double(v.elapsed_ms);
    return true;
  };
  if (!harnessed_once(nullptr, nullptr)) return 3;  // warmup, discarded
  std::vector<double> wall_ms(runs), job_ms(runs);
  for (int i = 0; i < runs; ++i)
    if (!harnessed_once(&wall_ms[i], &job_ms[i])) return 3;

  Stats raw = stats_of(raw_ms);
  Stats wall = stats_of(wall_ms);
  Stats in_harness = stats_of(job_ms);
  std::cout << "bench " << job << "  (" << runs
            << " timed runs each side, 1 discarded warmup, " << workers
            << " workers)\n";
  std::cout << "  job args: " << mrh::canon(args) << "\n";
  std::cout << "  raw engine run:        " << fmt_stats(raw) << "\n";
  std::cout << "  harnessed run (wall):  " << fmt_stats(wall)
            << "   [includes node startup, registration, teardown]\n";
  std::cout << "  job action only:       " << fmt_stats(in_harness)
            << "   [submit->result through the tester]\n";
  if (raw.mean > 0.0) {
    double pct = (wall.mean - raw.mean) / raw.mean * 100.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f%%", pct);
    std::cout << "  overhead (wall vs raw): " << buf << "\n";
  } else {
    std::cout << "  overhead: n/a (raw mean is sub-millisecond; absolute "
                 "times above)\n";
  }
  return 0;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const std::string& file, bool as_json) {
  std::ifstream in(file);
  if (!in) {
    std::cerr << "cannot read " << file << "\n";
    return 3;
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    std::cerr << file << " is not valid JSON\n";
    return 3;
  }
  std::string err;
  auto matrix = mut::matrix_from_json(doc, &err);
  if (!matrix) {
    std::cerr << file << ": " << err << "\n";
    return 3;
  }
  if (as_json) {
    mut::Tally t = mut::tally(*matrix);
    json summary = {{"job", matrix->job},
                    {"mutants", matrix->rows.size()},
                    {"killed", t.killed},
                    {"equivalent", t.equivalent},
                    {"failed_verdicts", t.failed_verdicts},
                    {"consistent", mut::consistency_violations(*matrix).empty()}};
    if (t.kill_ratio)
      summary["kill_ratio"] = *t.kill_ratio;
    else
      summary["kill_ratio"] = "n/a";
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << mut::render_report(*matrix);
  }
  return 0;
}

// ---- hidden node roles -----------------------------------------------------

int cmd_tester(const std::string& coordinator, const std::string& id,
               const std::string& role, mrh::tester::AgentConfig cfg) {
  auto hp = net::split_host_port(coordinator);
  if (!hp) {
    std::cerr << "bad --coordinator '" << coordinator << "'\n";
    return 3;
  }
  cfg.coordinator_host = hp->first;
  cfg.coordinator_port = hp->second;
  auto tid = model::TesterId::parse(id);
  if (!tid) {
    std::cerr << "bad --id '" << id << "'\n";
    return 3;
  }
  cfg.id = *tid;
  auto r = model::role_from_name(role);
  if (!r) {
    std::cerr << "bad --role '" << role << "'\n";
    return 3;
  }
  cfg.role = *r;
  return mrh::tester::run_agent(cfg);
}

int cmd_mr_master(minimr::MasterConfig cfg) {
  trap_stop_signals();
  minimr::Master m(cfg);
  std::string err;
  if (!m.start(&err)) {
    std::cerr << "engine master failed to start: " << err << "\n";
    return 3;
  }
  while (!g_stop) proc::sleep_ms(50);
  m.stop();
  return 0;
}

int cmd_mr_worker(const std::string& master, std::int64_t heartbeat_ms) {
  trap_stop_signals();
  auto hp = net::split_host_port(master);
  if (!hp) {
    std::cerr << "bad --master '" << master << "'\n";
    return 3;
  }
  minimr::WorkerConfig cfg;
  cfg.master_host = hp->first;
  cfg.master_port = hp->second;
  cfg.heartbeat_interval_ms = heartbeat_ms;
  minimr::Worker w(cfg);
  std::string err;
  if (!w.start(&err)) {
    std::cerr << "engine worker failed to start: " << err << "\n";
    return 3;
  }
  while (!g_stop) proc::sleep_ms(50);
  w.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed test harness for the bundled MapReduce engine"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string hosts_file;

  // run
  auto* run = app.add_subcommand("run", "run a test-case file");
  std::string run_file;
  std::optional<std::string> expect;
  bool run_json = false;
  std::optional<std::int64_t> reg_window;
  std::string mr_output_file;
  run->add_option("file", run_file, "test-case JSON file")->required();
  run->add_option("--port", flags.port, "coordinator port (0 = ephemeral)")
      ->envname("MRHARNESS_PORT");
  run->add_option("--mr-port", flags.mr_port,
                  "engine master port (0 = free port per run)");
  run->add_option("--seed", flags.seed, "override the job seed argument");
  run->add_option("--expect", expect,
                  "override assertion expected values (JSON or string)");
  run->add_option("--backend", flags.backend, "message layer")
      ->check(CLI::IsMember({"real", "sim"}));
  run->add_option("--hosts", hosts_file,
                  "hosts file: testers are started externally");
  run->add_option("--registration-window-ms", reg_window,
                  "how long to wait for tester registration");
  run->add_option("--mr-output-file", mr_output_file,
                  "write the reduced output artifact here");
  run->add_flag("--json", run_json, "machine-readable report");

  // mutate
  auto* mutate = app.add_subcommand(
      "mutate", "mutation analysis: run the case against every mutant");
  std::string mutate_job, mutate_file, matrix_out;
  mutate->add_option("job", mutate_job, "job to mutate")->required();
  mutate->add_option("file", mutate_file, "test-case JSON file")->required();
  mutate->add_option("--matrix-out", matrix_out, "write the kill matrix JSON");
  mutate->add_option("--port", flags.port, "coordinator port")
      ->envname("MRHARNESS_PORT");
  mutate->add_option("--mr-port", flags.mr_port, "engine master port");
  mutate->add_option("--seed", flags.seed, "override the job seed argument");
  mutate->add_option("--backend", flags.backend, "message layer")
      ->check(CLI::IsMember({"real", "sim"}));

  // bench
  auto* bench = app.add_subcommand(
      "bench", "measure harness overhead: raw engine vs harnessed runs");
  std::string bench_job;
  int bench_runs = 5, bench_workers = 5;
  std::int64_t bench_maps = 10, bench_points = 100000;
  bench->add_option("job", bench_job, "job to run")->required();
  bench->add_option("-n,--runs", bench_runs, "timed runs per side")
      ->check(CLI::PositiveNumber);
  bench->add_option("--workers", bench_workers, "engine workers")
      ->check(CLI::Range(1, 64));
  bench->add_option("--maps", bench_maps, "pi: map count");
  bench->add_option("--points", bench_points, "pi: points per map");
  bench->add_option("--seed", flags.seed, "pi: seed");
  bench->add_option("--port", flags.port, "coordinator port")
      ->envname("MRHARNESS_PORT");
  bench->add_option("--mr-port", flags.mr_port, "engine master port");

  // report
  auto* report = app.add_subcommand("report", "render a saved kill matrix");
  std::string report_file;
  bool report_json = false;
  report->add_option("file", report_file, "matrix JSON file")->required();
  report->add_flag("--json", report_json, "machine-readable summary");

  // hidden node roles
  auto* tester = app.add_subcommand("tester", "");
  tester->group("");
  std::string t_coordinator = "127.0.0.1:7717", t_id, t_role;
  mrh::tester::AgentConfig t_cfg;
  tester->add_option("--coordinator", t_coordinator, "");
  tester->add_option("--id", t_id, "")->required();
  tester->add_option("--role", t_role, "")->required();
  tester->add_option("--mr-host", t_cfg.mr_host, "");
  tester->add_option("--mr-port", t_cfg.mr_port, "");
  tester->add_option("--mr-output-file", t_cfg.mr_output_file, "");
  tester->add_option("--heartbeat-ms", t_cfg.mr_heartbeat_ms, "");
  tester->add_option("--miss-k", t_cfg.mr_miss_k, "");
  tester->add_option("--stall-limit-ms", t_cfg.mr_stall_ms, "");
  tester->add_option("--stop-grace-ms", t_cfg.stop_grace_ms, "");
  tester->add_option("--connect-timeout-ms", t_cfg.connect_timeout_ms, "");

  auto* mr_master = app.add_subcommand("mr-master", "");
  mr_master->group("");
  minimr::MasterConfig m_cfg;
  mr_master->add_option("--mr-port", m_cfg.port, "");
  mr_master->add_option("--heartbeat-ms", m_cfg.heartbeat_interval_ms, "");
  mr_master->add_option("--miss-k", m_cfg.miss_k, "");
  mr_master->add_option("--stall-limit-ms", m_cfg.stall_limit_ms, "");
  mr_master->add_option("--output-file", m_cfg.output_file, "");

  auto* mr_worker = app.add_subcommand("mr-worker", "");
  mr_worker->group("");
  std::string w_master = "127.0.0.1:7800";
  std::int64_t w_heartbeat = 500;
  mr_worker->add_option("--master", w_master, "");
  mr_worker->add_option("--heartbeat-ms", w_heartbeat, "");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  if (!hosts_file.empty()) flags.hosts = hosts_file;
  if (app.got_subcommand(run))
    return cmd_run(run_file, flags, expect, run_json, reg_window,
                   mr_output_file);
  if (app.got_subcommand(mutate))
    return cmd_mutate(mutate_job, mutate_file, flags, matrix_out);
  if (app.got_subcommand(bench))
    return cmd_bench(bench_job, flags, bench_runs, bench_workers, bench_maps,
                     bench_points);
  if (app.got_subcommand(report)) return cmd_report(report_file, report_json);
  if (app.got_subcommand(tester))
    return cmd_tester(t_coordinator, t_id, t_role, t_cfg);
  if (app.got_subcommand(mr_master)) return cmd_mr_master(m_cfg);
  if (app.got_subcommand(mr_worker)) return cmd_mr_worker(w_master, w_heartbeat);
  return 3;
}
