#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "mrh/jobs.hpp"

// The engine under test: one master, N workers, TCP loopback. Tasks are
// assigned FIFO (lowest id first); the reduce phase starts only after every
// map task is done. Completed reduce output lives at the master, so a worker
// death after a reduce costs nothing; a completed map lost with its worker is
// re-executed. Workers heartbeat; a worker is declared dead after miss_k
// silent intervals, or immediately when its connection drops. A job with no
// live workers past the stall limit resolves to the NULL output. Evaluation
// faults (divide by zero, overflow, ill-typed mutants) also resolve to NULL.

namespace mrh::minimr {

struct MasterConfig {
  int port = 7800;  // 0 = ephemeral, readable via Master::port()
  std::int64_t heartbeat_interval_ms = 500;
  int miss_k = 3;
  std::int64_t stall_limit_ms = 30000;
  std::string output_file;  // reduced pairs artifact; "" = don't write
};

struct Status {
  int live_workers = 0;
  bool job_active = false;
  int maps_total = 0;
  int maps_done = 0;
  int reduces_total = 0;
  int reduces_done = 0;
  std::int64_t jobs_completed = 0;
};

class Master {
 public:
  explicit Master(MasterConfig cfg);
  ~Master();

  Master(const Master&) = delete;
  Master& operator=(const Master&) = delete;

  bool start(std::string* err);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  MasterConfig cfg_;
  int port_ = 0;
  std::unique_ptr<Impl> impl_;
};

struct WorkerConfig {
  std::string master_host = "127.0.0.1";
  int master_port = 7800;
  std::int64_t heartbeat_interval_ms = 500;
  std::int64_t connect_timeout_ms = 5000;
  std::int64_t fetch_timeout_ms = 2000;
};

class Worker {
 public:
  explicit Worker(WorkerConfig cfg);
  ~Worker();

  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  bool start(std::string* err);
  // Orderly shutdown (close connections, join threads).
  void stop();
  // Abrupt death: sockets die, heartbeats stop, in-memory buckets vanish.
  // Mirrors a SIGKILL for in-process tests.
  void crash();
  // Test hook for the failure detector: stop heartbeating while keeping the
  // connection open (a silent, not vanished, worker).
  void suspend_heartbeats(bool on);

 private:
  struct Impl;
  WorkerConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

struct SubmitResult {
  bool transport_ok = false;  // reached the master and got an answer
  std::string status;         // "ok" | "null" | "error"
  json output = json(nullptr);
  std::vector<std::pair<json, json>> reduced;
  std::string error;
};

// Submit a job descriptor ({"name","args"[,"mutation"]}) and wait for the
// result. Blocks up to timeout_ms.
SubmitResult submit_job(const std::string& host, int port,
                        const json& descriptor, std::int64_t timeout_ms);

std::optional<Status> query_status(const std::string& host, int port,
                                   std::int64_t timeout_ms = 2000);

// In-process cluster for unit tests: master + workers over loopback with an
// ephemeral port and fast failure-detector settings.
struct LocalCluster {
  std::unique_ptr<Master> master;
  std::vector<std::unique_ptr<Worker>> workers;
  int port = 0;

  bool start(int n_workers, MasterConfig mcfg = {}, WorkerConfig wcfg = {});
  bool add_worker(WorkerConfig wcfg = {});
  SubmitResult submit(const json& descriptor, std::int64_t timeout_ms);
  void crash_worker(std::size_t i);
  std::optional<Status> status();
  void stop();
  ~LocalCluster() { stop(); }
};

}  // namespace mrh::minimr
