#include "mrh/minimr.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include "mrh/netutil.hpp"

namespace mrh::minimr {

using jobs::EvalFault;
using jobs::JobSpec;

namespace {

json parse_or_null(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    return json(nullptr);
  }
}

bool send_doc(int fd, const json& doc) {
  return net::write_frame(fd, mrh::canon(doc));
}

std::vector<std::pair<json, json>> pairs_from_json(const json& arr) {
  std::vector<std::pair<json, json>> out;
  if (!arr.is_array()) return out;
  for (const auto& el : arr) {
    if (!el.is_array() || el.size() != 2) continue;
    out.emplace_back(el[0], el[1]);
  }
  return out;
}

json pairs_to_json(const std::vector<std::pair<json, json>>& pairs) {
  json out = json::array();
  for (const auto& [k, v] : pairs) out.push_back(json::array({k, v}));
  return out;
}

// poll-guarded frame read with an absolute steady-clock deadline
std::optional<std::string> read_frame_until(int fd, std::int64_t deadline_ms) {
  std::int64_t now = net::steady_ms();
  if (now >= deadline_ms) return std::nullopt;
  pollfd pfd{fd, POLLIN, 0};
  int pr = ::poll(&pfd, 1, static_cast<int>(deadline_ms - now));
  if (pr <= 0) return std::nullopt;
  return net::read_frame(fd);
}

}  // namespace

// ===== Master ================================================================

struct Master::Impl {
  explicit Impl(MasterConfig c) : cfg(c) {}

  MasterConfig cfg;
  int listen_fd = -1;
  int port = 0;
  std::atomic<bool> closing{false};

  // ---- event plumbing (readers/acceptor/ticker -> loop thread) ----
  struct Ev {
    enum class K { msg, conn_closed, tick, stop } k{K::tick};
    std::uint64_t conn = 0;
    json doc;
  };
  std::mutex ev_mu;
  std::condition_variable ev_cv;
  std::deque<Ev> events;

  void push(Ev ev) {
    std::lock_guard<std::mutex> lk(ev_mu);
    events.push_back(std::move(ev));
    ev_cv.notify_all();
  }

  // ---- connections (acceptor inserts; loop writes/closes) ----
  std::mutex conns_mu;
  std::map<std::uint64_t, int> conn_fds;
  std::uint64_t next_conn = 1;
  std::vector<std::thread> readers;

  std::thread acceptor, ticker, loop;

  // ---- state owned exclusively by the loop thread ----
  struct WorkerInfo {
    std::uint64_t conn = 0;
    int fetch_port = 0;
    std::int64_t last_hb = 0;
  };
  std::map<int, WorkerInfo> workers;
  std::map<std::uint64_t, int> conn_to_wid;
  int next_wid = 1;

  struct MapTask {
    enum class S { idle, running, done } s = S::idle;
    int runner = -1;
    int holder = -1;  // worker holding the buckets once done
  };
  struct ReduceTask {
    enum class S { idle, running, done } s = S::idle;
    int runner = -1;
    std::vector<std::pair<json, json>> pairs;
  };
  struct JobRun {
    std::int64_t epoch = 0;
    json descriptor;
    JobSpec spec;
    std::uint64_t client_conn = 0;
    std::vector<MapTask> maps;
    std::vector<ReduceTask> reduces;
    int maps_done = 0;
    int reduces_done = 0;
    std::optional<std::int64_t> no_worker_since;
  };
  std::optional<JobRun> job;
  std::int64_t epoch_counter = 0;
  std::int64_t jobs_completed = 0;

  // ---- helpers (loop thread) ----
  void reply(std::uint64_t conn, const json& doc) {
    int fd = -1;
    {
      std::lock_guard<std::mutex> lk(conns_mu);
      auto it = conn_fds.find(conn);
      if (it == conn_fds.end()) return;
      fd = it->second;
    }
    send_doc(fd, doc);
  }

  void drop_conn(std::uint64_t conn) {
    std::lock_guard<std::mutex> lk(conns_mu);
    auto it = conn_fds.find(conn);
    if (it == conn_fds.end()) return;
    net::close_fd(it->second);
    conn_fds.erase(it);
  }

  void reader_loop(std::uint64_t conn, int fd) {
    for (;;) {
      auto body = net::read_frame(fd);
      if (!body) break;
      json doc = parse_or_null(*body);
      if (!doc.is_object()) continue;
      push(Ev{Ev::K::msg, conn, std::move(doc)});
    }
    push(Ev{Ev::K::conn_closed, conn, {}});
  }

  void accept_loop() {
    for (;;) {
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) return;
      std::lock_guard<std::mutex> lk(conns_mu);
      if (closing) {
        net::close_fd(fd);
        return;
      }
      std::uint64_t id = next_conn++;
      conn_fds[id] = fd;
      readers.emplace_back([this, id, fd] { reader_loop(id, fd); });
    }
  }

  void tick_loop() {
    std::int64_t step = std::max<std::int64_t>(
        5, std::min<std::int64_t>(50, cfg.heartbeat_interval_ms / 2));
    while (!closing) {
      proc_sleep(step);
      push(Ev{Ev::K::tick, 0, {}});
    }
  }

  static void proc_sleep(std::int64_t ms) {
    struct timespec ts;
    ts.tv_sec = ms / 1000;
    ts.tv_nsec = (ms % 1000) * 1000000;
    ::nanosleep(&ts, nullptr);
  }

  // ---- job lifecycle ----
  void finish_null(const std::string& error) {
    if (!job) return;
    if (!cfg.output_file.empty()) {
      std::ofstream out(cfg.output_file, std::ios::trunc);  // no output
    }
    reply(job->client_conn, {{"type", "result"},
                             {"status", "null"},
                             {"output", json(nullptr)},
                             {"reduced", json::array()},
                             {"error", error}});
    job.reset();
    ++jobs_completed;
  }

  void finish_ok() {
    std::vector<std::pair<json, json>> reduced;
    for (const auto& r : job->reduces)
      reduced.insert(reduced.end(), r.pairs.begin(), r.pairs.end());
    std::stable_sort(reduced.begin(), reduced.end(),
                     [](const auto& a, const auto& b) {
                       return mrh::canon(a.first) < mrh::canon(b.first);
                     });
    json output;
    try {
      output = jobs::finish(job->spec, reduced);
    } catch (const EvalFault& f) {
      finish_null(f.what());
      return;
    }
    if (!cfg.output_file.empty()) {
      std::ofstream out(cfg.output_file, std::ios::trunc);
      for (const auto& [k, v] : reduced)
        out << mrh::canon(k) << '\t' << mrh::canon(v) << '\n';
    }
    reply(job->client_conn, {{"type", "result"},
                             {"status", "ok"},
                             {"output", output},
                             {"reduced", pairs_to_json(reduced)},
                             {"error", ""}});
    job.reset();
    ++jobs_completed;
  }

  void pump() {
    if (!job) return;
    std::set<int> busy;
    for (const auto& m : job->maps)
      if (m.s == MapTask::S::running) busy.insert(m.runner);
    for (const auto& r : job->reduces)
      if (r.s == ReduceTask::S::running) busy.insert(r.runner);

    bool map_phase = job->maps_done < static_cast<int>(job->maps.size());
    for (auto& [wid, info] : workers) {
      if (busy.count(wid)) continue;
      if (map_phase) {
        int t = -1;
        for (std::size_t i = 0; i < job->maps.size(); ++i)
          if (job->maps[i].s == MapTask::S::idle) {
            t = static_cast<int>(i);
            break;
          }
        if (t < 0) continue;  // everything claimed; wait for completions
        job->maps[t].s = MapTask::S::running;
        job->maps[t].runner = wid;
        reply(info.conn, {{"type", "map_task"},
                          {"epoch", job->epoch},
                          {"task", t},
                          {"job", job->descriptor},
                          {"reducers", job->spec.num_reducers}});
      } else {
        int t = -1;
        for (std::size_t i = 0; i < job->reduces.size(); ++i)
          if (job->reduces[i].s == ReduceTask::S::idle) {
            t = static_cast<int>(i);
            break;
          }
        if (t < 0) continue;
        json sources = json::array();
        bool holders_ok = true;
        for (std::size_t m = 0; m < job->maps.size(); ++m) {
          int holder = job->maps[m].holder;
          auto it = workers.find(holder);
          if (job->maps[m].s != MapTask::S::done || it == workers.end()) {
            holders_ok = false;
            break;
          }
          sources.push_back({{"task", static_cast<int>(m)},
                             {"host", "127.0.0.1"},
                             {"port", it->second.fetch_port}});
        }
        if (!holders_ok) continue;  // a lost map is being re-run
        job->reduces[t].s = ReduceTask::S::running;
        job->reduces[t].runner = wid;
        reply(info.conn, {{"type", "reduce_task"},
                          {"epoch", job->epoch},
                          {"task", t},
                          {"job", job->descriptor},
                          {"sources", std::move(sources)}});
      }
    }
  }

  void worker_died(int wid) {
    auto it = workers.find(wid);
    if (it == workers.end()) return;
    std::uint64_t conn = it->second.conn;
    conn_to_wid.erase(conn);
    workers.erase(it);
    {
      std::lock_guard<std::mutex> lk(conns_mu);
      auto c = conn_fds.find(conn);
      if (c != conn_fds.end()) net::shutdown_fd(c->second);
    }
    if (job) {
      for (auto& m : job->maps) {
        if (m.s == MapTask::S::running && m.runner == wid) {
          m.s = MapTask::S::idle;
          m.runner = -1;
        } else if (m.s == MapTask::S::done && m.holder == wid) {
          // Its buckets are gone; any reduce still needing them re-fetches
          // from the re-execution.
          m.s = MapTask::S::idle;
          m.runner = -1;
          m.holder = -1;
          --job->maps_done;
        }
      }
      for (auto& r : job->reduces)
        if (r.s == ReduceTask::S::running && r.runner == wid) {
          r.s = ReduceTask::S::idle;
          r.runner = -1;
        }
      if (workers.empty() && !job->no_worker_since)
        job->no_worker_since = net::steady_ms();
    }
    pump();
  }

  void handle_submit(std::uint64_t conn, const json& doc) {
    auto send_error = [&](const std::string& e) {
      reply(conn, {{"type", "result"},
                   {"status", "error"},
                   {"output", json(nullptr)},
                   {"reduced", json::array()},
                   {"error", e}});
    };
    if (job) {
      send_error("a job is already running");
      return;
    }
    if (!doc.contains("job")) {
      send_error("submit needs a 'job' descriptor");
      return;
    }
    JobSpec spec;
    try {
      spec = jobs::job_from_descriptor(doc["job"]);
    } catch (const std::invalid_argument& e) {
      send_error(e.what());
      return;
    }
    JobRun run;
    run.epoch = ++epoch_counter;
    run.descriptor = doc["job"];
    run.spec = std::move(spec);
    run.client_conn = conn;
    job = std::move(run);

    // An ill-typed tree (a hostile mutant) is an execution fault: NULL.
    if (auto terr = jobs::typecheck_job(job->spec)) {
      finish_null("typecheck: " + *terr);
      return;
    }
    if (job->spec.splits.empty()) {
      // Nothing to map: the job completes with an empty reduction.
      finish_ok();
      return;
    }
    job->maps.resize(job->spec.splits.size());
    job->reduces.resize(static_cast<std::size_t>(job->spec.num_reducers));
    if (workers.empty()) job->no_worker_since = net::steady_ms();
    pump();
  }

  void handle_msg(std::uint64_t conn, const json& doc) {
    const std::string type = doc.value("type", "");
    std::int64_t now = net::steady_ms();

    if (type == "hello") {
      int wid = next_wid++;
      WorkerInfo info;
      info.conn = conn;
      info.fetch_port = doc.value("fetch_port", 0);
      info.last_hb = now;
      workers[wid] = info;
      conn_to_wid[conn] = wid;
      reply(conn, {{"type", "hello_ack"}, {"worker", wid}});
      if (job) job->no_worker_since.reset();
      pump();
      return;
    }
    if (type == "heartbeat") {
      auto it = conn_to_wid.find(conn);
      if (it != conn_to_wid.end()) workers[it->second].last_hb = now;
      return;
    }
    if (type == "submit") {
      handle_submit(conn, doc);
      return;
    }
    if (type == "status") {
      Status st;
      st.live_workers = static_cast<int>(workers.size());
      st.job_active = job.has_value();
      if (job) {
        st.maps_total = static_cast<int>(job->maps.size());
        st.maps_done = job->maps_done;
        st.reduces_total = static_cast<int>(job->reduces.size());
        st.reduces_done = job->reduces_done;
      }
      st.jobs_completed = jobs_completed;
      reply(conn, {{"type", "status_reply"},
                   {"live_workers", st.live_workers},
                   {"job_active", st.job_active},
                   {"maps_total", st.maps_total},
                   {"maps_done", st.maps_done},
                   {"reduces_total", st.reduces_total},
                   {"reduces_done", st.reduces_done},
                   {"jobs_completed", st.jobs_completed}});
      return;
    }

    // Task reports: only meaningful from a known worker about the live epoch.
    auto wit = conn_to_wid.find(conn);
    if (wit == conn_to_wid.end()) return;
    int wid = wit->second;
    if (!job || doc.value("epoch", std::int64_t(-1)) != job->epoch) return;
    workers[wid].last_hb = now;

    if (type == "map_done") {
      int t = doc.value("task", -1);
      if (t < 0 || t >= static_cast<int>(job->maps.size())) return;
      auto& m = job->maps[t];
      if (m.s != MapTask::S::running || m.runner != wid) return;
      m.s = MapTask::S::done;
      m.runner = -1;
      m.holder = wid;
      ++job->maps_done;
      pump();
      return;
    }
    if (type == "reduce_done") {
      int t = doc.value("task", -1);
      if (t < 0 || t >= static_cast<int>(job->reduces.size())) return;
      auto& r = job->reduces[t];
      if (r.s != ReduceTask::S::running || r.runner != wid) return;
      r.s = ReduceTask::S::done;
      r.runner = -1;
      r.pairs = pairs_from_json(doc.value("pairs", json::array()));
      ++job->reduces_done;
      if (job->reduces_done == static_cast<int>(job->reduces.size()))
        finish_ok();
      else
        pump();
      return;
    }
    if (type == "task_failed") {
      const std::string kind = doc.value("kind", "");
      if (kind == "fetch") {
        int t = doc.value("task", -1);
        if (t >= 0 && t < static_cast<int>(job->reduces.size())) {
          auto& r = job->reduces[t];
          if (r.s == ReduceTask::S::running && r.runner == wid) {
            r.s = ReduceTask::S::idle;
            r.runner = -1;
          }
        }
        for (const auto& lost : doc.value("lost_maps", json::array())) {
          if (!lost.is_number_integer()) continue;
          int m = lost.get<int>();
          if (m < 0 || m >= static_cast<int>(job->maps.size())) continue;
          if (job->maps[m].s == MapTask::S::done) {
            job->maps[m].s = MapTask::S::idle;
            job->maps[m].holder = -1;
            --job->maps_done;
          }
        }
        pump();
      } else {
        // An evaluation fault is a property of the job, not the schedule.
        finish_null(doc.value("error", "evaluation fault"));
      }
      return;
    }
  }

  void handle_closed(std::uint64_t conn) {
    auto wit = conn_to_wid.find(conn);
    if (wit != conn_to_wid.end()) {
      worker_died(wit->second);
    } else if (job && job->client_conn == conn) {
      // Nobody left to answer: drop the job; stale reports get ignored.
      job.reset();
    }
    drop_conn(conn);
  }

  void handle_tick() {
    std::int64_t now = net::steady_ms();
    std::vector<int> dead;
    for (const auto& [wid, info] : workers)
      if (now - info.last_hb >
          cfg.heartbeat_interval_ms * static_cast<std::int64_t>(cfg.miss_k))
        dead.push_back(wid);
    for (int wid : dead) worker_died(wid);

    if (job) {
      if (!workers.empty())
        job->no_worker_since.reset();
      else if (job->no_worker_since &&
               now - *job->no_worker_since >= cfg.stall_limit_ms)
        finish_null("no live workers within the stall limit");
    }
  }

  void run_loop() {
    for (;;) {
      Ev ev;
      {
        std::unique_lock<std::mutex> lk(ev_mu);
        ev_cv.wait(lk, [&] { return !events.empty(); });
        ev = std::move(events.front());
        events.pop_front();
      }
      switch (ev.k) {
        case Ev::K::msg: handle_msg(ev.conn, ev.doc); break;
        case Ev::K::conn_closed: handle_closed(ev.conn); break;
        case Ev::K::tick: handle_tick(); break;
        case Ev::K::stop:
          if (job) finish_null("master stopped");
          return;
      }
    }
  }
};

Master::Master(MasterConfig cfg) : cfg_(cfg) {}

Master::~Master() { stop(); }

bool Master::start(std::string* err) {
  if (impl_) return true;
  auto impl = std::make_unique<Impl>(cfg_);
  std::string e;
  impl->listen_fd = net::tcp_listen(cfg_.port, &e, &impl->port);
  if (impl->listen_fd < 0) {
    if (err) *err = e;
    return false;
  }
  port_ = impl->port;
  impl_ = std::move(impl);
  impl_->acceptor = std::thread([p = impl_.get()] { p->accept_loop(); });
  impl_->ticker = std::thread([p = impl_.get()] { p->tick_loop(); });
  impl_->loop = std::thread([p = impl_.get()] { p->run_loop(); });
  return true;
}

void Master::stop() {
  if (!impl_) return;
  impl_->closing = true;
  net::shutdown_fd(impl_->listen_fd);
  impl_->push(Impl::Ev{Impl::Ev::K::stop, 0, {}});
  if (impl_->loop.joinable()) impl_->loop.join();
  if (impl_->ticker.joinable()) impl_->ticker.join();
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  {
    std::lock_guard<std::mutex> lk(impl_->conns_mu);
    for (auto& [id, fd] : impl_->conn_fds) net::shutdown_fd(fd);
  }
  for (auto& t : impl_->readers)
    if (t.joinable()) t.join();
  {
    std::lock_guard<std::mutex> lk(impl_->conns_mu);
    for (auto& [id, fd] : impl_->conn_fds) net::close_fd(fd);
    impl_->conn_fds.clear();
  }
  net::close_fd(impl_->listen_fd);
  impl_.reset();
}

// ===== Worker ================================================================

struct Worker::Impl {
  explicit Impl(WorkerConfig c) : cfg(c) {}

  WorkerConfig cfg;
  int control_fd = -1;
  int fetch_listen_fd = -1;
  int fetch_port = 0;
  std::atomic<bool> closing{false};
  std::atomic<bool> hb_suspended{false};

  std::thread control_reader, hb_thread, executor, fetch_server;

  std::mutex send_mu;
  bool send_ok = true;

  std::mutex task_mu;
  std::condition_variable task_cv;
  std::deque<json> tasks;

  std::mutex store_mu;
  // (epoch, map task) -> per-partition pair lists
  std::map<std::pair<std::int64_t, int>,
           std::vector<std::vector<std::pair<json, json>>>>
      store;

  std::mutex job_mu;
  std::string job_key;
  std::optional<JobSpec> job_cached;

  void send(const json& doc) {
    std::lock_guard<std::mutex> lk(send_mu);
    if (control_fd < 0 || closing) return;
    if (!send_doc(control_fd, doc)) send_ok = false;
  }

  JobSpec job_for(const json& descriptor) {
    std::string key = mrh::canon(descriptor);
    std::lock_guard<std::mutex> lk(job_mu);
    if (job_cached && job_key == key) return *job_cached;
    JobSpec spec = jobs::job_from_descriptor(descriptor);  // throws
    job_key = key;
    job_cached = spec;
    return spec;
  }

  void control_loop() {
    for (;;) {
      auto body = net::read_frame(control_fd);
      if (!body) break;
      json doc = parse_or_null(*body);
      if (!doc.is_object()) continue;
      const std::string type = doc.value("type", "");
      if (type == "map_task" || type == "reduce_task") {
        std::lock_guard<std::mutex> lk(task_mu);
        tasks.push_back(std::move(doc));
        task_cv.notify_all();
      }
      // hello_ack needs no action
    }
    // master gone: stop pushing work; the process-level owner decides
    // whether to exit.
    std::lock_guard<std::mutex> lk(task_mu);
    task_cv.notify_all();
  }

  void hb_loop() {
    std::int64_t step = std::max<std::int64_t>(5, cfg.heartbeat_interval_ms);
    std::int64_t next = net::steady_ms() + step;
    while (!closing) {
      proc_sleep(10);
      if (net::steady_ms() < next) continue;
      next += step;
      if (!hb_suspended) send({{"type", "heartbeat"}});
    }
  }

  static void proc_sleep(std::int64_t ms) {
    struct timespec ts;
    ts.tv_sec = ms / 1000;
    ts.tv_nsec = (ms % 1000) * 1000000;
    ::nanosleep(&ts, nullptr);
  }

  void run_map_task(const json& doc) {
    std::int64_t epoch = doc.value("epoch", std::int64_t(0));
    int task = doc.value("task", -1);
    int reducers = doc.value("reducers", 1);
    try {
      JobSpec spec = job_for(doc.at("job"));
      jobs::EmitSink emitted = jobs::run_map(spec, task);
      std::vector<std::vector<std::pair<json, json>>> buckets(
          static_cast<std::size_t>(std::max(1, reducers)));
      for (auto& kv : emitted)
        buckets[static_cast<std::size_t>(
                    jobs::partition_of(kv.first, reducers))]
            .push_back(std::move(kv));
      {
        std::lock_guard<std::mutex> lk(store_mu);
        store[{epoch, task}] = std::move(buckets);
      }
      send({{"type", "map_done"}, {"epoch", epoch}, {"task", task}});
    } catch (const EvalFault& f) {
      send({{"type", "task_failed"},
            {"epoch", epoch},
            {"task", task},
            {"kind", "map"},
            {"error", f.what()}});
    } catch (const std::exception& e) {
      send({{"type", "task_failed"},
            {"epoch", epoch},
            {"task", task},
            {"kind", "map"},
            {"error", e.what()}});
    }
  }

  void run_reduce_task(const json& doc) {
    std::int64_t epoch = doc.value("epoch", std::int64_t(0));
    int task = doc.value("task", -1);
    try {
      JobSpec spec = job_for(doc.at("job"));
      std::vector<std::pair<json, json>> gathered;
      for (const auto& src : doc.value("sources", json::array())) {
        int map_task = src.value("task", -1);
        std::string host = src.value("host", "127.0.0.1");
        int port = src.value("port", 0);
        std::string err;
        int fd = net::tcp_connect(host, port, cfg.fetch_timeout_ms, &err);
        bool got = false;
        if (fd >= 0) {
          if (send_doc(fd, {{"type", "fetch"},
                            {"epoch", epoch},
                            {"task", map_task},
                            {"partition", task}})) {
            auto body =
                read_frame_until(fd, net::steady_ms() + cfg.fetch_timeout_ms);
            if (body) {
              json rep = parse_or_null(*body);
              if (rep.is_object() && rep.value("ok", false)) {
                for (auto& kv : pairs_from_json(rep.value("pairs", json::array())))
                  gathered.push_back(std::move(kv));
                got = true;
              }
            }
          }
          net::close_fd(fd);
        }
        if (!got) {
          send({{"type", "task_failed"},
                {"epoch", epoch},
                {"task", task},
                {"kind", "fetch"},
                {"error", "bucket fetch failed"},
                {"lost_maps", json::array({map_task})}});
          return;
        }
      }
      std::vector<std::pair<json, json>> out;
      for (const auto& [key, values] : jobs::group_pairs(gathered))
        out.emplace_back(key, jobs::run_reduce(spec, key, values));
      send({{"type", "reduce_done"},
            {"epoch", epoch},
            {"task", task},
            {"pairs", pairs_to_json(out)}});
    } catch (const EvalFault& f) {
      send({{"type", "task_failed"},
            {"epoch", epoch},
            {"task", task},
            {"kind", "reduce"},
            {"error", f.what()}});
    } catch (const std::exception& e) {
      send({{"type", "task_failed"},
            {"epoch", epoch},
            {"task", task},
            {"kind", "reduce"},
            {"error", e.what()}});
    }
  }

  void executor_loop() {
    for (;;) {
      json doc;
      {
        std::unique_lock<std::mutex> lk(task_mu);
        task_cv.wait_for(lk, std::chrono::milliseconds(50),
                         [&] { return !tasks.empty() || closing.load(); });
        if (closing) return;
        if (tasks.empty()) continue;
        doc = std::move(tasks.front());
        tasks.pop_front();
      }
      if (doc.value("type", "") == "map_task")
        run_map_task(doc);
      else
        run_reduce_task(doc);
    }
  }

  void fetch_loop() {
    for (;;) {
      int fd = ::accept(fetch_listen_fd, nullptr, nullptr);
      if (fd < 0) return;
      // One request per connection, served inline, bounded read.
      auto body = read_frame_until(fd, net::steady_ms() + 2000);
      if (body) {
        json doc = parse_or_null(*body);
        json reply = {{"type", "bucket"}, {"ok", false}};
        if (doc.is_object() && doc.value("type", "") == "fetch") {
          std::int64_t epoch = doc.value("epoch", std::int64_t(0));
          int task = doc.value("task", -1);
          int part = doc.value("partition", -1);
          std::lock_guard<std::mutex> lk(store_mu);
          auto it = store.find({epoch, task});
          if (it != store.end() && part >= 0 &&
              part < static_cast<int>(it->second.size()))
            reply = {{"type", "bucket"},
                     {"ok", true},
                     {"pairs", pairs_to_json(it->second[part])}};
        }
        send_doc(fd, reply);
      }
      net::close_fd(fd);
    }
  }

  void shutdown_everything() {
    closing = true;
    {
      std::lock_guard<std::mutex> lk(send_mu);
      net::shutdown_fd(control_fd);
    }
    net::shutdown_fd(fetch_listen_fd);
    task_cv.notify_all();
  }

  void join_all() {
    if (control_reader.joinable()) control_reader.join();
    if (hb_thread.joinable()) hb_thread.join();
    if (executor.joinable()) executor.join();
    if (fetch_server.joinable()) fetch_server.join();
    net::close_fd(control_fd);
    net::close_fd(fetch_listen_fd);
    control_fd = -1;
    fetch_listen_fd = -1;
  }
};

Worker::Worker(WorkerConfig cfg) : cfg_(cfg) {}

Worker::~Worker() {
  if (impl_) {
    impl_->shutdown_everything();
    impl_->join_all();
    impl_.reset();
  }
}

bool Worker::start(std::string* err) {
  if (impl_) return true;
  auto impl = std::make_unique<Impl>(cfg_);
  std::string e;
  impl->fetch_listen_fd = net::tcp_listen(0, &e, &impl->fetch_port);
  if (impl->fetch_listen_fd < 0) {
    if (err) *err = "fetch listener: " + e;
    return false;
  }
  std::int64_t give_up = net::steady_ms() + cfg_.connect_timeout_ms;
  for (;;) {
    impl->control_fd =
        net::tcp_connect(cfg_.master_host, cfg_.master_port, 1000, &e);
    if (impl->control_fd >= 0 || net::steady_ms() >= give_up) break;
    Impl::proc_sleep(50);
  }
  if (impl->control_fd < 0) {
    if (err) *err = "master connect: " + e;
    net::close_fd(impl->fetch_listen_fd);
    return false;
  }
  impl_ = std::move(impl);
  impl_->send({{"type", "hello"}, {"fetch_port", impl_->fetch_port}});
  impl_->control_reader =
      std::thread([p = impl_.get()] { p->control_loop(); });
  impl_->hb_thread = std::thread([p = impl_.get()] { p->hb_loop(); });
  impl_->executor = std::thread([p = impl_.get()] { p->executor_loop(); });
  impl_->fetch_server = std::thread([p = impl_.get()] { p->fetch_loop(); });
  return true;
}

void Worker::stop() {
  if (!impl_) return;
  impl_->shutdown_everything();
  impl_->join_all();
  impl_.reset();
}

void Worker::crash() {
  if (!impl_) return;
  impl_->shutdown_everything();
  impl_->join_all();
  {
    std::lock_guard<std::mutex> lk(impl_->store_mu);
    impl_->store.clear();
  }
  impl_.reset();
}

void Worker::suspend_heartbeats(bool on) {
  if (impl_) impl_->hb_suspended = on;
}

// ===== client calls ==========================================================

SubmitResult submit_job(const std::string& host, int port,
                        const json& descriptor, std::int64_t timeout_ms) {
  SubmitResult res;
  std::int64_t deadline = net::steady_ms() + timeout_ms;
  std::string err;
  int fd = net::tcp_connect(host, port, std::min<std::int64_t>(timeout_ms, 3000),
                            &err);
  if (fd < 0) {
    res.error = "cannot reach engine master: " + err;
    return res;
  }
  if (!send_doc(fd, {{"type", "submit"}, {"job", descriptor}})) {
    res.error = "submit write failed";
    net::close_fd(fd);
    return res;
  }
  auto body = read_frame_until(fd, deadline);
  net::close_fd(fd);
  if (!body) {
    res.error = net::steady_ms() >= deadline ? "timed out waiting for result"
                                             : "connection lost";
    return res;
  }
  json doc = parse_or_null(*body);
  if (!doc.is_object() || doc.value("type", "") != "result") {
    res.error = "malformed result";
    return res;
  }
  res.transport_ok = true;
  res.status = doc.value("status", "");
  res.output = doc.contains("output") ? doc["output"] : json(nullptr);
  res.reduced = pairs_from_json(doc.value("reduced", json::array()));
  res.error = doc.value("error", "");
  return res;
}

std::optional<Status> query_status(const std::string& host, int port,
                                   std::int64_t timeout_ms) {
  std::string err;
  int fd = net::tcp_connect(host, port, timeout_ms, &err);
  if (fd < 0) return std::nullopt;
  if (!send_doc(fd, {{"type", "status"}})) {
    net::close_fd(fd);
    return std::nullopt;
  }
  auto body = read_frame_until(fd, net::steady_ms() + timeout_ms);
  net::close_fd(fd);
  if (!body) return std::nullopt;
  json doc = parse_or_null(*body);
  if (!doc.is_object() || doc.value("type", "") != "status_reply")
    return std::nullopt;
  Status st;
  st.live_workers = doc.value("live_workers", 0);
  st.job_active = doc.value("job_active", false);
  st.maps_total = doc.value("maps_total", 0);
  st.maps_done = doc.value("maps_done", 0);
  st.reduces_total = doc.value("reduces_total", 0);
  st.reduces_done = doc.value("reduces_done", 0);
  st.jobs_completed = doc.value("jobs_completed", std::int64_t(0));
  return st;
}

// ===== LocalCluster ==========================================================

bool LocalCluster::start(int n_workers, MasterConfig mcfg, WorkerConfig wcfg) {
  mcfg.port = 0;
  master = std::make_unique<Master>(mcfg);
  std::string err;
  if (!master->start(&err)) return false;
  port = master->port();
  for (int i = 0; i < n_workers; ++i)
    if (!add_worker(wcfg)) return false;
  return true;
}

bool LocalCluster::add_worker(WorkerConfig wcfg) {
  wcfg.master_port = port;
  auto w = std::make_unique<Worker>(wcfg);
  std::string err;
  if (!w->start(&err)) return false;
  workers.push_back(std::move(w));
  return true;
}

SubmitResult LocalCluster::submit(const json& descriptor,
                                  std::int64_t timeout_ms) {
  return submit_job("127.0.0.1", port, descriptor, timeout_ms);
}

void LocalCluster::crash_worker(std::size_t i) {
  if (i < workers.size() && workers[i]) workers[i]->crash();
}

std::optional<Status> LocalCluster::status() {
  return query_status("127.0.0.1", port);
}

void LocalCluster::stop() {
  workers.clear();
  if (master) master->stop();
  master.reset();
}

}  // namespace mrh::minimr
