#include "mrh/procutil.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

extern char** environ;

namespace mrh::proc {

std::string self_exe() {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return "";
  buf[n] = '\0';
  return buf;
}

std::optional<Child> spawn(const std::vector<std::string>& argv,
                           std::string* err, std::string desc) {
  if (argv.empty()) {
    if (err) *err = "empty argv";
    return std::nullopt;
  }
  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, cargv[0], nullptr, nullptr, cargv.data(),
                         environ);
  if (rc != 0) {
    if (err) *err = std::string("posix_spawn: ") + std::strerror(rc);
    return std::nullopt;
  }
  return Child{pid, desc.empty() ? argv[0] : std::move(desc)};
}

bool alive(Child& c) {
  if (c.pid < 0) return false;
  int status = 0;
  pid_t r = ::waitpid(c.pid, &status, WNOHANG);
  if (r == c.pid) {
    c.pid = -1;  // reaped here
    return false;
  }
  if (r < 0 && errno == ECHILD) {
    c.pid = -1;
    return false;
  }
  return true;
}

void sleep_ms(std::int64_t ms) {
  if (ms <= 0) return;
  struct timespec ts;
  ts.tv_sec = ms / 1000;
  ts.tv_nsec = (ms % 1000) * 1000000;
  while (::nanosleep(&ts, &ts) != 0 && errno == EINTR) {
  }
}

std::optional<int> wait_exit(Child& c, std::int64_t timeout_ms) {
  if (c.pid < 0) return 0;
  std::int64_t waited = 0;
  for (;;) {
    int status = 0;
    pid_t r = ::waitpid(c.pid, &status, WNOHANG);
    if (r == c.pid) {
      c.pid = -1;
      return status;
    }
    if (r < 0 && errno == ECHILD) {
      c.pid = -1;
      return 0;
    }
    if (waited >= timeout_ms) return std::nullopt;
    sleep_ms(10);
    waited += 10;
  }
}

void kill_hard(Child& c) {
  if (c.pid < 0) return;
  ::kill(c.pid, SIGKILL);
  int status = 0;
  ::waitpid(c.pid, &status, 0);
  c.pid = -1;
}

bool stop_graceful(Child& c, std::int64_t grace_ms) {
  if (c.pid < 0) return true;
  ::kill(c.pid, SIGTERM);
  if (wait_exit(c, grace_ms)) return true;
  kill_hard(c);
  return false;
}

}  // namespace mrh::proc
