#pragma once

#include <sys/types.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Child-process plumbing for the tester agents: spawn engine nodes, probe
// liveness, kill abruptly (fault injection) or gracefully (teardown).
// Every child is reaped here; nothing leaks zombies.

namespace mrh::proc {

struct Child {
  pid_t pid = -1;
  std::string desc;
  bool reaped() const { return pid < 0; }
};

// Absolute path of the running binary (for re-exec'ing node roles).
std::string self_exe();

std::optional<Child> spawn(const std::vector<std::string>& argv,
                           std::string* err, std::string desc = "");

// True while the process exists un-reaped (non-blocking waitpid probe).
bool alive(Child& c);

// SIGKILL + reap. Safe on already-gone children.
void kill_hard(Child& c);

// SIGTERM, wait up to grace_ms, then SIGKILL. Reaps. Returns true when the
// child exited within the grace window.
bool stop_graceful(Child& c, std::int64_t grace_ms);

// Reap with a bounded wait; the raw waitpid status, nullopt on timeout.
std::optional<int> wait_exit(Child& c, std::int64_t timeout_ms);

void sleep_ms(std::int64_t ms);

}  // namespace mrh::proc
