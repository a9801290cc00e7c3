#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// Thin POSIX socket helpers shared by the harness control plane and the
// engine's data plane. All frames on both planes are 4-byte big-endian
// length prefix + body.

namespace mrh::net {

// Returns a listening fd, or -1 with *err set. port 0 picks an ephemeral
// port; *bound_port (when given) receives the actual one.
int tcp_listen(int port, std::string* err, int* bound_port = nullptr);

// Connect with a bounded wait; -1 with *err set on failure.
int tcp_connect(const std::string& host, int port, std::int64_t timeout_ms,
                std::string* err);

bool send_all(int fd, std::string_view bytes);
bool recv_exact(int fd, char* buf, std::size_t n);

// One frame body; nullopt on EOF or error.
std::optional<std::string> read_frame(int fd);
bool write_frame(int fd, std::string_view body);

// Bind-then-release probe for tests that need a likely-free port.
int pick_free_port();

void close_fd(int fd);
// Unblocks any thread sitting in recv on fd.
void shutdown_fd(int fd);

// Steady-clock milliseconds since process start.
std::int64_t steady_ms();

// "host:port" -> pair; nullopt when malformed.
std::optional<std::pair<std::string, int>> split_host_port(
    const std::string& s);

}  // namespace mrh::net
