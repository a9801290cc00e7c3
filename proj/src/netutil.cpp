#include "mrh/netutil.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace mrh::net {

namespace {

void set_err(std::string* err, const std::string& what) {
  if (err) *err = what + ": " + std::strerror(errno);
}

bool set_nonblocking(int fd, bool on) {
  int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0) return false;
  if (on)
    flags |= O_NONBLOCK;
  else
    flags &= ~O_NONBLOCK;
  return fcntl(fd, F_SETFL, flags) == 0;
}

}  // namespace

int tcp_listen(int port, std::string* err, int* bound_port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    set_err(err, "socket");
    return -1;
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    set_err(err, "bind");
    ::close(fd);
    return -1;
  }
  if (::listen(fd, 64) < 0) {
    set_err(err, "listen");
    ::close(fd);
    return -1;
  }
  if (bound_port) {
    sockaddr_in got{};
    socklen_t len = sizeof(got);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&got), &len) == 0)
      *bound_port = ntohs(got.sin_port);
  }
  return fd;
}

int tcp_connect(const std::string& host, int port, std::int64_t timeout_ms,
                std::string* err) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    set_err(err, "socket");
    return -1;
  }
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    if (host == "localhost") {
      ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    } else {
      if (err) *err = "unsupported host '" + host + "' (IPv4 literals only)";
      ::close(fd);
      return -1;
    }
  }
  if (!set_nonblocking(fd, true)) {
    set_err(err, "fcntl");
    ::close(fd);
    return -1;
  }
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  if (rc != 0 && errno != EINPROGRESS) {
    set_err(err, "connect");
    ::close(fd);
    return -1;
  }
  if (rc != 0) {
    pollfd pfd{fd, POLLOUT, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
    if (pr <= 0) {
      if (err) *err = pr == 0 ? "connect timed out" : "poll failed";
      ::close(fd);
      return -1;
    }
    int soerr = 0;
    socklen_t len = sizeof(soerr);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
    if (soerr != 0) {
      if (err) *err = std::string("connect: ") + std::strerror(soerr);
      ::close(fd);
      return -1;
    }
  }
  set_nonblocking(fd, false);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

bool send_all(int fd, std::string_view bytes) {
  const char* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    ssize_t n = ::send(fd, p, left, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  return true;
}

bool recv_exact(int fd, char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<std::string> read_frame(int fd) {
  unsigned char hdr[4];
  if (!recv_exact(fd, reinterpret_cast<char*>(hdr), 4)) return std::nullopt;
  std::uint32_t len = (static_cast<std::uint32_t>(hdr[0]) << 24) |
                      (static_cast<std::uint32_t>(hdr[1]) << 16) |
                      (static_cast<std::uint32_t>(hdr[2]) << 8) |
                      static_cast<std::uint32_t>(hdr[3]);
  if (len > 64u * 1024u * 1024u) return std::nullopt;
  std::string body(len, '\0');
  if (len > 0 && !recv_exact(fd, body.data(), len)) return std::nullopt;
  return body;
}

bool write_frame(int fd, std::string_view body) {
  std::uint32_t len = static_cast<std::uint32_t>(body.size());
  char hdr[4] = {static_cast<char>((len >> 24) & 0xff),
                 static_cast<char>((len >> 16) & 0xff),
                 static_cast<char>((len >> 8) & 0xff),
                 static_cast<char>(len & 0xff)};
  if (!send_all(fd, std::string_view(hdr, 4))) return false;
  return send_all(fd, body);
}

int pick_free_port() {
  std::string err;
  int port = 0;
  int fd = tcp_listen(0, &err, &port);
  if (fd < 0) return -1;
  ::close(fd);
  return port;
}

void close_fd(int fd) {
  if (fd >= 0) ::close(fd);
}

void shutdown_fd(int fd) {
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

std::int64_t steady_ms() {
  using namespace std::chrono;
  static const steady_clock::time_point epoch = steady_clock::now();
  return duration_cast<milliseconds>(steady_clock::now() - epoch).count();
}

std::optional<std::pair<std::string, int>> split_host_port(
    const std::string& s) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
    return std::nullopt;
  std::string host = s.substr(0, colon);
  int port = 0;
  for (size_t i = colon + 1; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    port = port * 10 + (s[i] - '0');
    if (port > 65535) return std::nullopt;
  }
  if (port == 0) return std::nullopt;
  return std::make_pair(host, port);
}

}  // namespace mrh::net
