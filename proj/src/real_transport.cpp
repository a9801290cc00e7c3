#include "mrh/real_transport.hpp"

#include <sys/socket.h>

#include <chrono>
#include <stdexcept>

#include "mrh/netutil.hpp"

namespace mrh::transport {

// ---- TcpCoordinatorSession -------------------------------------------------

TcpCoordinatorSession::TcpCoordinatorSession(int port, std::string self)
    : self_(std::move(self)) {
  std::string err;
  listen_fd_ = net::tcp_listen(port, &err, &port_);
  if (listen_fd_ < 0)
    throw std::runtime_error("cannot listen on port " + std::to_string(port) +
                             " (" + err + ")");
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpCoordinatorSession::~TcpCoordinatorSession() { close(); }

void TcpCoordinatorSession::close() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (closing_) return;
    closing_ = true;
    net::shutdown_fd(listen_fd_);
    for (auto& [peer, fd] : conns_) net::shutdown_fd(fd);
    for (int fd : anon_fds_) net::shutdown_fd(fd);
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard<std::mutex> lk(mu_);
    readers.swap(readers_);
  }
  for (auto& t : readers)
    if (t.joinable()) t.join();
  {
    std::lock_guard<std::mutex> lk(mu_);
    for (auto& [peer, fd] : conns_) net::close_fd(fd);
    for (int fd : anon_fds_) net::close_fd(fd);
    for (int fd : dead_fds_) net::close_fd(fd);
    conns_.clear();
    anon_fds_.clear();
    dead_fds_.clear();
    net::close_fd(listen_fd_);
    listen_fd_ = -1;
  }
}

void TcpCoordinatorSession::accept_loop() {
  for (;;) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;  // listener shut down
    std::lock_guard<std::mutex> lk(mu_);
    if (closing_) {
      net::close_fd(fd);
      return;
    }
    anon_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { reader_loop(fd); });
  }
}

void TcpCoordinatorSession::reader_loop(int fd) {
  std::string peer;
  for (;;) {
    auto body = net::read_frame(fd);
    if (!body) break;
    Message m;
    try {
      json doc = json::parse(*body);
      std::string err;
      auto parsed = message_from_json(doc, &err);
      if (!parsed) continue;  // not ours; drop the frame
      m = std::move(*parsed);
    } catch (const json::exception&) {
      continue;
    }
    std::lock_guard<std::mutex> lk(mu_);
    if (peer.empty()) {
      peer = m.sender;
      // A reconnecting name keeps the newest socket.
      auto it = conns_.find(peer);
      if (it != conns_.end()) net::shutdown_fd(it->second);
      conns_[peer] = fd;
      closed_peers_.erase(peer);
      std::erase(anon_fds_, fd);
    }
    inbound_.push_back(Event{Event::Type::message, std::move(m), {}});
    cv_.notify_all();
  }
  std::lock_guard<std::mutex> lk(mu_);
  if (!peer.empty() && conns_.count(peer) && conns_[peer] == fd) {
    conns_.erase(peer);
    closed_peers_.insert(peer);
    inbound_.push_back(Event{Event::Type::peer_closed, {}, peer});
    cv_.notify_all();
  } else {
    std::erase(anon_fds_, fd);
  }
  // Deferred close: a send() may have copied this fd moments ago.
  dead_fds_.push_back(fd);
}

std::int64_t TcpCoordinatorSession::now_ms() { return net::steady_ms(); }

void TcpCoordinatorSession::send(const std::string& to, Kind kind,
                                 json payload) {
  Message m;
  m.kind = kind;
  m.sender = self_;
  m.recipient = to;
  m.payload = std::move(payload);
  int fd = -1;
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = conns_.find(to);
    if (it == conns_.end()) return;  // unknown or departed peer
    m.seq = ++seqs_[to];
    fd = it->second;
  }
  // One writer (the coordinator loop) per session, so no per-fd write lock.
  net::send_all(fd, encode_frame(m));
}

Event TcpCoordinatorSession::wait(std::int64_t deadline_ms) {
  using namespace std::chrono;
  std::unique_lock<std::mutex> lk(mu_);
  for (;;) {
    if (!inbound_.empty()) {
      Event ev = std::move(inbound_.front());
      inbound_.pop_front();
      return ev;
    }
    std::int64_t now = net::steady_ms();
    if (now >= deadline_ms) return Event{Event::Type::deadline, {}, {}};
    cv_.wait_for(lk, milliseconds(std::min<std::int64_t>(deadline_ms - now, 50)));
  }
}

bool TcpCoordinatorSession::peer_open(const std::string& peer) const {
  std::lock_guard<std::mutex> lk(mu_);
  return !closed_peers_.count(peer);
}

// ---- TcpPeerChannel ----------------------------------------------------------

TcpPeerChannel::TcpPeerChannel(const std::string& host, int port,
                               std::string self,
                               std::int64_t connect_timeout_ms)
    : self_(std::move(self)) {
  std::int64_t give_up = net::steady_ms() + connect_timeout_ms;
  for (;;) {
    std::string err;
    fd_ = net::tcp_connect(host, port, 1000, &err);
    if (fd_ >= 0) break;
    error_ = err;
    if (net::steady_ms() >= give_up) return;
    struct timespec ts {0, 100 * 1000 * 1000};
    nanosleep(&ts, nullptr);
  }
  reader_ = std::thread([this] { reader_loop(); });
}

TcpPeerChannel::~TcpPeerChannel() { close(); }

void TcpPeerChannel::close() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (fd_ >= 0) net::shutdown_fd(fd_);
  }
  if (reader_.joinable()) reader_.join();
  std::lock_guard<std::mutex> lk(mu_);
  if (fd_ >= 0) {
    net::close_fd(fd_);
    fd_ = -1;
  }
  closed_ = true;
}

void TcpPeerChannel::reader_loop() {
  for (;;) {
    auto body = net::read_frame(fd_);
    if (!body) break;
    try {
      json doc = json::parse(*body);
      std::string err;
      auto m = message_from_json(doc, &err);
      if (!m) continue;
      std::lock_guard<std::mutex> lk(mu_);
      inbound_.push_back(std::move(*m));
      cv_.notify_all();
    } catch (const json::exception&) {
    }
  }
  std::lock_guard<std::mutex> lk(mu_);
  closed_ = true;
  cv_.notify_all();
}

void TcpPeerChannel::send(Kind kind, json payload) {
  Message m;
  m.kind = kind;
  m.sender = self_;
  m.recipient = "coordinator";
  m.payload = std::move(payload);
  std::lock_guard<std::mutex> lk(mu_);
  if (fd_ < 0 || closed_) return;
  m.seq = ++seq_;
  net::send_all(fd_, encode_frame(m));
}

std::optional<Message> TcpPeerChannel::recv(
    std::optional<std::int64_t> deadline_ms) {
  using namespace std::chrono;
  std::unique_lock<std::mutex> lk(mu_);
  for (;;) {
    if (!inbound_.empty()) {
      Message m = std::move(inbound_.front());
      inbound_.pop_front();
      return m;
    }
    if (closed_) return std::nullopt;
    if (deadline_ms) {
      std::int64_t now = net::steady_ms();
      if (now >= *deadline_ms) return std::nullopt;
      cv_.wait_for(lk, milliseconds(std::min<std::int64_t>(*deadline_ms - now, 50)));
    } else {
      cv_.wait_for(lk, milliseconds(50));
    }
  }
}

bool TcpPeerChannel::closed() const {
  std::lock_guard<std::mutex> lk(mu_);
  return closed_;
}

}  // namespace mrh::transport
