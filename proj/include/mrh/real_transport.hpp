#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "mrh/transport.hpp"

namespace mrh::transport {

// Coordinator endpoint on a real TCP listener (loopback). Peers connect and
// identify themselves with the sender field of their first frame; one
// reader thread per connection feeds a single inbound queue.
class TcpCoordinatorSession : public Session {
 public:
  // Throws std::runtime_error when the port cannot be bound. port 0 binds an
  // ephemeral port, readable via port().
  explicit TcpCoordinatorSession(int port, std::string self = "coordinator");
  ~TcpCoordinatorSession() override;

  TcpCoordinatorSession(const TcpCoordinatorSession&) = delete;
  TcpCoordinatorSession& operator=(const TcpCoordinatorSession&) = delete;

  int port() const { return port_; }
  void close();

  std::string self() const override { return self_; }
  std::int64_t now_ms() override;
  void send(const std::string& to, Kind kind, json payload) override;
  Event wait(std::int64_t deadline_ms) override;
  bool peer_open(const std::string& peer) const override;

 private:
  void accept_loop();
  void reader_loop(int fd);

  std::string self_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::thread acceptor_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> inbound_;
  std::map<std::string, int> conns_;           // peer -> fd
  std::map<std::string, std::uint64_t> seqs_;  // recipient -> last seq
  std::set<std::string> closed_peers_;
  std::vector<std::thread> readers_;
  std::vector<int> anon_fds_;  // accepted, not yet identified
  std::vector<int> dead_fds_;  // EOF'd; closed when the session closes
  bool closing_ = false;
};

// One tester's connection to the coordinator: blocking receive with a
// deadline, thread-safe send.
class TcpPeerChannel {
 public:
  // Retries the connect until `connect_timeout_ms` elapses.
  TcpPeerChannel(const std::string& host, int port, std::string self,
                 std::int64_t connect_timeout_ms);
  ~TcpPeerChannel();

  TcpPeerChannel(const TcpPeerChannel&) = delete;
  TcpPeerChannel& operator=(const TcpPeerChannel&) = delete;

  bool connected() const { return fd_ >= 0; }
  std::string error() const { return error_; }

  void send(Kind kind, json payload);
  // nullopt on deadline (absolute steady_ms) or when the peer is gone; use
  // closed() to tell the two apart. No deadline = wait indefinitely.
  std::optional<Message> recv(std::optional<std::int64_t> deadline_ms);
  bool closed() const;
  void close();

 private:
  void reader_loop();

  std::string self_;
  int fd_ = -1;
  std::string error_;
  std::thread reader_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> inbound_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

}  // namespace mrh::transport
