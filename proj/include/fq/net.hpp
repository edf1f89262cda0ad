#pragma once
// Minimal blocking TCP helpers for the framed protocol: a listener, a
// connector, and a per-connection wrapper that sends/receives whole messages.

#include <optional>
#include <string>

#include "fq/wire.hpp"

namespace fq {

// All throw Error("NetFail", ...) on failure.
int tcp_listen(const std::string& host, int port);  // returns listening fd
int tcp_accept(int listen_fd);                      // blocking; returns conn fd
int tcp_connect(const std::string& host, int port);
int bound_port(int fd);  // actual port (useful after binding port 0)

class Conn {
public:
  explicit Conn(int fd) : fd_(fd) {}
  ~Conn();
  Conn(const Conn&) = delete;
  Conn& operator=(const Conn&) = delete;
  Conn(Conn&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }

  void send(const Message& m);
  // Blocks until one full message arrives; nullopt on EOF/reset.
  std::optional<Message> recv();
  // Same with a poll timeout; nullopt on timeout or EOF (eof flag set on EOF).
  std::optional<Message> recv_timeout(int timeout_ms, bool* eof = nullptr);

  int fd() const { return fd_; }
  void close_now();

private:
  int fd_;
  FrameReader reader_;
};

}  // namespace fq
