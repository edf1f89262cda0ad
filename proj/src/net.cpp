#include "fq/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace fq {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error("NetFail", what + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error("NetFail", "bad IPv4 address: " + host);
  }
  return addr;
}

}  // namespace

int tcp_listen(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    fail("bind");
  }
  if (::listen(fd, 128) != 0) {
    ::close(fd);
    fail("listen");
  }
  return fd;
}

int tcp_accept(int listen_fd) {
  for (;;) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd >= 0) return fd;
    if (errno == EINTR) continue;
    fail("accept");
  }
}

int tcp_connect(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail("socket");
  sockaddr_in addr = make_addr(host.empty() ? "127.0.0.1" : host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    fail("connect");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

int bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
  return static_cast<int>(ntohs(addr.sin_port));
}

Conn::~Conn() { close_now(); }

void Conn::close_now() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Conn::send(const Message& m) {
  std::string frame = encode_frame(m);
  std::size_t off = 0;
  while (off < frame.size()) {
    ssize_t n = ::write(fd_, frame.data() + off, frame.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write");
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<Message> Conn::recv() {
  char buf[65536];
  for (;;) {
    if (auto body = reader_.next()) return parse_message(*body);
    ssize_t n = ::read(fd_, buf, sizeof(buf));
    if (n == 0) return std::nullopt;
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) return std::nullopt;
      fail("read");
    }
    reader_.feed(buf, static_cast<std::size_t>(n));
  }
}

std::optional<Message> Conn::recv_timeout(int timeout_ms, bool* eof) {
  if (eof) *eof = false;
  char buf[65536];
  for (;;) {
    if (auto body = reader_.next()) return parse_message(*body);
    pollfd pfd{fd_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) return std::nullopt;  // timeout
    if (pr < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    ssize_t n = ::read(fd_, buf, sizeof(buf));
    if (n == 0) {
      if (eof) *eof = true;
      return std::nullopt;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) {
        if (eof) *eof = true;
        return std::nullopt;
      }
      fail("read");
    }
    reader_.feed(buf, static_cast<std::size_t>(n));
  }
}

}  // namespace fq
