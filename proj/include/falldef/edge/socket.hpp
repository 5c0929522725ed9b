#pragma once

// Thin RAII wrapper over POSIX stream sockets, plus a line reader.

#include <chrono>
#include <optional>
#include <string>

namespace falldef::edge {

struct HostPort {
  std::string host;
  unsigned short port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port" (host may be empty, meaning all interfaces).
HostPort parse_host_port(const std::string& text);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  static Socket listen_on(const HostPort& addr, int backlog = 16);
  static Socket connect_to(const HostPort& addr);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();
  /// Half-close: no more writes from this side.
  void shutdown_write();
  /// Wakes any thread blocked in recv/accept on this socket.
  void shutdown_both();

  unsigned short local_port() const;
  /// Waits up to `timeout` for an incoming connection; empty on timeout.
  std::optional<Socket> accept_for(std::chrono::milliseconds timeout);

  /// Sends the whole buffer; false if the peer went away.
  bool send_all(const std::string& data);

 private:
  int fd_ = -1;
};

/// Buffered newline-delimited reader.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}
  /// Next line without the trailing newline; empty optional on EOF/error.
  /// A final unterminated line is returned before EOF.
  std::optional<std::string> next();

 private:
  int fd_;
  std::string buf_;
  bool eof_ = false;
};

}  // namespace falldef::edge
