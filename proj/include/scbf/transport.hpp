#pragma once

#include <cstdint>

#include "scbf/wire.hpp"

namespace scbf {

// One duplex TCP byte stream carrying wire frames. Move-only.
class Connection {
 public:
  Connection() = default;
  explicit Connection(int fd) : fd_(fd) {}
  Connection(Connection&& other) noexcept;
  Connection& operator=(Connection&& other) noexcept;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection();

  bool is_open() const { return fd_ >= 0; }
  void send(const wire::Frame& frame);
  // Blocks until a whole frame arrives. Throws ProtocolError on EOF or a bad header.
  wire::Frame receive();
  void close();

 private:
  int fd_ = -1;
};

// Listening socket bound to 127.0.0.1 on an ephemeral port.
class LoopbackListener {
 public:
  LoopbackListener();
  LoopbackListener(const LoopbackListener&) = delete;
  LoopbackListener& operator=(const LoopbackListener&) = delete;
  ~LoopbackListener();

  std::uint16_t port() const { return port_; }
  Connection accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

Connection connect_loopback(std::uint16_t port);

}  // namespace scbf
