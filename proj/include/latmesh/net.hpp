#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latmesh/topology.hpp"

namespace latmesh::net {

struct NetError : std::runtime_error {
    explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

/// Connected TCP socket with Nagle disabled. Owns the fd.
class TcpConn {
  public:
    explicit TcpConn(int fd);
    ~TcpConn();
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;

    /// Writes the whole buffer; false on error / closed peer.
    bool write_all(std::span<const std::uint8_t> data);
    bool write_all(std::string_view data);

    /// Reads exactly n bytes; false on clean EOF, throws on error.
    bool read_exact(std::uint8_t* out, std::size_t n);

    /// Reads one length-prefixed frame (prefix included in the result).
    /// nullopt on clean EOF at a frame boundary.
    std::optional<std::vector<std::uint8_t>> read_frame(std::size_t max_body = 1 << 26);

    /// Reads up to and including '\n'; the newline is stripped.
    /// nullopt on EOF before any byte.
    std::optional<std::string> read_line(std::size_t max_len = 1 << 22);

    void set_read_timeout(double seconds); // 0 = none
    void shutdown_both();
    int fd() const { return fd_; }

  private:
    int fd_;
    std::mutex wmu_; // whole-buffer writes are atomic w.r.t. each other
    std::vector<std::uint8_t> rbuf_; // spill for read_line
};

using ConnPtr = std::shared_ptr<TcpConn>;

class TcpListener {
  public:
    /// Binds and listens; port 0 picks a free port (see local_endpoint()).
    static TcpListener bind(const std::string& host, std::uint16_t port);
    /// Adopts an already listening fd.
    static TcpListener from_fd(int fd, Endpoint ep);

    ~TcpListener();
    TcpListener(TcpListener&& other) noexcept;
    TcpListener& operator=(TcpListener&&) = delete;
    TcpListener(const TcpListener&) = delete;

    /// nullptr once close() has been called from another thread.
    ConnPtr accept();
    void close();
    const Endpoint& local_endpoint() const { return ep_; }
    int fd() const { return fd_; }
    int release(); // gives up ownership of the fd

  private:
    TcpListener(int fd, Endpoint ep) : fd_(fd), ep_(ep) {}
    int fd_;
    Endpoint ep_;
};

/// Blocking connect with timeout; throws NetError on failure.
ConnPtr connect_to(const Endpoint& ep, double timeout_s = 5.0);

} // namespace latmesh::net
