#include "latmesh/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace latmesh::net {

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw NetError(what + ": " + std::strerror(errno));
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
        if (rc != 0 || !res)
            throw NetError("cannot resolve host '" + host + "': " + gai_strerror(rc));
        addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
        ::freeaddrinfo(res);
    }
    return addr;
}

} // namespace

TcpConn::TcpConn(int fd) : fd_(fd) {
    set_nodelay(fd_);
}

TcpConn::~TcpConn() {
    if (fd_ >= 0) ::close(fd_);
}

bool TcpConn::write_all(std::span<const std::uint8_t> data) {
    std::lock_guard lock(wmu_);
    std::size_t off = 0;
    while (off < data.size()) {
        ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

bool TcpConn::write_all(std::string_view data) {
    return write_all(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

bool TcpConn::read_exact(std::uint8_t* out, std::size_t n) {
    std::size_t off = 0;
    // Drain any spill left behind by read_line first.
    if (!rbuf_.empty()) {
        std::size_t take = std::min(n, rbuf_.size());
        std::memcpy(out, rbuf_.data(), take);
        rbuf_.erase(rbuf_.begin(), rbuf_.begin() + static_cast<long>(take));
        off = take;
    }
    while (off < n) {
        ssize_t r = ::recv(fd_, out + off, n - off, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw_errno("recv");
        }
        if (r == 0) {
            if (off == 0) return false;
            throw NetError("connection closed mid-read");
        }
        off += static_cast<std::size_t>(r);
    }
    return true;
}

std::optional<std::vector<std::uint8_t>> TcpConn::read_frame(std::size_t max_body) {
    std::uint8_t prefix[4];
    if (!read_exact(prefix, 4)) return std::nullopt;
    std::uint32_t len = (std::uint32_t(prefix[0]) << 24) | (std::uint32_t(prefix[1]) << 16) |
                        (std::uint32_t(prefix[2]) << 8) | std::uint32_t(prefix[3]);
    if (len > max_body) throw NetError("frame body too large: " + std::to_string(len));
    std::vector<std::uint8_t> frame(4 + len);
    std::memcpy(frame.data(), prefix, 4);
    if (len > 0 && !read_exact(frame.data() + 4, len))
        throw NetError("connection closed mid-frame");
    return frame;
}

std::optional<std::string> TcpConn::read_line(std::size_t max_len) {
    std::string line;
    while (true) {
        // Consume spill first.
        while (!rbuf_.empty()) {
            char c = static_cast<char>(rbuf_.front());
            rbuf_.erase(rbuf_.begin());
            if (c == '\n') return line;
            line.push_back(c);
            if (line.size() > max_len) throw NetError("control line too long");
        }
        std::uint8_t buf[4096];
        ssize_t r = ::recv(fd_, buf, sizeof(buf), 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw_errno("recv");
        }
        if (r == 0) {
            if (line.empty()) return std::nullopt;
            return line; // unterminated final line
        }
        rbuf_.insert(rbuf_.end(), buf, buf + r);
    }
}

void TcpConn::set_read_timeout(double seconds) {
    timeval tv{};
    tv.tv_sec = static_cast<long>(seconds);
    tv.tv_usec = static_cast<long>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void TcpConn::shutdown_both() {
    ::shutdown(fd_, SHUT_RDWR);
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        throw_errno("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(fd, 128) < 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        throw_errno("listen");
    }
    sockaddr_in actual{};
    socklen_t alen = sizeof(actual);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&actual), &alen);
    char buf[INET_ADDRSTRLEN];
    ::inet_ntop(AF_INET, &actual.sin_addr, buf, sizeof(buf));
    return TcpListener(fd, Endpoint{buf, ntohs(actual.sin_port)});
}

TcpListener TcpListener::from_fd(int fd, Endpoint ep) {
    return TcpListener(fd, std::move(ep));
}

TcpListener::~TcpListener() {
    close();
}

TcpListener::TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), ep_(other.ep_) {
    other.fd_ = -1;
}

ConnPtr TcpListener::accept() {
    while (true) {
        int cfd = ::accept(fd_, nullptr, nullptr);
        if (cfd < 0) {
            if (errno == EINTR) continue;
            return nullptr; // listener shut down
        }
        return std::make_shared<TcpConn>(cfd);
    }
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

int TcpListener::release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
}

ConnPtr connect_to(const Endpoint& ep, double timeout_s) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    sockaddr_in addr = resolve(ep.host, ep.port);
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc < 0 && errno != EINPROGRESS) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        throw_errno("connect " + ep.str());
    }
    if (rc < 0) {
        pollfd pfd{fd, POLLOUT, 0};
        int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
        if (pr <= 0) {
            ::close(fd);
            throw NetError("connect " + ep.str() + ": timed out");
        }
        int err = 0;
        socklen_t elen = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &elen);
        if (err != 0) {
            ::close(fd);
            throw NetError("connect " + ep.str() + ": " + std::strerror(err));
        }
    }
    ::fcntl(fd, F_SETFL, flags);
    return std::make_shared<TcpConn>(fd);
}

} // namespace latmesh::net
