#include "btfstream/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "btfstream/errors.hpp"

namespace btfstream {

bool position_in_unit_cube(const Vec3& p) {
    return p.x >= 0.0f && p.x <= 1.0f && p.y >= 0.0f && p.y <= 1.0f && p.z >= 0.0f && p.z <= 1.0f;
}

void write_annotation_add(ByteWriter& w, AnnotationKind kind, const Vec3& pos, uint32_t stroke_id,
                          const std::string& text) {
    w.u8(uint8_t(kind));
    w.f32(pos.x);
    w.f32(pos.y);
    w.f32(pos.z);
    w.u32(stroke_id);
    w.u16(uint16_t(text.size()));
    w.raw(text.data(), text.size());
}

void write_annotation_event(ByteWriter& w, const Annotation& a) {
    w.u64(a.sequence);
    w.u32(a.author);
    write_annotation_add(w, a.kind, a.position, a.stroke_id, a.text);
}

Annotation read_annotation_add(ByteReader& r) {
    Annotation a;
    uint8_t kind = r.u8();
    if (kind > 2)
        throw ProtocolError("unknown annotation kind");
    a.kind = AnnotationKind(kind);
    a.position = {r.f32(), r.f32(), r.f32()};
    a.stroke_id = r.u32();
    uint16_t len = r.u16();
    std::vector<uint8_t> text = r.bytes(len);
    a.text.assign(text.begin(), text.end());
    return a;
}

Annotation read_annotation_event(ByteReader& r) {
    uint64_t seq = r.u64();
    uint32_t author = r.u32();
    Annotation a = read_annotation_add(r);
    a.sequence = seq;
    a.author = author;
    return a;
}

namespace {

void send_all(int fd, const uint8_t* data, size_t n) {
    while (n > 0) {
        ssize_t sent = ::send(fd, data, n, MSG_NOSIGNAL);
        if (sent <= 0) {
            if (sent < 0 && errno == EINTR)
                continue;
            throw NetworkError("send failed: " + std::string(std::strerror(errno)));
        }
        data += sent;
        n -= size_t(sent);
    }
}

// false on orderly close before the first byte.
bool recv_all(int fd, uint8_t* data, size_t n) {
    bool any = false;
    while (n > 0) {
        ssize_t got = ::recv(fd, data, n, 0);
        if (got == 0) {
            if (any)
                throw NetworkError("connection closed mid-frame");
            return false;
        }
        if (got < 0) {
            if (errno == EINTR)
                continue;
            if (!any && (errno == ECONNRESET || errno == EBADF))
                return false;
            throw NetworkError("recv failed: " + std::string(std::strerror(errno)));
        }
        any = true;
        data += got;
        n -= size_t(got);
    }
    return true;
}

sockaddr_in make_addr(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw NetworkError("invalid IPv4 address: " + host);
    return addr;
}

} // namespace

FramedSocket::~FramedSocket() {
    if (fd_ >= 0)
        ::close(fd_);
}

FramedSocket::FramedSocket(FramedSocket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }

FramedSocket& FramedSocket::operator=(FramedSocket&& o) noexcept {
    if (this != &o) {
        if (fd_ >= 0)
            ::close(fd_);
        fd_ = o.fd_;
        o.fd_ = -1;
    }
    return *this;
}

FramedSocket FramedSocket::connect(const std::string& host, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        throw NetworkError("socket creation failed");
    sockaddr_in addr = make_addr(host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd);
        throw NetworkError("connect failed: " + std::string(std::strerror(err)));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return FramedSocket(fd);
}

void FramedSocket::send(FrameType type, const std::vector<uint8_t>& payload) {
    if (fd_ < 0)
        throw NetworkError("socket is closed");
    uint8_t header[5];
    uint32_t len = uint32_t(payload.size());
    std::memcpy(header, &len, 4);
    header[4] = uint8_t(type);
    send_all(fd_, header, 5);
    if (!payload.empty())
        send_all(fd_, payload.data(), payload.size());
}

std::optional<Frame> FramedSocket::receive() {
    uint8_t header[5];
    if (!recv_all(fd_, header, 5))
        return std::nullopt;
    uint32_t len;
    std::memcpy(&len, header, 4);
    if (len > kMaxFrameSize)
        throw ProtocolError("frame exceeds maximum size");
    Frame f;
    f.type = FrameType(header[4]);
    f.payload.resize(len);
    if (len > 0 && !recv_all(fd_, f.payload.data(), len))
        throw NetworkError("connection closed mid-frame");
    return f;
}

void FramedSocket::shutdown() {
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

Listener::Listener(const std::string& host, uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0)
        throw NetworkError("socket creation failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_addr(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd_);
        fd_ = -1;
        throw NetworkError("bind failed: " + std::string(std::strerror(err)));
    }
    if (::listen(fd_, 16) != 0) {
        int err = errno;
        ::close(fd_);
        fd_ = -1;
        throw NetworkError("listen failed: " + std::string(std::strerror(err)));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

Listener::~Listener() { close(); }

std::optional<FramedSocket> Listener::accept() {
    int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0)
        return std::nullopt;
    int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return FramedSocket(client);
}

void Listener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

std::pair<std::string, uint16_t> parse_address(const std::string& address) {
    auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 >= address.size())
        throw ValidationError("address must be host:port");
    std::string host = address.substr(0, colon);
    if (host.empty() || host == "localhost")
        host = "127.0.0.1";
    int port = std::stoi(address.substr(colon + 1));
    if (port < 0 || port > 65535)
        throw ValidationError("port out of range");
    return {host, uint16_t(port)};
}

} // namespace btfstream
