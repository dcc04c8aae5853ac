#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "btfstream/binio.hpp"
#include "btfstream/vecmath.hpp"

namespace btfstream {

// Frames are [u32 payload length][u8 type][payload], little-endian.
enum class FrameType : uint8_t {
    Hello = 0x01,          // client -> server: u16 protocol version
    ObjectInfo = 0x02,     // container header verbatim
    Geometry = 0x03,       // zstd geometry blob
    ChunkData = 0x04,      // descriptor + compressed payload
    Ack = 0x05,            // client -> server: u32 frames consumed
    AnnotationAdd = 0x06,  // client -> server
    AnnotationEvent = 0x07,
    AnnotationSync = 0x08,
    Error = 0x0F,
};

constexpr uint16_t kProtocolVersion = 1;
constexpr size_t kMaxFrameSize = 1ull << 30;
constexpr size_t kMaxAnnotationText = 4096;
constexpr uint32_t kSendWindow = 4; // unacked CHUNK frames in flight

// ERROR frame codes.
enum : uint16_t {
    kErrBadVersion = 1,
    kErrMalformedFrame = 2,
    kErrBadPosition = 3,
    kErrOversizedText = 4,
    kErrUnknownFrameType = 5,
};

struct Frame {
    FrameType type;
    std::vector<uint8_t> payload;
};

enum class AnnotationKind : uint8_t { Marker = 0, Text = 1, StrokePoint = 2 };

struct Annotation {
    uint64_t sequence = 0; // server-assigned, dense from 1
    uint32_t author = 0;   // session id
    AnnotationKind kind = AnnotationKind::Marker;
    Vec3 position{};
    uint32_t stroke_id = 0;
    std::string text;

    bool operator==(const Annotation&) const = default;
};

bool position_in_unit_cube(const Vec3& p);

// ANNOTATION_ADD body: kind u8, position 3xf32, stroke id u32,
// text length u16 + UTF-8.
void write_annotation_add(ByteWriter& w, AnnotationKind kind, const Vec3& pos, uint32_t stroke_id,
                          const std::string& text);
// ANNOTATION_EVENT body: sequence u64, author u32, then the ADD body.
void write_annotation_event(ByteWriter& w, const Annotation& a);
Annotation read_annotation_event(ByteReader& r);
// The ADD body alone; sequence/author stay zero.
Annotation read_annotation_add(ByteReader& r);

// Blocking framed TCP socket (thread-safe sends).
class FramedSocket {
public:
    FramedSocket() = default;
    explicit FramedSocket(int fd) : fd_(fd) {}
    ~FramedSocket();
    FramedSocket(FramedSocket&& o) noexcept;
    FramedSocket& operator=(FramedSocket&& o) noexcept;
    FramedSocket(const FramedSocket&) = delete;
    FramedSocket& operator=(const FramedSocket&) = delete;

    static FramedSocket connect(const std::string& host, uint16_t port);

    void send(FrameType type, const std::vector<uint8_t>& payload);
    // nullopt on orderly close or after shutdown().
    std::optional<Frame> receive();

    void shutdown(); // unblocks a concurrent receive()
    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

private:
    int fd_ = -1;
};

// Listening socket; port 0 picks an ephemeral port.
class Listener {
public:
    Listener(const std::string& host, uint16_t port);
    ~Listener();
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    uint16_t port() const { return port_; }
    // nullopt once close() has been called.
    std::optional<FramedSocket> accept();
    void close();

private:
    int fd_ = -1;
    uint16_t port_ = 0;
};

// "host:port" with a mandatory port.
std::pair<std::string, uint16_t> parse_address(const std::string& address);

} // namespace btfstream
