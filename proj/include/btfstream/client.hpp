#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "btfstream/chunks.hpp"
#include "btfstream/mesh.hpp"
#include "btfstream/protocol.hpp"

namespace btfstream {

// Immutable view of the progressively assembled object; published whole so
// readers never observe a partially applied chunk.
struct Snapshot {
    uint64_t version = 0;
    bool placeholder = true; // geometry not yet received
    Mesh mesh;               // placeholder sphere until the real one arrives

    bool have_header = false;
    ContainerHeader header;
    OctreeBTF tree; // partially filled

    std::vector<uint8_t> voxel_present;                 // per level
    std::array<std::vector<uint8_t>, 3> spatial_present; // per channel, per level
    std::array<uint32_t, 3> angular_layers{0, 0, 0};     // contiguous layers present

    std::vector<Annotation> annotations;
    uint32_t chunks_applied = 0;

    bool level_evaluable(uint32_t level) const;
    std::optional<uint32_t> deepest_evaluable_level() const;
    // 4 x contiguous layers present, never exceeding k.
    uint32_t renderable_rank(int channel) const;
    bool complete() const;
};

// In-order assembly of the streamed object: geometry, then chunks exactly in
// load order, plus the annotation log. Out-of-order or duplicate frames are
// protocol violations.
class ProgressiveState {
public:
    ProgressiveState();

    void apply_object_info(const std::vector<uint8_t>& header_bytes);
    void apply_geometry(const std::vector<uint8_t>& compressed_blob);
    void apply_chunk(const ChunkDescriptor& descriptor, const std::vector<uint8_t>& payload);
    void apply_annotation_event(const Annotation& event);
    void apply_annotation_sync(const std::vector<Annotation>& backlog);

    std::shared_ptr<const Snapshot> snapshot() const;

    // Raw container parts kept verbatim for fetch/convergence checks.
    Container assembled_container() const;

private:
    void publish();

    Snapshot state_;
    LoadOrder expected_order_;
    size_t next_chunk_ = 0;
    std::vector<uint8_t> geometry_blob_;
    std::vector<Chunk> raw_chunks_;
    bool synced_ = false;

    mutable std::mutex mutex_;
    std::shared_ptr<const Snapshot> published_;
};

// Networked client: receive / decompress+apply stages over a bounded queue,
// snapshot readers run concurrently with application.
class StreamClient {
public:
    StreamClient(const std::string& host, uint16_t port);
    ~StreamClient();
    StreamClient(const StreamClient&) = delete;
    StreamClient& operator=(const StreamClient&) = delete;

    std::shared_ptr<const Snapshot> snapshot() const;

    // True once every chunk has been applied; false on timeout.
    bool wait_complete(int timeout_ms);
    bool wait_annotations(size_t count, int timeout_ms);

    // Blocks until the authoritative echo arrives.
    Annotation place_annotation(AnnotationKind kind, const Vec3& position,
                                const std::string& text = "", uint32_t stroke_id = 0);

    Container assembled_container() const;
    std::vector<Annotation> annotation_log() const;

    void close();
    // Rethrows a transport/protocol failure observed by the worker threads.
    void check_error() const;

private:
    void receive_loop();
    void apply_loop();
    void push_frame(Frame frame);
    void handle_frame(const Frame& frame);
    void fail(std::exception_ptr error);

    FramedSocket socket_;
    std::mutex send_mutex_;
    ProgressiveState state_;
    mutable std::mutex state_mutex_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Frame> queue_; // bounded: pipeline depth 2
    bool receive_done_ = false;

    mutable std::mutex done_mutex_;
    std::condition_variable done_cv_;
    bool complete_ = false;
    std::exception_ptr error_;

    std::mutex pending_mutex_;
    std::condition_variable pending_cv_;
    struct PendingAdd {
        Annotation body;
        std::optional<Annotation> echo;
    };
    std::deque<PendingAdd*> pending_;
    std::optional<uint32_t> own_session_id_;

    std::thread receive_thread_;
    std::thread apply_thread_;
    std::atomic<bool> closed_{false};
    std::atomic<bool> apply_done_{false};
};

} // namespace btfstream
