#include "btfstream/client.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "btfstream/errors.hpp"

namespace btfstream {

bool Snapshot::level_evaluable(uint32_t level) const {
    if (!have_header || level >= voxel_present.size() || !voxel_present[level])
        return false;
    for (int ch = 0; ch < 3; ++ch)
        if (!spatial_present[ch][level] || angular_layers[ch] == 0)
            return false;
    return true;
}

std::optional<uint32_t> Snapshot::deepest_evaluable_level() const {
    std::optional<uint32_t> deepest;
    for (uint32_t j = 0; j < voxel_present.size(); ++j)
        if (level_evaluable(j))
            deepest = j;
    return deepest;
}

uint32_t Snapshot::renderable_rank(int channel) const {
    if (!have_header)
        return 0;
    return std::min(4 * angular_layers[channel], header.channel_k(channel));
}

bool Snapshot::complete() const {
    return have_header && !placeholder && chunks_applied == header.chunk_count;
}

ProgressiveState::ProgressiveState() {
    state_.mesh = placeholder_sphere();
    publish();
}

void ProgressiveState::publish() {
    auto snap = std::make_shared<Snapshot>(state_);
    std::lock_guard lock(mutex_);
    published_ = std::move(snap);
}

std::shared_ptr<const Snapshot> ProgressiveState::snapshot() const {
    std::lock_guard lock(mutex_);
    return published_;
}

void ProgressiveState::apply_object_info(const std::vector<uint8_t>& header_bytes) {
    if (state_.have_header)
        throw ProtocolError("duplicate OBJECT_INFO");
    state_.header = parse_header(header_bytes);
    state_.have_header = true;
    state_.tree = tree_from_header(state_.header);
    uint32_t levels = state_.header.level_count();
    state_.voxel_present.assign(levels, 0);
    for (auto& p : state_.spatial_present)
        p.assign(levels, 0);
    expected_order_ = build_load_order(levels, state_.header.k_y, state_.header.k_uv);
    publish();
}

void ProgressiveState::apply_geometry(const std::vector<uint8_t>& compressed_blob) {
    if (!state_.have_header)
        throw ProtocolError("GEOMETRY before OBJECT_INFO");
    if (!state_.placeholder)
        throw ProtocolError("duplicate GEOMETRY");
    state_.mesh = deserialize_geometry(zstd_decompress_framed(compressed_blob));
    state_.placeholder = false;
    geometry_blob_ = compressed_blob;
    ++state_.version;
    publish();
}

void ProgressiveState::apply_chunk(const ChunkDescriptor& descriptor,
                                   const std::vector<uint8_t>& payload) {
    if (!state_.have_header || state_.placeholder)
        throw ProtocolError("CHUNK before preamble");
    if (next_chunk_ >= expected_order_.size())
        throw ProtocolError("chunk after the final load-order entry");
    if (!(descriptor.id == expected_order_[next_chunk_]))
        throw ProtocolError("chunk out of load order (or duplicate)");

    Chunk chunk{descriptor, payload};
    std::vector<uint8_t> raw = decompress_chunk(chunk);
    apply_chunk_payload(state_.tree, descriptor.id, raw, state_.header);

    switch (descriptor.id.kind) {
    case ChunkKind::Voxel:
        state_.voxel_present[descriptor.id.level] = 1;
        break;
    case ChunkKind::Spatial:
        state_.spatial_present[descriptor.id.channel][descriptor.id.level] = 1;
        break;
    case ChunkKind::Angular:
        // Layers arrive in ascending order per channel (load-order invariant),
        // so the contiguous count is layer+1.
        state_.angular_layers[descriptor.id.channel] =
            std::max(state_.angular_layers[descriptor.id.channel], uint32_t(descriptor.id.layer) + 1);
        break;
    }
    raw_chunks_.push_back(std::move(chunk));
    ++next_chunk_;
    ++state_.chunks_applied;
    ++state_.version;
    if (state_.chunks_applied == state_.header.chunk_count) {
        state_.tree.spatial_assigned = true;
        state_.tree.lod_built = true;
    }
    publish();
}

void ProgressiveState::apply_annotation_sync(const std::vector<Annotation>& backlog) {
    if (synced_)
        throw ProtocolError("duplicate ANNOTATION_SYNC");
    if (!state_.annotations.empty())
        throw ProtocolError("ANNOTATION_SYNC after events");
    for (size_t i = 0; i < backlog.size(); ++i)
        if (backlog[i].sequence != i + 1)
            throw ProtocolError("annotation backlog is not dense");
    synced_ = true;
    state_.annotations = backlog;
    state_.version += backlog.size();
    publish();
}

void ProgressiveState::apply_annotation_event(const Annotation& event) {
    if (event.sequence != state_.annotations.size() + 1)
        throw ProtocolError("annotation sequence gap or duplicate");
    state_.annotations.push_back(event);
    ++state_.version;
    publish();
}

Container ProgressiveState::assembled_container() const {
    if (!state_.complete())
        throw NotReadyError("object is not fully streamed yet");
    Container c;
    c.header = state_.header;
    c.geometry = geometry_blob_;
    c.chunks = raw_chunks_;
    return c;
}

StreamClient::StreamClient(const std::string& host, uint16_t port)
    : socket_(FramedSocket::connect(host, port)) {
    ByteWriter hello;
    hello.u16(kProtocolVersion);
    socket_.send(FrameType::Hello, hello.buf);
    receive_thread_ = std::thread([this] { receive_loop(); });
    apply_thread_ = std::thread([this] { apply_loop(); });
}

StreamClient::~StreamClient() { close(); }

void StreamClient::close() {
    if (closed_.exchange(true))
        return;
    socket_.shutdown();
    queue_cv_.notify_all();
    done_cv_.notify_all();
    pending_cv_.notify_all();
    if (receive_thread_.joinable())
        receive_thread_.join();
    if (apply_thread_.joinable())
        apply_thread_.join();
}

void StreamClient::check_error() const {
    std::lock_guard lock(done_mutex_);
    if (error_)
        std::rethrow_exception(error_);
}

void StreamClient::fail(std::exception_ptr error) {
    {
        std::lock_guard lock(done_mutex_);
        if (!error_)
            error_ = error;
    }
    socket_.shutdown();
    queue_cv_.notify_all();
    done_cv_.notify_all();
    pending_cv_.notify_all();
}

void StreamClient::receive_loop() {
    try {
        while (true) {
            std::optional<Frame> frame = socket_.receive();
            if (!frame)
                break;
            push_frame(std::move(*frame));
        }
    } catch (...) {
        if (!closed_)
            fail(std::current_exception());
    }
    {
        std::lock_guard lock(queue_mutex_);
        receive_done_ = true;
    }
    queue_cv_.notify_all();
}

void StreamClient::push_frame(Frame frame) {
    std::unique_lock lock(queue_mutex_);
    // Pipeline depth 2: one frame in flight while one is being applied.
    queue_cv_.wait(lock, [&] { return queue_.size() < 2 || closed_; });
    if (closed_)
        return;
    queue_.push_back(std::move(frame));
    queue_cv_.notify_all();
}

void StreamClient::apply_loop() {
    while (true) {
        Frame frame;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return !queue_.empty() || receive_done_ || closed_; });
            if (queue_.empty()) {
                if (receive_done_ || closed_)
                    break;
                continue;
            }
            frame = std::move(queue_.front());
            queue_.pop_front();
            queue_cv_.notify_all();
        }
        try {
            handle_frame(frame);
        } catch (...) {
            fail(std::current_exception());
            break;
        }
    }
    apply_done_ = true;
    done_cv_.notify_all();
    pending_cv_.notify_all();
}

void StreamClient::handle_frame(const Frame& frame) {
    switch (frame.type) {
    case FrameType::ObjectInfo: {
        std::lock_guard lock(state_mutex_);
        state_.apply_object_info(frame.payload);
        break;
    }
    case FrameType::Geometry: {
        std::lock_guard lock(state_mutex_);
        state_.apply_geometry(frame.payload);
        break;
    }
    case FrameType::ChunkData: {
        ByteReader r(frame.payload);
        ChunkDescriptor d = read_descriptor(r);
        std::vector<uint8_t> payload = r.bytes(d.compressed_size);
        if (!r.done())
            throw ProtocolError("trailing bytes in CHUNK frame");
        bool complete;
        {
            std::lock_guard lock(state_mutex_);
            state_.apply_chunk(d, payload);
            complete = state_.snapshot()->complete();
        }
        ByteWriter ack;
        ack.u32(1);
        {
            std::lock_guard lock(send_mutex_);
            socket_.send(FrameType::Ack, ack.buf);
        }
        if (complete) {
            std::lock_guard lock(done_mutex_);
            complete_ = true;
            done_cv_.notify_all();
        }
        break;
    }
    case FrameType::AnnotationSync: {
        ByteReader r(frame.payload);
        uint32_t count = r.u32();
        std::vector<Annotation> backlog;
        backlog.reserve(count);
        for (uint32_t i = 0; i < count; ++i)
            backlog.push_back(read_annotation_event(r));
        if (!r.done())
            throw ProtocolError("trailing bytes in ANNOTATION_SYNC");
        std::lock_guard lock(state_mutex_);
        state_.apply_annotation_sync(backlog);
        break;
    }
    case FrameType::AnnotationEvent: {
        ByteReader r(frame.payload);
        Annotation event = read_annotation_event(r);
        if (!r.done())
            throw ProtocolError("trailing bytes in ANNOTATION_EVENT");
        {
            std::lock_guard lock(state_mutex_);
            state_.apply_annotation_event(event);
        }
        std::lock_guard lock(pending_mutex_);
        if (!pending_.empty()) {
            PendingAdd* front = pending_.front();
            bool mine;
            if (own_session_id_) {
                mine = event.author == *own_session_id_;
            } else {
                // First echo: recognize our submission by body and learn the
                // session id the server assigned us.
                mine = event.kind == front->body.kind && event.position == front->body.position &&
                       event.stroke_id == front->body.stroke_id && event.text == front->body.text;
                if (mine)
                    own_session_id_ = event.author;
            }
            if (mine) {
                front->echo = event;
                pending_.pop_front();
                pending_cv_.notify_all();
            }
        }
        break;
    }
    case FrameType::Error: {
        ByteReader r(frame.payload);
        uint16_t code = r.u16();
        std::string msg(r.remaining(), '\0');
        r.raw(msg.data(), msg.size());
        throw ProtocolError("server error " + std::to_string(code) + ": " + msg);
    }
    default:
        throw ProtocolError("unexpected frame type from server");
    }
}

std::shared_ptr<const Snapshot> StreamClient::snapshot() const {
    return state_.snapshot();
}

bool StreamClient::wait_complete(int timeout_ms) {
    std::unique_lock lock(done_mutex_);
    done_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                      [&] { return complete_ || error_ != nullptr; });
    if (error_)
        std::rethrow_exception(error_);
    return complete_;
}

bool StreamClient::wait_annotations(size_t count, int timeout_ms) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
        check_error();
        if (state_.snapshot()->annotations.size() >= count)
            return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return state_.snapshot()->annotations.size() >= count;
}

Annotation StreamClient::place_annotation(AnnotationKind kind, const Vec3& position,
                                          const std::string& text, uint32_t stroke_id) {
    if (!position_in_unit_cube(position))
        throw ValidationError("annotation position outside the unit cube");
    if (kind == AnnotationKind::Text && text.empty())
        throw ValidationError("TEXT annotation requires non-empty text");
    if (text.size() > kMaxAnnotationText)
        throw ValidationError("annotation text exceeds 4096 bytes");

    PendingAdd pending;
    pending.body.kind = kind;
    pending.body.position = position;
    pending.body.stroke_id = stroke_id;
    pending.body.text = text;
    {
        std::lock_guard lock(pending_mutex_);
        pending_.push_back(&pending);
    }
    ByteWriter w;
    write_annotation_add(w, kind, position, stroke_id, text);
    {
        std::lock_guard lock(send_mutex_);
        socket_.send(FrameType::AnnotationAdd, w.buf);
    }
    std::unique_lock lock(pending_mutex_);
    pending_cv_.wait(lock, [&] {
        if (pending.echo || closed_ || apply_done_)
            return true;
        std::lock_guard dlock(done_mutex_);
        return error_ != nullptr;
    });
    if (!pending.echo) {
        pending_.erase(std::remove(pending_.begin(), pending_.end(), &pending), pending_.end());
        lock.unlock();
        check_error();
        throw NetworkError("connection lost before annotation echo (delivery unknown)");
    }
    return *pending.echo;
}

Container StreamClient::assembled_container() const {
    std::lock_guard lock(state_mutex_);
    return state_.assembled_container();
}

std::vector<Annotation> StreamClient::annotation_log() const {
    return state_.snapshot()->annotations;
}

} // namespace btfstream
