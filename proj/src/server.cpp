#include "btfstream/server.hpp"

#include <cstring>

#include <json.hpp>

#include "btfstream/errors.hpp"

namespace btfstream {

StreamServer::StreamServer(Container container, const std::string& host, uint16_t port,
                           const std::string& journal_path)
    : container_(std::move(container)),
      header_bytes_(serialize_header(container_.header)),
      listener_(host, port) {
    if (!journal_path.empty()) {
        journal_ = std::fopen(journal_path.c_str(), "a");
        if (!journal_)
            throw FormatError("cannot open journal file: " + journal_path);
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
}

StreamServer::~StreamServer() {
    stop();
    if (journal_)
        std::fclose(journal_);
}

void StreamServer::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) {
        if (accept_thread_.joinable())
            accept_thread_.join();
        return;
    }
    listener_.close();
    {
        std::lock_guard lock(sessions_mutex_);
        for (auto& s : sessions_) {
            std::lock_guard slock(s->mutex);
            s->closed = true;
            s->socket.shutdown();
            s->cv.notify_all();
        }
    }
    if (accept_thread_.joinable())
        accept_thread_.join();
    for (auto& t : session_threads_)
        if (t.joinable())
            t.join();
}

std::vector<Annotation> StreamServer::annotation_log() const {
    std::lock_guard lock(log_mutex_);
    return log_;
}

void StreamServer::accept_loop() {
    while (!stopping_) {
        std::optional<FramedSocket> client = listener_.accept();
        if (!client)
            break;
        auto session = std::make_shared<Session>();
        session->socket = std::move(*client);
        std::lock_guard lock(sessions_mutex_);
        if (stopping_)
            break;
        session->id = next_session_id_++;
        sessions_.push_back(session);
        session_threads_.emplace_back([this, session] { run_session(session); });
    }
}

void StreamServer::run_session(std::shared_ptr<Session> session) {
    try {
        std::optional<Frame> hello = session->socket.receive();
        if (!hello || hello->type != FrameType::Hello || hello->payload.size() != 2) {
            ByteWriter w;
            w.u16(kErrMalformedFrame);
            const char* msg = "expected HELLO";
            w.raw(msg, std::strlen(msg));
            std::lock_guard lock(session->send_mutex);
            session->socket.send(FrameType::Error, w.buf);
            session->socket.shutdown();
            return;
        }
        uint16_t version;
        std::memcpy(&version, hello->payload.data(), 2);
        if (version != kProtocolVersion) {
            ByteWriter w;
            w.u16(kErrBadVersion);
            const char* msg = "unsupported protocol version";
            w.raw(msg, std::strlen(msg));
            std::lock_guard lock(session->send_mutex);
            session->socket.send(FrameType::Error, w.buf);
            session->socket.shutdown();
            return;
        }

        {
            std::lock_guard lock(session->send_mutex);
            session->socket.send(FrameType::ObjectInfo, header_bytes_);
            session->socket.send(FrameType::Geometry, container_.geometry);
        }
        // Backlog snapshot; everything after it flows as single events.
        std::vector<Annotation> backlog;
        {
            std::lock_guard lock(log_mutex_);
            backlog = log_;
            std::lock_guard slock(session->mutex);
            session->next_event = backlog.size();
        }
        ByteWriter sync;
        sync.u32(uint32_t(backlog.size()));
        for (const Annotation& a : backlog)
            write_annotation_event(sync, a);
        {
            std::lock_guard lock(session->send_mutex);
            session->socket.send(FrameType::AnnotationSync, sync.buf);
        }

        std::thread reader([this, session] { read_loop(session); });

        size_t cursor = 0;
        const size_t total = container_.chunks.size();
        while (true) {
            enum class Action { None, Event, Chunk, Quit } action = Action::None;
            Annotation event;
            {
                std::unique_lock lock(session->mutex);
                session->cv.wait(lock, [&] {
                    if (session->closed || stopping_)
                        return true;
                    {
                        std::lock_guard llock(log_mutex_);
                        if (session->next_event < log_.size())
                            return true;
                    }
                    return cursor < total && cursor - session->chunks_acked < kSendWindow;
                });
                if (session->closed || stopping_) {
                    action = Action::Quit;
                } else {
                    std::lock_guard llock(log_mutex_);
                    if (session->next_event < log_.size()) {
                        event = log_[session->next_event++];
                        action = Action::Event;
                    } else {
                        action = Action::Chunk;
                    }
                }
            }
            if (action == Action::Quit)
                break;
            if (action == Action::Event) {
                ByteWriter w;
                write_annotation_event(w, event);
                std::lock_guard lock(session->send_mutex);
                session->socket.send(FrameType::AnnotationEvent, w.buf);
            } else {
                const Chunk& c = container_.chunks[cursor++];
                ByteWriter w;
                write_descriptor(w, c.descriptor);
                w.bytes(c.payload);
                std::lock_guard lock(session->send_mutex);
                session->socket.send(FrameType::ChunkData, w.buf);
            }
        }
        session->socket.shutdown();
        reader.join();
    } catch (const std::exception&) {
        // Peer went away; the session simply ends.
        std::lock_guard lock(session->mutex);
        session->closed = true;
        session->socket.shutdown();
    }
}

void StreamServer::read_loop(std::shared_ptr<Session> session) {
    try {
        while (true) {
            std::optional<Frame> frame = session->socket.receive();
            if (!frame)
                break;
            if (frame->type == FrameType::Ack) {
                if (frame->payload.size() != 4)
                    continue;
                uint32_t count;
                std::memcpy(&count, frame->payload.data(), 4);
                std::lock_guard lock(session->mutex);
                session->chunks_acked += count;
                session->cv.notify_all();
            } else if (frame->type == FrameType::AnnotationAdd) {
                Annotation body;
                try {
                    ByteReader r(frame->payload);
                    body = read_annotation_add(r);
                    if (!r.done())
                        throw ProtocolError("trailing bytes in annotation");
                } catch (const std::exception&) {
                    ByteWriter w;
                    w.u16(kErrMalformedFrame);
                    std::lock_guard lock(session->send_mutex);
                    session->socket.send(FrameType::Error, w.buf);
                    continue;
                }
                if (!position_in_unit_cube(body.position)) {
                    ByteWriter w;
                    w.u16(kErrBadPosition);
                    std::lock_guard lock(session->send_mutex);
                    session->socket.send(FrameType::Error, w.buf);
                    continue;
                }
                if (body.text.size() > kMaxAnnotationText ||
                    (body.kind == AnnotationKind::Text && body.text.empty())) {
                    ByteWriter w;
                    w.u16(kErrOversizedText);
                    std::lock_guard lock(session->send_mutex);
                    session->socket.send(FrameType::Error, w.buf);
                    continue;
                }
                append_annotation(*session, body);
            } else {
                ByteWriter w;
                w.u16(kErrUnknownFrameType);
                {
                    std::lock_guard lock(session->send_mutex);
                    session->socket.send(FrameType::Error, w.buf);
                }
                break;
            }
        }
    } catch (const std::exception&) {
        // Fall through to close.
    }
    std::lock_guard lock(session->mutex);
    session->closed = true;
    session->socket.shutdown();
    session->cv.notify_all();
}

void StreamServer::append_annotation(Session& author, const Annotation& body) {
    Annotation stored = body;
    {
        std::lock_guard lock(log_mutex_);
        stored.sequence = log_.size() + 1;
        stored.author = author.id;
        log_.push_back(stored);
        if (journal_)
            journal_append(stored);
    }
    std::lock_guard lock(sessions_mutex_);
    for (auto& s : sessions_) {
        std::lock_guard slock(s->mutex);
        s->cv.notify_all();
    }
}

void StreamServer::journal_append(const Annotation& a) {
    nlohmann::json j{{"seq", a.sequence},
                     {"author", a.author},
                     {"kind", int(a.kind)},
                     {"pos", {a.position.x, a.position.y, a.position.z}},
                     {"stroke", a.stroke_id},
                     {"text", a.text}};
    std::string line = j.dump();
    std::fwrite(line.data(), 1, line.size(), journal_);
    std::fputc('\n', journal_);
    std::fflush(journal_);
}

} // namespace btfstream
