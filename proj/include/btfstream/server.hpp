#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "btfstream/chunks.hpp"
#include "btfstream/protocol.hpp"

namespace btfstream {

// Serves one container to any number of clients. Every client receives
// OBJECT_INFO, GEOMETRY, an annotation backlog, then the chunks in load
// order paced by a 4-frame ACK window; annotations are appended to a single
// server-ordered log and fanned out to every connected session.
class StreamServer {
public:
    StreamServer(Container container, const std::string& host, uint16_t port,
                 const std::string& journal_path = "");
    ~StreamServer();
    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    uint16_t port() const { return listener_.port(); }
    void stop();

    std::vector<Annotation> annotation_log() const;

private:
    struct Session {
        uint32_t id = 0;
        FramedSocket socket;
        std::mutex send_mutex;

        std::mutex mutex;
        std::condition_variable cv;
        uint64_t chunks_acked = 0;
        size_t next_event = 0; // index into the global log
        bool closed = false;
    };

    void accept_loop();
    void run_session(std::shared_ptr<Session> session);
    void read_loop(std::shared_ptr<Session> session);
    void append_annotation(Session& author, const Annotation& body);
    void journal_append(const Annotation& a);

    Container container_;
    std::vector<uint8_t> header_bytes_;
    Listener listener_;

    mutable std::mutex log_mutex_;
    std::vector<Annotation> log_;
    FILE* journal_ = nullptr;

    std::mutex sessions_mutex_;
    std::vector<std::shared_ptr<Session>> sessions_;
    uint32_t next_session_id_ = 1;

    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::vector<std::thread> session_threads_;
};

} // namespace btfstream
