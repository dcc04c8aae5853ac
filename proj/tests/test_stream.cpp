#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <thread>

#include "btfstream/client.hpp"
#include "btfstream/errors.hpp"
#include "btfstream/server.hpp"
#include "test_util.hpp"

using namespace btfstream;

namespace {

testutil::TestObject& shared_object() {
    static testutil::TestObject obj = testutil::build_test_object(4, 4, 0, 2, 8, 4, 77);
    return obj;
}

} // namespace

TEST_CASE("single client receives the exact container") {
    testutil::TestObject& obj = shared_object();
    StreamServer server(obj.container, "127.0.0.1", 0);
    StreamClient client("127.0.0.1", server.port());
    REQUIRE(client.wait_complete(30000));
    auto snap = client.snapshot();
    CHECK(snap->complete());
    CHECK_FALSE(snap->placeholder);
    CHECK(serialize_container(client.assembled_container()) ==
          serialize_container(obj.container));
    client.close();
    server.stop();
}

TEST_CASE("annotations: echo, sync backlog, and ordering") {
    testutil::TestObject& obj = shared_object();
    StreamServer server(obj.container, "127.0.0.1", 0);

    StreamClient first("127.0.0.1", server.port());
    Annotation m = first.place_annotation(AnnotationKind::Marker, {0.5f, 0.5f, 0.5f});
    CHECK(m.sequence == 1);
    Annotation t = first.place_annotation(AnnotationKind::Text, {0.25f, 0.5f, 0.5f}, "chip");
    CHECK(t.sequence == 2);
    CHECK(t.author == m.author);

    // Late joiner gets the backlog via sync.
    StreamClient second("127.0.0.1", server.port());
    REQUIRE(second.wait_annotations(2, 10000));
    std::vector<Annotation> log = second.annotation_log();
    REQUIRE(log.size() == 2);
    CHECK(log[0] == m);
    CHECK(log[1] == t);

    // A stroke of 10 points shares the stroke id with dense sequences.
    for (int i = 0; i < 10; ++i) {
        Annotation s = second.place_annotation(
            AnnotationKind::StrokePoint, {0.1f + 0.05f * i, 0.5f, 0.5f}, "", 12);
        CHECK(s.stroke_id == 12);
        CHECK(s.sequence == uint64_t(3 + i));
    }
    REQUIRE(first.wait_annotations(12, 10000));
    CHECK(first.annotation_log() == second.annotation_log());
    CHECK(server.annotation_log() == first.annotation_log());

    SUBCASE("local validation precedes sending") {
        CHECK_THROWS_AS(first.place_annotation(AnnotationKind::Text, {0.5f, 0.5f, 0.5f}, ""),
                        ValidationError);
        CHECK_THROWS_AS(first.place_annotation(AnnotationKind::Marker, {1.5f, 0.5f, 0.5f}),
                        ValidationError);
    }

    first.close();
    second.close();
    server.stop();
}

TEST_CASE("server rejects bad protocol versions but keeps serving others") {
    testutil::TestObject& obj = shared_object();
    StreamServer server(obj.container, "127.0.0.1", 0);

    FramedSocket raw = FramedSocket::connect("127.0.0.1", server.port());
    ByteWriter hello;
    hello.u16(99); // unsupported version
    raw.send(FrameType::Hello, hello.buf);
    auto reply = raw.receive();
    REQUIRE(reply.has_value());
    CHECK(reply->type == FrameType::Error);
    ByteReader r(reply->payload);
    CHECK(r.u16() == kErrBadVersion);
    CHECK_FALSE(raw.receive().has_value()); // closed after the error

    StreamClient ok("127.0.0.1", server.port());
    CHECK(ok.wait_complete(30000));
    ok.close();
    server.stop();
}

TEST_CASE("oversized annotation text draws an error frame, connection kept") {
    testutil::TestObject& obj = shared_object();
    StreamServer server(obj.container, "127.0.0.1", 0);

    FramedSocket raw = FramedSocket::connect("127.0.0.1", server.port());
    ByteWriter hello;
    hello.u16(kProtocolVersion);
    raw.send(FrameType::Hello, hello.buf);

    ByteWriter add;
    write_annotation_add(add, AnnotationKind::Text, {0.5f, 0.5f, 0.5f}, 0,
                         std::string(kMaxAnnotationText + 1, 'x'));
    raw.send(FrameType::AnnotationAdd, add.buf);

    bool got_error = false, got_chunks = false;
    for (int i = 0; i < 200 && !(got_error && got_chunks); ++i) {
        auto frame = raw.receive();
        if (!frame)
            break;
        if (frame->type == FrameType::Error) {
            ByteReader r(frame->payload);
            CHECK(r.u16() == kErrOversizedText);
            got_error = true;
        } else if (frame->type == FrameType::ChunkData) {
            got_chunks = true;
            ByteWriter ack;
            ack.u32(1);
            raw.send(FrameType::Ack, ack.buf);
        }
    }
    CHECK(got_error);
    CHECK(got_chunks);
    CHECK(server.annotation_log().empty());
    server.stop();
}

TEST_CASE("staggered clients converge") {
    testutil::TestObject& obj = shared_object();
    StreamServer server(obj.container, "127.0.0.1", 0);

    auto a = std::make_unique<StreamClient>("127.0.0.1", server.port());
    a->place_annotation(AnnotationKind::Marker, {0.3f, 0.3f, 0.3f});
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    auto b = std::make_unique<StreamClient>("127.0.0.1", server.port());
    b->place_annotation(AnnotationKind::Marker, {0.7f, 0.7f, 0.7f});

    REQUIRE(a->wait_complete(30000));
    REQUIRE(b->wait_complete(30000));
    REQUIRE(a->wait_annotations(2, 10000));
    REQUIRE(b->wait_annotations(2, 10000));

    CHECK(serialize_container(a->assembled_container()) ==
          serialize_container(b->assembled_container()));
    CHECK(a->annotation_log() == b->annotation_log());
    a->close();
    b->close();
    server.stop();
}

TEST_CASE("annotation journal is written as JSON lines") {
    testutil::TestObject& obj = shared_object();
    std::string journal = "journal_test.jsonl";
    std::remove(journal.c_str());
    {
        StreamServer server(obj.container, "127.0.0.1", 0, journal);
        StreamClient client("127.0.0.1", server.port());
        client.place_annotation(AnnotationKind::Marker, {0.5f, 0.25f, 0.75f});
        client.close();
        server.stop();
    }
    std::vector<uint8_t> data = read_file(journal);
    std::string text(data.begin(), data.end());
    CHECK(text.find("\"seq\":1") != std::string::npos);
    CHECK(text.find("\"kind\":0") != std::string::npos);
    std::remove(journal.c_str());
}
