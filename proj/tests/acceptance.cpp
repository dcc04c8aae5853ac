// End-to-end acceptance checks; prints one pass/fail line per criterion and
// exits nonzero if any fail. Oracles are independent re-derivations (Jacobi
// singular values, recursive LOD means, analytic shading), not the library
// code under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "btfstream/client.hpp"
#include "btfstream/errors.hpp"
#include "btfstream/image.hpp"
#include "btfstream/render.hpp"
#include "btfstream/server.hpp"
#include "test_util.hpp"

using namespace btfstream;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok)
        throw CheckFailure(what);
}

template <typename F>
void criterion(int number, const char* name, F&& body) {
    auto start = Clock::now();
    std::string note;
    bool ok = false;
    try {
        body();
        ok = true;
    } catch (const std::exception& e) {
        note = e.what();
    }
    double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("criterion %2d %-28s %s (%.1fs)%s%s\n", number, name, ok ? "PASS" : "FAIL",
                seconds, note.empty() ? "" : " - ", note.c_str());
    std::fflush(stdout);
    if (!ok)
        ++failures;
}

// Desk-scale object shared by the progressive and fidelity criteria: a flat
// sample (uniform voxel frames at every level) with a Lambertian synthetic
// material, 16^3 source points, 8x8 direction grids, depths 1..4, full
// retained rank.
constexpr uint64_t kDeskSeed = 47;

testutil::TestObject& desk_object() {
    static testutil::TestObject obj = [] {
        Mesh quad = testutil::make_quad();
        MaterialOptions lambert;
        lambert.specular_scale = 0.0f;
        return testutil::build_test_object(16, 8, 1, 4, 72, 8, kDeskSeed, lambert, &quad);
    }();
    return obj;
}

Camera desk_camera() {
    Camera cam;
    cam.position = {0.45f, 0.45f, 2.0f};
    cam.look_at = {0.45f, 0.45f, 0.55f};
    cam.fov_degrees = 30.0f;
    cam.width = 128;
    cam.height = 128;
    return cam;
}

std::shared_ptr<const Snapshot> full_snapshot(const Container& container) {
    ProgressiveState state;
    state.apply_object_info(serialize_header(container.header));
    state.apply_geometry(container.geometry);
    for (const Chunk& c : container.chunks)
        state.apply_chunk(c.descriptor, c.payload);
    return state.snapshot();
}

// Mean relative deviation of a rendered flat-sample image from the analytic
// Lambert value, over pixels that are lit and safely interior to the quad.
// The 16^3 source lattice coincides with the finest voxel grid, so the hit
// position determines the source point without consulting the tree.
void check_lambert_image(const Image& img, const Camera& cam, uint64_t seed, float cos_theta) {
    MaterialOptions lambert;
    lambert.specular_scale = 0.0f;
    const float pi = 3.14159265358979f;
    float tan_half = std::tan(cam.fov_degrees * 0.5f * pi / 180.0f);
    double rel_sum = 0;
    int lit = 0;
    for (uint32_t y = 0; y < cam.height; ++y) {
        for (uint32_t x = 0; x < cam.width; ++x) {
            const Vec3& px = img.at(x, y);
            if (px.x + px.y + px.z <= 0)
                continue;
            float sx = (2.0f * (x + 0.5f) / cam.width - 1.0f) * tan_half;
            float sy = (1.0f - 2.0f * (y + 0.5f) / cam.height) * tan_half;
            float t = cam.position.z - 0.55f; // camera to sample plane
            Vec3 hit{cam.position.x + sx * t, cam.position.y + sy * t, 0.55f};
            if (hit.x < 0.22f || hit.x > 0.68f || hit.y < 0.22f || hit.y > 0.68f)
                continue;
            uint32_t ix = uint32_t(hit.x * 16.0f), iy = uint32_t(hit.y * 16.0f);
            uint32_t iz = uint32_t(hit.z * 16.0f);
            uint32_t point = (iz * 16 + iy) * 16 + ix;
            PointMaterial m = material_at(seed, point, lambert);
            Vec3 expected = m.albedo * (cos_theta / pi);
            rel_sum += std::fabs(px.x - expected.x) / std::max(expected.x, 1e-4f);
            rel_sum += std::fabs(px.y - expected.y) / std::max(expected.y, 1e-4f);
            rel_sum += std::fabs(px.z - expected.z) / std::max(expected.z, 1e-4f);
            lit += 3;
        }
    }
    require(lit > 3000, "too few lit pixels: " + std::to_string(lit));
    double mean_rel = rel_sum / lit;
    require(mean_rel < 0.02, "mean relative error " + std::to_string(mean_rel));
}

void check_order(const LoadOrder& order, uint32_t levels, uint32_t k_y, uint32_t k_uv) {
    require(order.size() == chunk_count(levels, k_y, k_uv), "order size mismatch");
    std::set<ChunkId> seen;
    for (const ChunkId& id : order)
        require(seen.insert(id).second, "duplicate chunk in order");

    std::set<uint32_t> voxel_seen;
    uint32_t layer_next[3] = {0, 0, 0};
    for (const ChunkId& id : order) {
        switch (id.kind) {
        case ChunkKind::Voxel:
            voxel_seen.insert(id.level);
            break;
        case ChunkKind::Spatial:
            require(voxel_seen.count(id.level) == 1, "spatial before its voxel chunk");
            break;
        case ChunkKind::Angular:
            require(id.layer == layer_next[id.channel], "angular layer out of order");
            ++layer_next[id.channel];
            break;
        }
    }
    require(layer_next[0] == k_y / 4 && layer_next[1] == k_uv / 4 && layer_next[2] == k_uv / 4,
            "angular layer totals wrong");

    require(order.size() >= 7, "order shorter than the renderable prefix");
    std::set<ChunkId> prefix(order.begin(), order.begin() + 7);
    require(prefix.count({ChunkKind::Voxel, 0, kNoChannel, 0}) == 1, "prefix misses voxel 0");
    for (uint8_t ch = 0; ch < 3; ++ch) {
        require(prefix.count({ChunkKind::Spatial, 0, ch, 0}) == 1, "prefix misses spatial 0");
        require(prefix.count({ChunkKind::Angular, kNoLevel, ch, 0}) == 1,
                "prefix misses angular layer 0");
    }
}

Mesh random_blob(std::mt19937& rng, int triangles) {
    std::uniform_real_distribution<float> uni(0.05f, 0.95f);
    Mesh mesh;
    for (int i = 0; i < triangles * 3; ++i)
        mesh.positions.push_back({uni(rng), uni(rng), uni(rng)});
    for (int i = 0; i < triangles; ++i)
        mesh.triangles.push_back({uint32_t(3 * i), uint32_t(3 * i + 1), uint32_t(3 * i + 2)});
    recompute_normals(mesh);
    return mesh;
}

// value(parent) = mean over present children, straight from the definition.
std::vector<float> lod_oracle_row(const OctreeBTF& tree, uint32_t depth, uint64_t code, int ch) {
    if (depth == tree.d_max) {
        const Voxel* v = tree.level_at_depth(depth).find(code);
        return v ? v->spatial[ch] : std::vector<float>{};
    }
    std::vector<float> acc;
    uint32_t n = 0;
    for (uint64_t child = code << 3; child < (code << 3) + 8; ++child) {
        if (!tree.level_at_depth(depth + 1).find(child))
            continue;
        std::vector<float> row = lod_oracle_row(tree, depth + 1, child, ch);
        if (row.empty())
            continue;
        if (acc.empty())
            acc.assign(row.size(), 0.0f);
        for (size_t i = 0; i < row.size(); ++i)
            acc[i] += row[i];
        ++n;
    }
    if (n == 0)
        return {};
    for (float& v : acc)
        v /= float(n);
    return acc;
}

void factorization_correctness() {
    std::mt19937 rng(12345);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        uint32_t rows = 8 + rng() % 57; // <= 64
        uint32_t cols = 4 + rng() % 45; // <= 48
        std::vector<float> m(size_t(rows) * cols);
        for (float& v : m)
            v = uni(rng);
        std::vector<double> md(m.begin(), m.end());
        std::vector<double> sv = testutil::jacobi_singular_values(md, rows, cols);
        double frob = testutil::frobenius(m);
        uint32_t kmax = std::min(rows, cols);
        for (uint32_t k = 1; k <= kmax; ++k) {
            std::vector<float> ang, spa;
            truncated_svd(m, rows, cols, k, ang, spa);
            double got = testutil::reconstruction_error(m, rows, cols, ang, spa, k, k);
            double want = 0;
            for (uint32_t c = k; c < kmax; ++c)
                want += sv[c] * sv[c];
            want = std::sqrt(want);
            require(std::fabs(got - want) <= 1e-6 * frob,
                    "rank-" + std::to_string(k) + " error off by " +
                        std::to_string(std::fabs(got - want) / frob) + " relative");
        }
    }
}

void chunk_inventory_constants() {
    require(chunk_count(5, 72, 8) == 42, "chunk_count(5, 72, 8) != 42");
    LoadOrder order = build_load_order(5, 72, 8);
    require(order.size() == 42, "load order size != 42");
    uint32_t voxel = 0, spatial = 0, angular[3] = {0, 0, 0};
    for (const ChunkId& id : order) {
        switch (id.kind) {
        case ChunkKind::Voxel: ++voxel; break;
        case ChunkKind::Spatial: ++spatial; break;
        case ChunkKind::Angular: ++angular[id.channel]; break;
        }
    }
    require(voxel == 5, "voxel chunk count != 5");
    require(spatial == 15, "spatial chunk count != 15");
    require(angular[0] == 18, "Y angular chunk count != 18");
    require(angular[1] == 2, "U angular chunk count != 2");
    require(angular[2] == 2, "V angular chunk count != 2");
}

void load_order_conformance() {
    const uint8_t Y = 0, U = 1, V = 2;
    LoadOrder expected = {
        {ChunkKind::Voxel, 0, kNoChannel, 0},
        {ChunkKind::Spatial, 0, Y, 0},
        {ChunkKind::Spatial, 0, U, 0},
        {ChunkKind::Spatial, 0, V, 0},
        {ChunkKind::Angular, kNoLevel, Y, 0},
        {ChunkKind::Angular, kNoLevel, U, 0},
        {ChunkKind::Angular, kNoLevel, V, 0},
        {ChunkKind::Voxel, 1, kNoChannel, 0},
        {ChunkKind::Spatial, 1, Y, 0},
        {ChunkKind::Angular, kNoLevel, Y, 1},
        {ChunkKind::Spatial, 1, U, 0},
        {ChunkKind::Spatial, 1, V, 0},
    };
    require(build_load_order(2, 8, 4) == expected, "hand-executed 12-entry case mismatch");

    std::mt19937 rng(2024);
    for (int i = 0; i < 200; ++i) {
        uint32_t l = 1 + rng() % 8;
        uint32_t ky = 4 * (1 + rng() % 25);
        uint32_t kuv = 4 * (1 + rng() % (ky / 4));
        check_order(build_load_order(l, ky, kuv), l, ky, kuv);
    }
}

void first_renderable_prefix() {
    testutil::TestObject& obj = desk_object();
    Camera cam = desk_camera();
    std::vector<LightSource> lights = {{LightKind::Directional, {}, {0, 0, -1}, {1, 1, 1}, 45.0f}};

    ProgressiveState state;
    state.apply_object_info(serialize_header(obj.container.header));
    state.apply_geometry(obj.container.geometry);
    for (size_t i = 0; i < 7; ++i) {
        bool threw = false;
        try {
            render(*state.snapshot(), cam, lights);
        } catch (const NotReadyError&) {
            threw = true;
        }
        require(threw, "render succeeded before the renderable prefix");
        state.apply_chunk(obj.container.chunks[i].descriptor, obj.container.chunks[i].payload);
    }

    auto snap = state.snapshot();
    require(snap->deepest_evaluable_level().has_value(), "prefix leaves nothing evaluable");
    require(*snap->deepest_evaluable_level() == 0, "deepest evaluable level != coarsest");
    for (int ch = 0; ch < 3; ++ch)
        require(snap->renderable_rank(ch) == 4, "renderable rank != 4");

    // Rank-4 reflectance evaluates finite at every coarsest-level voxel.
    const OctreeBTF& tree = snap->tree;
    Vec3 dir = parabolic_inverse(0.125f, 0.125f);
    GridSample light_s = sample_grid(tree.light_grid, dir);
    GridSample view_s = sample_grid(tree.view_grid, dir);
    const OctreeLevel& coarsest = tree.level_at_depth(tree.d_min);
    require(coarsest.voxels.size() == (1u << (3 * tree.d_min)), "coarsest level incomplete");
    for (const Voxel& v : coarsest.voxels) {
        Vec3 yuv;
        float* out[3] = {&yuv.x, &yuv.y, &yuv.z};
        for (int ch = 0; ch < 3; ++ch) {
            *out[ch] = evaluate_row(tree.angular[ch], tree.channel_k(ch), v.spatial[ch], view_s,
                                    light_s, tree.light_grid.cell_count(), 4);
            require(std::isfinite(*out[ch]), "non-finite channel value");
        }
        Vec3 refl = recorrelate_texel(yuv);
        require(std::isfinite(refl.x) && std::isfinite(refl.y) && std::isfinite(refl.z),
                "non-finite reflectance");
    }
    Image img = render(*snap, cam, lights);
    require(img.width == cam.width, "render after prefix failed");
}

void progressive_monotonicity() {
    testutil::TestObject& obj = desk_object();
    Camera cam = desk_camera();
    std::vector<LightSource> lights = {{LightKind::Directional, {}, {0, 0, -1}, {2, 2, 2}, 45.0f}};
    Image reference = render(*full_snapshot(obj.container), cam, lights);
    std::vector<CurvePoint> curve = quality_curve(obj.container, cam, lights, reference);
    require(!curve.empty(), "empty quality curve");
    for (size_t i = 1; i < curve.size(); ++i)
        require(curve[i].metrics.rmse <= curve[i - 1].metrics.rmse + 1e-6f,
                "RMSE increased at version " + std::to_string(curve[i].version));
    require(curve.front().metrics.rmse > 0.0f, "first curve point already exact");
    require(curve.back().metrics.rmse == 0.0f, "final RMSE not exactly zero");
}

void end_to_end_fidelity() {
    testutil::TestObject& obj = desk_object();
    StreamServer server(obj.container, "127.0.0.1", 0);
    StreamClient client("127.0.0.1", server.port());
    require(client.wait_complete(60000), "fetch timed out");
    Container fetched = client.assembled_container();
    require(serialize_container(fetched) == serialize_container(obj.container),
            "fetched container differs from the served one");
    client.close();
    server.stop();

    auto snap = full_snapshot(fetched);
    Camera cam = desk_camera();
    // Light aimed exactly at a parabolic texel center so the angular lookup
    // is interpolation-free; the quad's local frame maps world (x,y,z) to
    // (y, -x, z).
    Vec3 local = parabolic_inverse(0.125f, 0.125f);
    Vec3 to_light{-local.y, local.x, local.z};
    std::vector<LightSource> lights = {
        {LightKind::Directional, {}, to_light * -1.0f, {1, 1, 1}, 45.0f}};
    Image img = render(*snap, cam, lights);
    check_lambert_image(img, cam, kDeskSeed, local.z);
}

void multi_client_convergence() {
    testutil::TestObject obj = testutil::build_test_object(4, 4, 0, 2, 8, 4, 77);
    std::vector<uint8_t> reference = serialize_container(obj.container);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        StreamServer server(obj.container, "127.0.0.1", 0);
        std::vector<std::unique_ptr<StreamClient>> clients;
        std::mt19937 rng(9000 + seed);
        std::uniform_real_distribution<float> pos(0.0f, 1.0f);
        for (int i = 0; i < 3; ++i) {
            clients.push_back(std::make_unique<StreamClient>("127.0.0.1", server.port()));
            std::this_thread::sleep_for(std::chrono::milliseconds(1 + rng() % 5));
        }
        for (int i = 0; i < 20; ++i) {
            StreamClient& author = *clients[rng() % 3];
            AnnotationKind kind = AnnotationKind(rng() % 3);
            Vec3 p{pos(rng), pos(rng), pos(rng)};
            Annotation echo =
                author.place_annotation(kind, p, kind == AnnotationKind::Text ? "note" : "",
                                        kind == AnnotationKind::StrokePoint ? rng() % 8 : 0);
            require(echo.sequence == uint64_t(i + 1), "echoed sequence out of order");
        }
        for (auto& c : clients) {
            require(c->wait_complete(30000), "client never completed");
            require(c->wait_annotations(20, 30000), "client missed annotations");
        }
        std::vector<Annotation> log = server.annotation_log();
        require(log.size() == 20, "server log size != 20");
        for (auto& c : clients) {
            require(serialize_container(c->assembled_container()) == reference,
                    "assembled payloads differ");
            require(c->annotation_log() == log, "annotation logs differ");
        }
        for (auto& c : clients)
            c->close();
        server.stop();
    }
}

void container_codec_roundtrips() {
    testutil::TestObject obj = testutil::build_test_object(4, 4, 0, 2, 8, 4, 31);
    std::vector<uint8_t> bytes = serialize_container(obj.container);
    Container back = parse_container(bytes);
    require(serialize_container(back) == bytes, "container reserialization differs");

    std::mt19937 rng(606);
    for (const Chunk& c : obj.container.chunks) {
        std::vector<uint8_t> raw = decompress_chunk(c);
        Chunk again = compress_chunk(c.descriptor.id, raw);
        require(decompress_chunk(again) == raw, "zstd roundtrip not bit-identical");

        Chunk corrupt = c;
        size_t at = rng() % corrupt.payload.size();
        corrupt.payload[at] ^= uint8_t(1 + rng() % 255);
        bool detected = false;
        try {
            decompress_chunk(corrupt);
        } catch (const FormatError&) {
            detected = true;
        }
        require(detected, "single-byte chunk corruption not detected");
    }
    for (int i = 0; i < 20; ++i) {
        std::vector<uint8_t> mangled = bytes;
        size_t at = rng() % mangled.size();
        mangled[at] ^= uint8_t(1 + rng() % 255);
        bool detected = false;
        try {
            Container c = parse_container(mangled);
            detected = serialize_container(c) != bytes; // header-field flips parse but differ
        } catch (const FormatError&) {
            detected = true;
        }
        require(detected, "container byte flip at " + std::to_string(at) + " not detected");
    }
}

void environment_approximation() {
    Image env(32, 16);
    for (auto& p : env.pixels)
        p = {0.5f, 0.5f, 0.5f};
    std::vector<LightSource> lights = approximate_environment(env, 8);
    require(lights.size() == 8, "expected eight lights");
    double total = 0;
    std::vector<double> powers;
    for (const auto& l : lights) {
        require(l.kind == LightKind::Directional, "light is not directional");
        double p = l.intensity.x + l.intensity.y + l.intensity.z;
        powers.push_back(p);
        total += p;
    }
    double mean = total / 8;
    for (double p : powers)
        require(std::fabs(p - mean) / mean < 1e-3, "light powers not equal");

    const double pi = 3.14159265358979;
    double oracle = 0;
    for (uint32_t y = 0; y < env.height; ++y) {
        double theta = (y + 0.5) / env.height * pi;
        double omega = std::sin(theta) * (2 * pi / env.width) * (pi / env.height);
        for (uint32_t x = 0; x < env.width; ++x) {
            const Vec3& p = env.at(x, y);
            oracle += (p.x + p.y + p.z) * omega;
        }
    }
    require(std::fabs(total - oracle) / oracle < 1e-4, "total power not conserved");
}

void lod_averaging() {
    std::mt19937 rng(3030);
    DirectionGrid g = build_direction_grid(2);
    for (int trial = 0; trial < 20; ++trial) {
        uint32_t d_max = 2 + rng() % 3; // <= 4
        uint32_t d_min = rng() % (d_max + 1);
        Mesh mesh = random_blob(rng, 4 + int(rng() % 5));
        OctreeBTF tree = voxelize(mesh, d_min, d_max);
        BTFTensor t = synthesize_btf(2, g, g, 5000 + trial);
        CompressedBtf channels = compress_dfmf(t, 4, 4);
        assign_spatial(tree, channels, lattice_points(2));
        build_lod(tree);

        for (uint32_t depth = d_min; depth < d_max; ++depth) {
            for (const Voxel& v : tree.level_at_depth(depth).voxels) {
                for (int ch = 0; ch < 3; ++ch) {
                    std::vector<float> expected = lod_oracle_row(tree, depth, v.code, ch);
                    if (expected.empty()) {
                        for (float x : v.spatial[ch])
                            require(x == 0.0f, "filler voxel row not zero");
                        continue;
                    }
                    require(v.spatial[ch].size() == expected.size(), "row size mismatch");
                    for (size_t i = 0; i < expected.size(); ++i)
                        require(std::fabs(v.spatial[ch][i] - expected[i]) <=
                                    1e-6f * std::max(1.0f, std::fabs(expected[i])),
                                "parent row differs from the child mean");
                }
            }
        }
    }
}

} // namespace

int main() {
    criterion(1, "factorization correctness", factorization_correctness);
    criterion(2, "chunk inventory constants", chunk_inventory_constants);
    criterion(3, "load order conformance", load_order_conformance);
    criterion(4, "first renderable prefix", first_renderable_prefix);
    criterion(5, "progressive monotonicity", progressive_monotonicity);
    criterion(6, "end-to-end fidelity", end_to_end_fidelity);
    criterion(7, "multi-client convergence", multi_client_convergence);
    criterion(8, "container codec roundtrips", container_codec_roundtrips);
    criterion(9, "environment approximation", environment_approximation);
    criterion(10, "LOD averaging", lod_averaging);
    return failures == 0 ? 0 : 1;
}
