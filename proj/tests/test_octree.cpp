#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "btfstream/errors.hpp"
#include "btfstream/mesh.hpp"
#include "btfstream/octree.hpp"
#include "test_util.hpp"

using namespace btfstream;

namespace {

// Independent conservative triangle-box overlap used as the voxelization
// oracle: interval test on all 13 SAT axes, written from the theorem rather
// than mirrored from the implementation.
bool oracle_overlap(const Vec3& lo, const Vec3& hi, Vec3 a, Vec3 b, Vec3 c) {
    Vec3 center = (lo + hi) * 0.5f;
    Vec3 half = (hi - lo) * 0.5f;
    a = a - center;
    b = b - center;
    c = c - center;
    auto axis_separates = [&](const Vec3& axis) {
        float pa = dot(a, axis), pb = dot(b, axis), pc = dot(c, axis);
        float tri_min = std::min(pa, std::min(pb, pc));
        float tri_max = std::max(pa, std::max(pb, pc));
        float r = half.x * std::fabs(axis.x) + half.y * std::fabs(axis.y) +
                  half.z * std::fabs(axis.z);
        return tri_min > r || tri_max < -r;
    };
    Vec3 axes[13];
    int n = 0;
    axes[n++] = {1, 0, 0};
    axes[n++] = {0, 1, 0};
    axes[n++] = {0, 0, 1};
    Vec3 edges[3] = {b - a, c - b, a - c};
    axes[n++] = cross(edges[0], edges[1]); // triangle normal
    for (const Vec3& e : edges) {
        axes[n++] = cross(e, Vec3{1, 0, 0});
        axes[n++] = cross(e, Vec3{0, 1, 0});
        axes[n++] = cross(e, Vec3{0, 0, 1});
    }
    for (int i = 0; i < n; ++i)
        if (axis_separates(axes[i]))
            return false;
    return true;
}

std::set<uint64_t> oracle_surface_cells(const Mesh& mesh, uint32_t depth) {
    std::set<uint64_t> cells;
    uint32_t res = 1u << depth;
    float cell = 1.0f / res;
    for (uint32_t iz = 0; iz < res; ++iz)
        for (uint32_t iy = 0; iy < res; ++iy)
            for (uint32_t ix = 0; ix < res; ++ix) {
                Vec3 lo{ix * cell, iy * cell, iz * cell};
                Vec3 hi{(ix + 1) * cell, (iy + 1) * cell, (iz + 1) * cell};
                for (const auto& t : mesh.triangles) {
                    if (oracle_overlap(lo, hi, mesh.positions[t[0]], mesh.positions[t[1]],
                                       mesh.positions[t[2]])) {
                        cells.insert(locational_code(ix, iy, iz, depth));
                        break;
                    }
                }
            }
    return cells;
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

} // namespace

TEST_CASE("locational codes") {
    CHECK(locational_code(0, 0, 0, 1) == 0);
    CHECK(locational_code(1, 0, 0, 1) == 1);
    CHECK(locational_code(0, 1, 0, 1) == 2);
    CHECK(locational_code(0, 0, 1, 1) == 4);
    CHECK((locational_code(1, 1, 1, 2) >> 3) == locational_code(0, 0, 0, 1));
    CHECK((locational_code(3, 3, 3, 2) >> 3) == locational_code(1, 1, 1, 1));
    Vec3 c = voxel_center(locational_code(2, 1, 3, 2), 2);
    CHECK(c.x == doctest::Approx(0.625f));
    CHECK(c.y == doctest::Approx(0.375f));
    CHECK(c.z == doctest::Approx(0.875f));
}

TEST_CASE("voxelize basic shapes") {
    SUBCASE("unit cube surface fills depth 1") {
        OctreeBTF tree = voxelize(make_cube(0.0f, 1.0f), 0, 1);
        CHECK(tree.level_at_depth(1).voxels.size() == 8);
        CHECK(tree.level_at_depth(0).voxels.size() == 1);
    }
    SUBCASE("single octant triangle") {
        Mesh mesh;
        mesh.positions = {{0.1f, 0.1f, 0.25f}, {0.4f, 0.1f, 0.25f}, {0.1f, 0.4f, 0.25f}};
        mesh.triangles = {{0, 1, 2}};
        recompute_normals(mesh);
        OctreeBTF tree = voxelize(mesh, 0, 1);
        REQUIRE(tree.level_at_depth(1).voxels.size() == 1);
        CHECK(tree.level_at_depth(1).voxels[0].code == 0);
    }
    SUBCASE("root-only tree") {
        OctreeBTF tree = voxelize(make_cube(0.25f, 0.75f), 0, 0);
        CHECK(tree.level_count() == 1);
        CHECK(tree.level_at_depth(0).voxels.size() == 1);
    }
    SUBCASE("empty mesh rejected") {
        Mesh mesh;
        CHECK_THROWS_AS(voxelize(mesh, 0, 2), ValidationError);
    }
    SUBCASE("depth cap enforced") {
        CHECK_THROWS_AS(voxelize(make_cube(0.0f, 1.0f), 0, 11), ValidationError);
    }
}

TEST_CASE("voxelize matches the brute-force cell oracle") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        Mesh mesh = random_blob(rng, 6);
        uint32_t d_max = 3;
        OctreeBTF tree = voxelize(mesh, 1, d_max);
        std::set<uint64_t> expected = oracle_surface_cells(mesh, d_max);
        std::set<uint64_t> got;
        for (const Voxel& v : tree.level_at_depth(d_max).voxels)
            got.insert(v.code);
        CHECK(got == expected);

        // Parent closure: every finer voxel's parent is present.
        for (uint32_t depth = tree.d_min + 1; depth <= d_max; ++depth)
            for (const Voxel& v : tree.level_at_depth(depth).voxels)
                CHECK(tree.level_at_depth(depth - 1).find(v.code >> 3) != nullptr);
        // Coarsest level complete.
        CHECK(tree.level_at_depth(tree.d_min).voxels.size() == (1u << (3 * tree.d_min)));
        // Sorted unique codes, orthogonal frames.
        for (const OctreeLevel& level : tree.levels) {
            for (size_t i = 1; i < level.voxels.size(); ++i)
                CHECK(level.voxels[i - 1].code < level.voxels[i].code);
            for (const Voxel& v : level.voxels) {
                CHECK(std::fabs(dot(v.normal, v.tangent)) < 1e-5f);
                CHECK(length(v.normal) == doctest::Approx(1.0f).epsilon(1e-4));
                CHECK(length(v.tangent) == doctest::Approx(1.0f).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("spatial assignment is exact nearest neighbor") {
    std::mt19937 rng(77);
    DirectionGrid g = build_direction_grid(2);
    SUBCASE("points at voxel centers map to themselves") {
        // 2^2 = 4 cells per axis at depth 2 and a 4-lattice coincide.
        testutil::TestObject obj = testutil::build_test_object(4, 2, 0, 2, 4, 4, 5);
        std::vector<Vec3> pts = lattice_points(4);
        for (const Voxel& v : obj.tree.level_at_depth(2).voxels) {
            Vec3 c = voxel_center(v.code, 2);
            const Vec3& p = pts[v.assigned_point];
            CHECK(length(c - p) < 1e-6f);
        }
    }
    SUBCASE("random points match the brute-force scan") {
        Mesh mesh = random_blob(rng, 5);
        OctreeBTF tree = voxelize(mesh, 0, 3);
        std::uniform_real_distribution<float> uni(0.0f, 1.0f);
        uint32_t grid = 3; // 27 lattice points
        std::vector<Vec3> pts = lattice_points(grid);
        BTFTensor t = synthesize_btf(grid, g, g, 13);
        CompressedBtf channels = compress_dfmf(t, 4, 4);
        assign_spatial(tree, channels, pts);
        for (const Voxel& v : tree.level_at_depth(3).voxels) {
            Vec3 c = voxel_center(v.code, 3);
            uint32_t best = 0;
            float best_d = 1e30f;
            for (uint32_t i = 0; i < pts.size(); ++i) {
                float d = length(pts[i] - c);
                if (d < best_d - 1e-9f) {
                    best_d = d;
                    best = i;
                }
            }
            CHECK(v.assigned_point == best);
            // The stored rows are the assigned point's factor columns.
            for (uint32_t comp = 0; comp < 4; ++comp)
                CHECK(v.spatial[0][comp] == channels.y.spatial[comp * pts.size() + best]);
        }
    }
}

namespace {

// Recursive per-level mean oracle: value(parent) = mean over present children
// of value(child), computed straight from the definition.
std::vector<float> oracle_row(const OctreeBTF& tree, uint32_t depth, uint64_t code, int ch,
                              const std::map<std::pair<uint32_t, uint64_t>, std::vector<float>>& leaf_rows) {
    if (depth == tree.d_max)
        return leaf_rows.at({depth, code});
    std::vector<float> acc;
    uint32_t n = 0;
    for (uint64_t child = code << 3; child < (code << 3) + 8; ++child) {
        if (!tree.level_at_depth(depth + 1).find(child))
            continue;
        std::vector<float> row = oracle_row(tree, depth + 1, child, ch, leaf_rows);
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

} // namespace

TEST_CASE("LOD averaging matches the recursive oracle") {
    std::mt19937 rng(55);
    for (int trial = 0; trial < 5; ++trial) {
        Mesh mesh = random_blob(rng, 4);
        OctreeBTF tree = voxelize(mesh, 1, 3);
        DirectionGrid g = build_direction_grid(2);
        BTFTensor t = synthesize_btf(2, g, g, 1000 + trial);
        CompressedBtf channels = compress_dfmf(t, 4, 4);
        assign_spatial(tree, channels, lattice_points(2));
        build_lod(tree);

        std::map<std::pair<uint32_t, uint64_t>, std::vector<float>> leaves;
        for (const Voxel& v : tree.level_at_depth(tree.d_max).voxels)
            leaves[{tree.d_max, v.code}] = v.spatial[0];
        for (uint32_t depth = tree.d_min; depth < tree.d_max; ++depth) {
            for (const Voxel& v : tree.level_at_depth(depth).voxels) {
                std::vector<float> expected = oracle_row(tree, depth, v.code, 0, leaves);
                if (expected.empty()) {
                    // Filler on a forced-complete level: zero rows.
                    for (float x : v.spatial[0])
                        CHECK(x == 0.0f);
                    continue;
                }
                REQUIRE(v.spatial[0].size() == expected.size());
                for (size_t i = 0; i < expected.size(); ++i)
                    CHECK(v.spatial[0][i] == doctest::Approx(expected[i]).epsilon(1e-6));
                // Mean stays inside the children's range.
                for (size_t i = 0; i < expected.size(); ++i) {
                    float mn = 1e30f, mx = -1e30f;
                    for (uint64_t child = v.code << 3; child < (v.code << 3) + 8; ++child) {
                        const Voxel* cv = tree.level_at_depth(depth + 1).find(child);
                        if (!cv)
                            continue;
                        mn = std::min(mn, cv->spatial[0][i]);
                        mx = std::max(mx, cv->spatial[0][i]);
                    }
                    CHECK(v.spatial[0][i] >= mn - 1e-6f);
                    CHECK(v.spatial[0][i] <= mx + 1e-6f);
                }
            }
        }
    }
}

TEST_CASE("lookup agrees with a linear scan") {
    std::mt19937 rng(8);
    Mesh mesh = random_blob(rng, 6);
    OctreeBTF tree = voxelize(mesh, 1, 3);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (int i = 0; i < 500; ++i) {
        Vec3 p{uni(rng), uni(rng), uni(rng)};
        for (uint32_t depth = tree.d_min; depth <= tree.d_max; ++depth) {
            uint32_t res = 1u << depth;
            uint32_t ix = std::min(uint32_t(p.x * res), res - 1);
            uint32_t iy = std::min(uint32_t(p.y * res), res - 1);
            uint32_t iz = std::min(uint32_t(p.z * res), res - 1);
            uint64_t code = locational_code(ix, iy, iz, depth);
            const Voxel* expected = nullptr;
            for (const Voxel& v : tree.level_at_depth(depth).voxels)
                if (v.code == code)
                    expected = &v;
            LookupResult got = lookup(tree, p, depth);
            if (expected) {
                CHECK(got.voxel == expected);
                CHECK(got.exact);
                CHECK(got.depth == depth);
            } else if (got.voxel) {
                CHECK_FALSE(got.exact);
                CHECK(got.depth < depth);
                // Returned voxel is an ancestor cell of the query position.
                CHECK(got.voxel->code == code >> (3 * (depth - got.depth)));
            }
        }
        // The coarsest level is complete, so depth d_min never misses.
        CHECK(lookup(tree, p, tree.d_min).exact);
    }
    CHECK_THROWS_AS(lookup(tree, {1.5f, 0.5f, 0.5f}, 2), ValidationError);
}

TEST_CASE("mesh normalization and geometry wire form") {
    std::mt19937 rng(3);
    Mesh mesh = random_blob(rng, 5);
    for (Vec3& p : mesh.positions)
        p = p * 4.0f + Vec3{-2.0f, 1.0f, 5.0f};
    normalize_to_unit_cube(mesh);
    Vec3 lo{1e30f, 1e30f, 1e30f}, hi{-1e30f, -1e30f, -1e30f};
    for (const Vec3& p : mesh.positions) {
        lo = min3(lo, p);
        hi = max3(hi, p);
    }
    CHECK(lo.x >= -1e-5f);
    CHECK(hi.x <= 1.0f + 1e-5f);
    float extent = std::max(hi.x - lo.x, std::max(hi.y - lo.y, hi.z - lo.z));
    CHECK(extent == doctest::Approx(1.0f).epsilon(1e-4));

    Mesh back = deserialize_geometry(serialize_geometry(mesh));
    REQUIRE(back.positions.size() == mesh.positions.size());
    REQUIRE(back.triangles.size() == mesh.triangles.size());
    for (size_t i = 0; i < mesh.positions.size(); ++i)
        CHECK(length(back.positions[i] - mesh.positions[i]) == 0.0f);
    CHECK(back.triangles == mesh.triangles);
}

TEST_CASE("placeholder sphere is deterministic") {
    Mesh a = placeholder_sphere();
    Mesh b = placeholder_sphere();
    CHECK(a.triangles.size() == 320);
    CHECK(serialize_geometry(a) == serialize_geometry(b));
    for (const Vec3& p : a.positions) {
        CHECK(length(p - Vec3{0.5f, 0.5f, 0.5f}) == doctest::Approx(0.5f).epsilon(1e-4));
    }
}
