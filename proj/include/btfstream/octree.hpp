#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "btfstream/btf.hpp"
#include "btfstream/mesh.hpp"
#include "btfstream/vecmath.hpp"

namespace btfstream {

constexpr uint32_t kMaxOctreeDepth = 10;

// Locational codes pack 3 bits per level from the root (x | y<<1 | z<<2 per
// step); sorting by code within a level is Morton order, parent = code >> 3.
uint64_t locational_code(uint32_t ix, uint32_t iy, uint32_t iz, uint32_t depth);

struct Voxel {
    uint64_t code = 0;
    Vec3 normal{0, 0, 1};
    Vec3 tangent{1, 0, 0};
    uint32_t assigned_point = UINT32_MAX;               // finest level only
    std::array<std::vector<float>, 3> spatial;          // per-channel factor rows (Y, U, V)
};

// tangent = normalize(n x a), a = (1,0,0) unless the normal is nearly
// aligned with it.
Vec3 tangent_for_normal(const Vec3& n);

struct OctreeLevel {
    uint32_t depth = 0;
    std::vector<Voxel> voxels; // sorted by code, unique

    const Voxel* find(uint64_t code) const;
    Voxel* find(uint64_t code);
};

// Sparse surface octree over [0,1]^3 carrying the factorized reflectance:
// levels d_min..d_max, the level at d_min forced complete, finer levels
// closed under parents. Angular factors are shared across levels.
struct OctreeBTF {
    uint32_t d_min = 0;
    uint32_t d_max = 0;
    std::vector<OctreeLevel> levels; // index = depth - d_min

    DirectionGrid light_grid;
    DirectionGrid view_grid;
    uint32_t k_y = 0, k_uv = 0;
    uint32_t direction_pairs = 0;
    std::array<std::vector<float>, 3> angular; // D x k row-major per channel (Y, U, V)

    bool spatial_assigned = false;
    bool lod_built = false;

    uint32_t level_count() const { return d_max - d_min + 1; }
    OctreeLevel& level_at_depth(uint32_t depth) { return levels[depth - d_min]; }
    const OctreeLevel& level_at_depth(uint32_t depth) const { return levels[depth - d_min]; }
    uint32_t channel_k(int ch) const { return ch == 0 ? k_y : k_uv; }
};

// Surface voxelization by triangle-box overlap at d_max, parent closure
// upward, completion at d_min.
OctreeBTF voxelize(const Mesh& mesh, uint32_t d_min, uint32_t d_max);

// Nearest-source-point factor assignment at the finest level.
void assign_spatial(OctreeBTF& tree, const CompressedBtf& channels,
                    const std::vector<Vec3>& point_positions);

// Per-level top-down child averaging, d_max-1 down to d_min. Complete-level
// fillers without children get zero rows and normal (0,0,1).
void build_lod(OctreeBTF& tree);

struct LookupResult {
    const Voxel* voxel = nullptr;
    uint32_t depth = 0;
    bool exact = false; // found at the requested depth (vs deepest ancestor)
};

LookupResult lookup(const OctreeBTF& tree, const Vec3& position, uint32_t depth);

// Triangle-box overlap (separating axis test); box given by center and
// half-extent.
bool triangle_box_overlap(const Vec3& center, float half, const Vec3& a, const Vec3& b,
                          const Vec3& c);

Vec3 voxel_center(uint64_t code, uint32_t depth);

} // namespace btfstream
