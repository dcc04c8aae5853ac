#include "btfstream/octree.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "btfstream/errors.hpp"

namespace btfstream {

uint64_t locational_code(uint32_t ix, uint32_t iy, uint32_t iz, uint32_t depth) {
    uint64_t code = 0;
    for (uint32_t d = 0; d < depth; ++d) {
        uint32_t bit = depth - 1 - d;
        uint64_t child = ((ix >> bit) & 1u) | (((iy >> bit) & 1u) << 1) | (((iz >> bit) & 1u) << 2);
        code = (code << 3) | child;
    }
    return code;
}

Vec3 tangent_for_normal(const Vec3& n) {
    Vec3 a = std::fabs(n.x) > 0.9f ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    return normalize(cross(n, a));
}

Vec3 voxel_center(uint64_t code, uint32_t depth) {
    uint32_t ix = 0, iy = 0, iz = 0;
    for (uint32_t d = 0; d < depth; ++d) {
        uint64_t child = (code >> (3 * (depth - 1 - d))) & 7u;
        ix = (ix << 1) | uint32_t(child & 1u);
        iy = (iy << 1) | uint32_t((child >> 1) & 1u);
        iz = (iz << 1) | uint32_t((child >> 2) & 1u);
    }
    float cell = 1.0f / float(1u << depth);
    return {(ix + 0.5f) * cell, (iy + 0.5f) * cell, (iz + 0.5f) * cell};
}

const Voxel* OctreeLevel::find(uint64_t code) const {
    auto it = std::lower_bound(voxels.begin(), voxels.end(), code,
                               [](const Voxel& v, uint64_t c) { return v.code < c; });
    return (it != voxels.end() && it->code == code) ? &*it : nullptr;
}

Voxel* OctreeLevel::find(uint64_t code) {
    return const_cast<Voxel*>(static_cast<const OctreeLevel*>(this)->find(code));
}

namespace {

bool axis_test(const Vec3& axis, const Vec3& a, const Vec3& b, const Vec3& c, float half) {
    float pa = dot(axis, a), pb = dot(axis, b), pc = dot(axis, c);
    float r = half * (std::fabs(axis.x) + std::fabs(axis.y) + std::fabs(axis.z));
    float lo = std::min({pa, pb, pc}), hi = std::max({pa, pb, pc});
    return lo > r || hi < -r;
}

} // namespace

bool triangle_box_overlap(const Vec3& center, float half, const Vec3& va, const Vec3& vb,
                          const Vec3& vc) {
    Vec3 a = va - center, b = vb - center, c = vc - center;

    // Box axes.
    if (std::min({a.x, b.x, c.x}) > half || std::max({a.x, b.x, c.x}) < -half) return false;
    if (std::min({a.y, b.y, c.y}) > half || std::max({a.y, b.y, c.y}) < -half) return false;
    if (std::min({a.z, b.z, c.z}) > half || std::max({a.z, b.z, c.z}) < -half) return false;

    // Triangle plane.
    Vec3 e0 = b - a, e1 = c - b, e2 = a - c;
    Vec3 n = cross(e0, e1);
    if (axis_test(n, a, b, c, half))
        return false;

    // 9 edge cross products.
    const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (const Vec3& e : {e0, e1, e2})
        for (const Vec3& u : axes) {
            Vec3 axis = cross(u, e);
            if (dot(axis, axis) > 1e-12f && axis_test(axis, a, b, c, half))
                return false;
        }
    return true;
}

namespace {

struct SurfaceAccum {
    Vec3 normal_sum{0, 0, 0};
};

void insert_triangle(std::map<uint64_t, SurfaceAccum>& cells, const Vec3& a, const Vec3& b,
                     const Vec3& c, const Vec3& weighted_normal, uint64_t code, uint32_t depth,
                     uint32_t d_max) {
    Vec3 center = voxel_center(code, depth);
    float half = 0.5f / float(1u << depth);
    if (!triangle_box_overlap(center, half, a, b, c))
        return;
    if (depth == d_max) {
        cells[code].normal_sum += weighted_normal;
        return;
    }
    for (uint64_t child = 0; child < 8; ++child)
        insert_triangle(cells, a, b, c, weighted_normal, (code << 3) | child, depth + 1, d_max);
}

} // namespace

OctreeBTF voxelize(const Mesh& mesh, uint32_t d_min, uint32_t d_max) {
    if (mesh.empty())
        throw ValidationError("cannot voxelize an empty mesh");
    if (d_min > d_max)
        throw ValidationError("d_min must not exceed d_max");
    if (d_max > kMaxOctreeDepth)
        throw ValidationError("d_max exceeds the depth cap of 10");

    std::map<uint64_t, SurfaceAccum> surface;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.positions[t[0]];
        const Vec3& b = mesh.positions[t[1]];
        const Vec3& c = mesh.positions[t[2]];
        Vec3 weighted = cross(b - a, c - a) * 0.5f; // area-weighted face normal
        insert_triangle(surface, a, b, c, weighted, 0, 0, d_max);
    }
    if (surface.empty())
        throw ValidationError("mesh produced no surface voxels");

    OctreeBTF tree;
    tree.d_min = d_min;
    tree.d_max = d_max;
    tree.levels.resize(tree.level_count());
    for (uint32_t depth = d_min; depth <= d_max; ++depth)
        tree.levels[depth - d_min].depth = depth;

    OctreeLevel& finest = tree.level_at_depth(d_max);
    finest.voxels.reserve(surface.size());
    for (const auto& [code, acc] : surface) {
        Voxel v;
        v.code = code;
        v.normal = normalize(acc.normal_sum);
        if (v.normal == Vec3{0, 0, 0})
            v.normal = {0, 0, 1};
        v.tangent = tangent_for_normal(v.normal);
        finest.voxels.push_back(std::move(v));
    }

    // Parent closure upward; coarse normals from child means (rebuilt again
    // by build_lod once spatial data exists).
    for (uint32_t depth = d_max; depth > d_min; --depth) {
        const OctreeLevel& lower = tree.level_at_depth(depth);
        OctreeLevel& upper = tree.level_at_depth(depth - 1);
        std::map<uint64_t, Vec3> parents;
        for (const Voxel& v : lower.voxels)
            parents[v.code >> 3] += v.normal;
        upper.voxels.reserve(parents.size());
        for (const auto& [code, nsum] : parents) {
            Voxel v;
            v.code = code;
            v.normal = normalize(nsum);
            if (v.normal == Vec3{0, 0, 0})
                v.normal = {0, 0, 1};
            v.tangent = tangent_for_normal(v.normal);
            upper.voxels.push_back(std::move(v));
        }
    }

    // Force the coarsest stored level complete.
    OctreeLevel& coarsest = tree.level_at_depth(d_min);
    uint64_t cells = 1ull << (3 * d_min);
    std::vector<Voxel> complete;
    complete.reserve(cells);
    size_t src = 0;
    for (uint64_t code = 0; code < cells; ++code) {
        if (src < coarsest.voxels.size() && coarsest.voxels[src].code == code) {
            complete.push_back(std::move(coarsest.voxels[src++]));
        } else {
            Voxel filler;
            filler.code = code;
            filler.tangent = tangent_for_normal(filler.normal);
            complete.push_back(std::move(filler));
        }
    }
    coarsest.voxels = std::move(complete);
    return tree;
}

namespace {

// Uniform-grid accelerated exact nearest neighbor (ties broken by smallest
// point index).
class NearestPointIndex {
public:
    explicit NearestPointIndex(const std::vector<Vec3>& points) : points_(points) {
        res_ = std::max(1u, uint32_t(std::cbrt(double(points.size()) / 2.0)));
        cells_.resize(size_t(res_) * res_ * res_);
        for (uint32_t i = 0; i < points.size(); ++i)
            cells_[cell_of(points[i])].push_back(i);
    }

    uint32_t nearest(const Vec3& q) const {
        uint32_t best = UINT32_MAX;
        float best_d2 = std::numeric_limits<float>::max();
        uint32_t qx = coord(q.x), qy = coord(q.y), qz = coord(q.z);
        for (uint32_t ring = 0;; ++ring) {
            // Once a hit exists, a ring beyond the guaranteed-closer bound
            // cannot improve it.
            if (best != UINT32_MAX) {
                float safe = (float(ring) - 1.0f) / float(res_);
                if (safe > 0.0f && best_d2 <= safe * safe)
                    break;
            }
            bool any_cell = false;
            int lo[3] = {int(qx) - int(ring), int(qy) - int(ring), int(qz) - int(ring)};
            int hi[3] = {int(qx) + int(ring), int(qy) + int(ring), int(qz) + int(ring)};
            for (int z = lo[2]; z <= hi[2]; ++z)
                for (int y = lo[1]; y <= hi[1]; ++y)
                    for (int x = lo[0]; x <= hi[0]; ++x) {
                        bool shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] ||
                                     z == lo[2] || z == hi[2];
                        if (!shell || x < 0 || y < 0 || z < 0 || x >= int(res_) || y >= int(res_) ||
                            z >= int(res_))
                            continue;
                        any_cell = true;
                        for (uint32_t i : cells_[(size_t(z) * res_ + y) * res_ + x]) {
                            Vec3 d = points_[i] - q;
                            float d2 = dot(d, d);
                            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
                                best_d2 = d2;
                                best = i;
                            }
                        }
                    }
            if (!any_cell && ring > res_)
                break;
        }
        return best;
    }

private:
    uint32_t coord(float v) const {
        return std::min(res_ - 1, uint32_t(std::fmax(v, 0.0f) * res_));
    }
    size_t cell_of(const Vec3& p) const {
        return (size_t(coord(p.z)) * res_ + coord(p.y)) * res_ + coord(p.x);
    }

    const std::vector<Vec3>& points_;
    uint32_t res_;
    std::vector<std::vector<uint32_t>> cells_;
};

} // namespace

void assign_spatial(OctreeBTF& tree, const CompressedBtf& channels,
                    const std::vector<Vec3>& point_positions) {
    if (point_positions.empty())
        throw ValidationError("no source points for spatial assignment");
    if (point_positions.size() != channels.point_count)
        throw ValidationError("point position count does not match P");

    tree.light_grid = channels.light_grid;
    tree.view_grid = channels.view_grid;
    tree.k_y = channels.y.component_count;
    tree.k_uv = channels.u.component_count;
    tree.direction_pairs = channels.y.direction_pairs;
    tree.angular[0] = channels.y.angular;
    tree.angular[1] = channels.u.angular;
    tree.angular[2] = channels.v.angular;

    const CompressedChannel* src[3] = {&channels.y, &channels.u, &channels.v};
    NearestPointIndex index(point_positions);
    for (Voxel& v : tree.level_at_depth(tree.d_max).voxels) {
        uint32_t p = index.nearest(voxel_center(v.code, tree.d_max));
        v.assigned_point = p;
        for (int ch = 0; ch < 3; ++ch) {
            uint32_t k = src[ch]->component_count;
            v.spatial[ch].resize(k);
            for (uint32_t c = 0; c < k; ++c)
                v.spatial[ch][c] = src[ch]->spatial[size_t(c) * channels.point_count + p];
        }
    }
    tree.spatial_assigned = true;
    tree.lod_built = false;
}

void build_lod(OctreeBTF& tree) {
    if (!tree.spatial_assigned)
        throw NotReadyError("finest level has no spatial data yet");
    for (uint32_t depth = tree.d_max; depth-- > tree.d_min;) {
        const OctreeLevel& lower = tree.level_at_depth(depth + 1);
        OctreeLevel& upper = tree.level_at_depth(depth);
        for (Voxel& v : upper.voxels) {
            Vec3 nsum{0, 0, 0};
            uint32_t child_count = 0;
            for (int ch = 0; ch < 3; ++ch)
                v.spatial[ch].assign(tree.channel_k(ch), 0.0f);
            std::array<std::vector<double>, 3> acc;
            for (int ch = 0; ch < 3; ++ch)
                acc[ch].assign(tree.channel_k(ch), 0.0);
            uint64_t base = v.code << 3;
            auto it = std::lower_bound(lower.voxels.begin(), lower.voxels.end(), base,
                                       [](const Voxel& w, uint64_t c) { return w.code < c; });
            for (; it != lower.voxels.end() && it->code <= (base | 7); ++it) {
                ++child_count;
                nsum += it->normal;
                for (int ch = 0; ch < 3; ++ch)
                    for (uint32_t c = 0; c < tree.channel_k(ch); ++c)
                        acc[ch][c] += it->spatial[ch][c];
            }
            if (child_count == 0) {
                v.normal = {0, 0, 1};
                v.tangent = tangent_for_normal(v.normal);
                continue;
            }
            for (int ch = 0; ch < 3; ++ch)
                for (uint32_t c = 0; c < tree.channel_k(ch); ++c)
                    v.spatial[ch][c] = float(acc[ch][c] / child_count);
            v.normal = normalize(nsum);
            if (v.normal == Vec3{0, 0, 0})
                v.normal = {0, 0, 1};
            v.tangent = tangent_for_normal(v.normal);
        }
    }
    tree.lod_built = true;
}

LookupResult lookup(const OctreeBTF& tree, const Vec3& position, uint32_t depth) {
    if (position.x < 0 || position.x > 1 || position.y < 0 || position.y > 1 || position.z < 0 ||
        position.z > 1)
        throw ValidationError("lookup position outside the unit cube");
    if (depth < tree.d_min || depth > tree.d_max)
        throw ValidationError("lookup depth out of range");

    auto cell = [&](uint32_t d, float v) {
        uint32_t n = 1u << d;
        return std::min(n - 1, uint32_t(v * n));
    };
    uint64_t code = locational_code(cell(depth, position.x), cell(depth, position.y),
                                    cell(depth, position.z), depth);
    for (uint32_t d = depth;; --d) {
        if (const Voxel* v = tree.level_at_depth(d).find(code))
            return {v, d, d == depth};
        if (d == tree.d_min)
            break;
        code >>= 3;
    }
    return {};
}

} // namespace btfstream
