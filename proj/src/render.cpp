#include "btfstream/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "btfstream/errors.hpp"
#include "btfstream/octree.hpp"

namespace btfstream {

namespace {

constexpr float kPi = 3.14159265358979323846f;
constexpr float kRayEpsilon = 1e-6f;

struct Ray {
    Vec3 origin;
    Vec3 direction; // unit
};

bool intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c, float& t) {
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 p = cross(ray.direction, e2);
    float det = dot(e1, p);
    if (std::fabs(det) < 1e-12f)
        return false;
    float inv = 1.0f / det;
    Vec3 s = ray.origin - a;
    float u = dot(s, p) * inv;
    if (u < 0.0f || u > 1.0f)
        return false;
    Vec3 q = cross(s, e1);
    float v = dot(ray.direction, q) * inv;
    if (v < 0.0f || u + v > 1.0f)
        return false;
    float hit = dot(e2, q) * inv;
    if (hit <= kRayEpsilon)
        return false;
    t = hit;
    return true;
}

// Median-split BVH over triangle centroids.
class Bvh {
public:
    explicit Bvh(const Mesh& mesh) : mesh_(mesh) {
        order_.resize(mesh.triangles.size());
        std::iota(order_.begin(), order_.end(), 0u);
        nodes_.reserve(order_.size() * 2);
        build(0, uint32_t(order_.size()));
    }

    bool closest_hit(const Ray& ray, float& t_out) const {
        float best = std::numeric_limits<float>::max();
        Vec3 inv{1.0f / ray.direction.x, 1.0f / ray.direction.y, 1.0f / ray.direction.z};
        uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            uint32_t index = stack[--top];
            const Node& node = nodes_[index];
            if (!hit_box(ray, inv, node, best))
                continue;
            if (node.count > 0) {
                for (uint32_t i = 0; i < node.count; ++i) {
                    const auto& tri = mesh_.triangles[order_[node.first + i]];
                    float t;
                    if (intersect_triangle(ray, mesh_.positions[tri[0]], mesh_.positions[tri[1]],
                                           mesh_.positions[tri[2]], t) &&
                        t < best)
                        best = t;
                }
            } else {
                stack[top++] = index + 1;   // left child follows its parent
                stack[top++] = node.first;  // right child index
            }
        }
        if (best == std::numeric_limits<float>::max())
            return false;
        t_out = best;
        return true;
    }

private:
    struct Node {
        Vec3 lo, hi;
        uint32_t first = 0; // leaf: first triangle slot; inner: right child index
        uint32_t count = 0; // 0 for inner nodes
    };

    static bool hit_box(const Ray& ray, const Vec3& inv, const Node& node, float best) {
        float t0 = (node.lo.x - ray.origin.x) * inv.x, t1 = (node.hi.x - ray.origin.x) * inv.x;
        float tmin = std::min(t0, t1), tmax = std::max(t0, t1);
        t0 = (node.lo.y - ray.origin.y) * inv.y, t1 = (node.hi.y - ray.origin.y) * inv.y;
        tmin = std::max(tmin, std::min(t0, t1)), tmax = std::min(tmax, std::max(t0, t1));
        t0 = (node.lo.z - ray.origin.z) * inv.z, t1 = (node.hi.z - ray.origin.z) * inv.z;
        tmin = std::max(tmin, std::min(t0, t1)), tmax = std::min(tmax, std::max(t0, t1));
        return tmax >= std::max(tmin, 0.0f) && tmin < best;
    }

    Vec3 centroid(uint32_t tri) const {
        const auto& t = mesh_.triangles[tri];
        return (mesh_.positions[t[0]] + mesh_.positions[t[1]] + mesh_.positions[t[2]]) / 3.0f;
    }

    uint32_t build(uint32_t first, uint32_t count) {
        uint32_t index = uint32_t(nodes_.size());
        nodes_.push_back({});
        Vec3 lo{1e30f, 1e30f, 1e30f}, hi{-1e30f, -1e30f, -1e30f};
        for (uint32_t i = 0; i < count; ++i) {
            const auto& t = mesh_.triangles[order_[first + i]];
            for (uint32_t v : t) {
                lo = min3(lo, mesh_.positions[v]);
                hi = max3(hi, mesh_.positions[v]);
            }
        }
        nodes_[index].lo = lo;
        nodes_[index].hi = hi;
        if (count <= 4) {
            nodes_[index].first = first;
            nodes_[index].count = count;
            return index;
        }
        Vec3 extent = hi - lo;
        int axis = extent.x >= extent.y && extent.x >= extent.z ? 0 : (extent.y >= extent.z ? 1 : 2);
        uint32_t mid = first + count / 2;
        std::nth_element(order_.begin() + first, order_.begin() + mid,
                         order_.begin() + first + count, [&](uint32_t a, uint32_t b) {
                             Vec3 ca = centroid(a), cb = centroid(b);
                             float va = axis == 0 ? ca.x : axis == 1 ? ca.y : ca.z;
                             float vb = axis == 0 ? cb.x : axis == 1 ? cb.y : cb.z;
                             if (va != vb)
                                 return va < vb;
                             return a < b;
                         });
        build(first, mid - first);
        uint32_t right = build(mid, first + count - mid);
        nodes_[index].first = right;
        nodes_[index].count = 0;
        return index;
    }

    const Mesh& mesh_;
    std::vector<uint32_t> order_;
    std::vector<Node> nodes_;
};

bool intersect_sphere(const Ray& ray, const Vec3& center, float radius, float& t) {
    Vec3 oc = ray.origin - center;
    float b = dot(oc, ray.direction);
    float c = dot(oc, oc) - radius * radius;
    float disc = b * b - c;
    if (disc < 0.0f)
        return false;
    float root = std::sqrt(disc);
    float hit = -b - root;
    if (hit <= kRayEpsilon)
        hit = -b + root;
    if (hit <= kRayEpsilon)
        return false;
    t = hit;
    return true;
}

Vec3 annotation_color(AnnotationKind kind) {
    switch (kind) {
    case AnnotationKind::Marker: return {0, 1, 0};
    case AnnotationKind::Text: return {0, 0, 1};
    case AnnotationKind::StrokePoint: return {1, 0, 0};
    }
    return {1, 1, 1};
}

struct LocalFrame {
    Vec3 tangent, bitangent, normal;
    Vec3 to_local(const Vec3& w) const {
        return {dot(w, tangent), dot(w, bitangent), dot(w, normal)};
    }
};

Vec3 clamp_unit_cube(const Vec3& p) {
    return {std::clamp(p.x, 0.0f, 1.0f), std::clamp(p.y, 0.0f, 1.0f), std::clamp(p.z, 0.0f, 1.0f)};
}

Vec3 shade_hit(const Snapshot& snapshot, uint32_t level, const Vec3& hit_pos, const Vec3& view_dir,
               const std::vector<LightSource>& lights, std::array<uint32_t, 3> ranks) {
    const OctreeBTF& tree = snapshot.tree;
    LookupResult found = lookup(tree, clamp_unit_cube(hit_pos), tree.d_min + level);
    if (!found.voxel)
        return {0, 0, 0};
    const Voxel& voxel = *found.voxel;
    LocalFrame frame{voxel.tangent, cross(voxel.normal, voxel.tangent), voxel.normal};

    Vec3 view_local = frame.to_local(-view_dir);
    if (view_local.z <= 0.0f)
        return {0, 0, 0};
    view_local = normalize(view_local);
    GridSample view_s = sample_grid(tree.view_grid, view_local);
    uint32_t light_cells = tree.light_grid.cell_count();

    Vec3 total{0, 0, 0};
    for (const LightSource& light : lights) {
        Vec3 to_light;     // unit, surface -> light
        Vec3 radiance = light.intensity;
        if (light.kind == LightKind::Directional) {
            to_light = normalize(-light.direction);
        } else {
            Vec3 d = light.position - hit_pos;
            float dist2 = dot(d, d);
            if (dist2 <= 0.0f)
                continue;
            to_light = d / std::sqrt(dist2);
            radiance = radiance / dist2;
            if (light.kind == LightKind::Spot) {
                float cos_cut = std::cos(light.cone_angle_degrees * 0.5f * kPi / 180.0f);
                if (dot(normalize(light.direction), -to_light) < cos_cut)
                    continue;
            }
        }
        Vec3 light_local = frame.to_local(to_light);
        if (light_local.z <= 0.0f)
            continue;
        light_local = normalize(light_local);
        GridSample light_s = sample_grid(tree.light_grid, light_local);
        Vec3 yuv;
        float* out[3] = {&yuv.x, &yuv.y, &yuv.z};
        for (int ch = 0; ch < 3; ++ch)
            *out[ch] = evaluate_row(tree.angular[ch], tree.channel_k(ch), voxel.spatial[ch],
                                    view_s, light_s, light_cells, ranks[ch]);
        Vec3 refl = recorrelate_texel(yuv);
        total += Vec3{refl.x * radiance.x, refl.y * radiance.y, refl.z * radiance.z};
    }
    return total;
}

} // namespace

Image render(const Snapshot& snapshot, const Camera& camera,
             const std::vector<LightSource>& lights) {
    if (camera.fov_degrees <= 0.0f || camera.fov_degrees >= 180.0f)
        throw ValidationError("field of view must be in (0, 180)");
    std::optional<uint32_t> level = snapshot.deepest_evaluable_level();
    if (!level)
        throw NotReadyError("no evaluable octree level yet");
    std::array<uint32_t, 3> ranks = {snapshot.renderable_rank(0), snapshot.renderable_rank(1),
                                     snapshot.renderable_rank(2)};

    const Mesh& mesh = snapshot.mesh;
    Bvh bvh(mesh);

    Vec3 forward = normalize(camera.look_at - camera.position);
    Vec3 right = normalize(cross(forward, camera.up));
    if (right == Vec3{0, 0, 0})
        throw ValidationError("camera up vector is collinear with the view direction");
    Vec3 up = cross(right, forward);
    float tan_half = std::tan(camera.fov_degrees * 0.5f * kPi / 180.0f);
    float aspect = float(camera.width) / float(camera.height);

    Image image(camera.width, camera.height);
    auto render_rows = [&](uint32_t y0, uint32_t y1) {
        for (uint32_t y = y0; y < y1; ++y) {
            for (uint32_t x = 0; x < camera.width; ++x) {
                float sx = (2.0f * (x + 0.5f) / camera.width - 1.0f) * tan_half * aspect;
                float sy = (1.0f - 2.0f * (y + 0.5f) / camera.height) * tan_half;
                Ray ray{camera.position, normalize(forward + right * sx + up * sy)};

                float t_mesh;
                bool hit_mesh = bvh.closest_hit(ray, t_mesh);
                float t_best = hit_mesh ? t_mesh : std::numeric_limits<float>::max();
                const Annotation* hit_annotation = nullptr;
                for (const Annotation& a : snapshot.annotations) {
                    float t;
                    if (intersect_sphere(ray, a.position, kAnnotationRadius, t) && t < t_best) {
                        t_best = t;
                        hit_annotation = &a;
                    }
                }
                if (hit_annotation) {
                    image.at(x, y) = annotation_color(hit_annotation->kind);
                } else if (hit_mesh) {
                    Vec3 hit_pos = ray.origin + ray.direction * t_mesh;
                    image.at(x, y) = shade_hit(snapshot, *level, hit_pos, ray.direction, lights,
                                               ranks);
                }
            }
        }
    };

    uint32_t threads = std::min(std::max(1u, std::thread::hardware_concurrency()), camera.height);
    if (threads <= 1) {
        render_rows(0, camera.height);
    } else {
        std::vector<std::thread> pool;
        uint32_t rows = (camera.height + threads - 1) / threads;
        for (uint32_t i = 0; i < threads; ++i) {
            uint32_t y0 = i * rows;
            uint32_t y1 = std::min(camera.height, y0 + rows);
            if (y0 < y1)
                pool.emplace_back(render_rows, y0, y1);
        }
        for (auto& t : pool)
            t.join();
    }
    return image;
}

namespace {

// Direction for an equirectangular texel: latitude from +y, longitude wraps
// around the y axis.
Vec3 equirect_direction(float u, float v) {
    float theta = v * kPi;
    float phi = (2.0f * u - 1.0f) * kPi;
    float s = std::sin(theta);
    return {s * std::cos(phi), std::cos(theta), s * std::sin(phi)};
}

struct TexelGrid {
    uint32_t width, height;
    std::vector<double> energy;  // luminance * solid angle
    std::vector<Vec3> power;     // rgb * solid angle

    double region_energy(uint32_t x0, uint32_t y0, uint32_t x1, uint32_t y1) const {
        double sum = 0.0;
        for (uint32_t y = y0; y < y1; ++y)
            for (uint32_t x = x0; x < x1; ++x)
                sum += energy[size_t(y) * width + x];
        return sum;
    }
};

struct Region {
    uint32_t x0, y0, x1, y1;
};

} // namespace

std::vector<LightSource> approximate_environment(const Image& envmap, uint32_t n) {
    if (n < 1 || (n & (n - 1)) != 0)
        throw ValidationError("light count must be a power of two");
    if (envmap.width == 0 || envmap.height == 0)
        throw ValidationError("empty environment map");

    TexelGrid grid{envmap.width, envmap.height, {}, {}};
    grid.energy.resize(envmap.pixels.size());
    grid.power.resize(envmap.pixels.size());
    for (uint32_t y = 0; y < envmap.height; ++y) {
        float theta = (y + 0.5f) / envmap.height * kPi;
        // Texel solid angle on the equirectangular sphere.
        float omega = std::sin(theta) * (2.0f * kPi / envmap.width) * (kPi / envmap.height);
        for (uint32_t x = 0; x < envmap.width; ++x) {
            const Vec3& p = envmap.at(x, y);
            if (p.x < 0.0f || p.y < 0.0f || p.z < 0.0f)
                throw ValidationError("environment map must be non-negative");
            float lum = 0.299f * p.x + 0.587f * p.y + 0.114f * p.z;
            size_t i = size_t(y) * envmap.width + x;
            grid.energy[i] = double(lum) * omega;
            grid.power[i] = p * omega;
        }
    }

    std::vector<Region> regions = {{0, 0, envmap.width, envmap.height}};
    while (regions.size() < n) {
        std::vector<Region> next;
        next.reserve(regions.size() * 2);
        for (const Region& r : regions) {
            uint32_t w = r.x1 - r.x0, h = r.y1 - r.y0;
            double half = grid.region_energy(r.x0, r.y0, r.x1, r.y1) * 0.5;
            if (w >= h && w > 1) {
                // Split column: cumulative energy closest to half.
                uint32_t cut = r.x0 + 1;
                double acc = 0.0, best_diff = std::numeric_limits<double>::max();
                double running = 0.0;
                for (uint32_t x = r.x0; x + 1 < r.x1; ++x) {
                    running += grid.region_energy(x, r.y0, x + 1, r.y1);
                    double diff = std::fabs(running - half);
                    if (diff < best_diff) {
                        best_diff = diff;
                        cut = x + 1;
                        acc = running;
                    }
                }
                (void)acc;
                next.push_back({r.x0, r.y0, cut, r.y1});
                next.push_back({cut, r.y0, r.x1, r.y1});
            } else if (h > 1) {
                uint32_t cut = r.y0 + 1;
                double best_diff = std::numeric_limits<double>::max();
                double running = 0.0;
                for (uint32_t y = r.y0; y + 1 < r.y1; ++y) {
                    running += grid.region_energy(r.x0, y, r.x1, y + 1);
                    double diff = std::fabs(running - half);
                    if (diff < best_diff) {
                        best_diff = diff;
                        cut = y + 1;
                    }
                }
                next.push_back({r.x0, r.y0, r.x1, cut});
                next.push_back({r.x0, cut, r.x1, r.y1});
            } else {
                // Single texel; degenerate split keeps the count right.
                next.push_back(r);
                next.push_back({r.x0, r.y0, r.x0, r.y0});
            }
        }
        regions = std::move(next);
    }

    std::vector<LightSource> lights;
    lights.reserve(n);
    for (const Region& r : regions) {
        LightSource light;
        light.kind = LightKind::Directional;
        Vec3 power{0, 0, 0};
        Vec3 centroid{0, 0, 0};
        for (uint32_t y = r.y0; y < r.y1; ++y)
            for (uint32_t x = r.x0; x < r.x1; ++x) {
                size_t i = size_t(y) * envmap.width + x;
                power += grid.power[i];
                Vec3 dir = equirect_direction((x + 0.5f) / envmap.width, (y + 0.5f) / envmap.height);
                centroid += dir * float(grid.energy[i]);
            }
        light.intensity = power;
        Vec3 dir = normalize(centroid);
        // Light travels from the environment towards the object.
        light.direction = dir == Vec3{0, 0, 0} ? Vec3{0, 0, -1} : -dir;
        lights.push_back(light);
    }
    return lights;
}

std::vector<CurvePoint> quality_curve(const Container& container, const Camera& camera,
                                      const std::vector<LightSource>& lights,
                                      const Image& reference) {
    if (reference.width != camera.width || reference.height != camera.height)
        throw ValidationError("reference image does not match the camera");

    ProgressiveState state;
    state.apply_object_info(serialize_header(container.header));
    state.apply_geometry(container.geometry);

    std::vector<CurvePoint> curve;
    auto config_of = [](const Snapshot& s) {
        return std::tuple(s.deepest_evaluable_level(), s.renderable_rank(0), s.renderable_rank(1),
                          s.renderable_rank(2));
    };
    auto last_config = config_of(*state.snapshot());
    for (const Chunk& chunk : container.chunks) {
        state.apply_chunk(chunk.descriptor, chunk.payload);
        auto snap = state.snapshot();
        auto config = config_of(*snap);
        if (config == last_config)
            continue;
        last_config = config;
        if (!snap->deepest_evaluable_level())
            continue;
        CurvePoint point;
        point.version = snap->version;
        point.metrics = compute_metrics(render(*snap, camera, lights), reference);
        curve.push_back(point);
    }
    return curve;
}

} // namespace btfstream
