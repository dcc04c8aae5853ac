#pragma once

#include <cstdint>
#include <vector>

#include "btfstream/client.hpp"
#include "btfstream/image.hpp"
#include "btfstream/vecmath.hpp"

namespace btfstream {

struct Camera {
    Vec3 position{0.5f, 0.5f, 3.0f};
    Vec3 look_at{0.5f, 0.5f, 0.5f};
    Vec3 up{0.0f, 1.0f, 0.0f};
    float fov_degrees = 40.0f; // vertical
    uint32_t width = 256;
    uint32_t height = 256;
};

enum class LightKind : uint8_t { Point = 0, Spot = 1, Directional = 2 };

struct LightSource {
    LightKind kind = LightKind::Directional;
    Vec3 position{};  // POINT/SPOT
    Vec3 direction{}; // DIRECTIONAL: travel direction; SPOT: cone axis
    Vec3 intensity{1, 1, 1};
    float cone_angle_degrees = 45.0f; // SPOT full cone angle
};

constexpr float kAnnotationRadius = 0.01f;

// CPU ray-cast of the current snapshot: nearest-voxel reflectance lookup at
// the deepest evaluable level, ranks limited to the streamed angular layers,
// annotations as solid colored spheres. Deterministic regardless of the
// row-parallel execution.
Image render(const Snapshot& snapshot, const Camera& camera,
             const std::vector<LightSource>& lights);

// Median-cut approximation of an equirectangular environment map by n
// directional lights (n a power of two). Total emitted power is conserved.
std::vector<LightSource> approximate_environment(const Image& envmap, uint32_t n);

struct CurvePoint {
    uint64_t version = 0;
    ImageMetrics metrics;
};

// Replays a container in load order and measures image error against the
// fully loaded reference after every chunk that changes what the renderer
// can evaluate.
std::vector<CurvePoint> quality_curve(const Container& container, const Camera& camera,
                                      const std::vector<LightSource>& lights,
                                      const Image& reference);

} // namespace btfstream
