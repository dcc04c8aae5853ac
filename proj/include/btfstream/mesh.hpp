#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "btfstream/vecmath.hpp"

namespace btfstream {

struct Mesh {
    std::vector<Vec3> positions;
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<Vec3> normals; // per vertex

    bool empty() const { return triangles.empty(); }
};

// ASCII OBJ (v / vn / f, faces fan-triangulated) or binary little-endian
// PLY, picked by extension. Normals are recomputed when absent.
Mesh load_mesh(const std::string& path);

Mesh load_obj(const std::string& path);
Mesh load_ply(const std::string& path);

// Area-weighted vertex normals.
void recompute_normals(Mesh& mesh);

// Uniform scale + translate into [0,1]^3 (largest extent maps to 1).
void normalize_to_unit_cube(Mesh& mesh);

// Wire form: u32 vertex count, u32 triangle count, f32 positions x3,
// u32 indices x3.
std::vector<uint8_t> serialize_geometry(const Mesh& mesh);
Mesh deserialize_geometry(const std::vector<uint8_t>& data);

// Deterministic icosphere (2 subdivisions, 320 triangles) inscribed in the
// unit cube; stands in until the real geometry arrives.
Mesh placeholder_sphere();

// Axis-aligned cube surface spanning [lo,hi]^3 (12 triangles); test and
// synthetic-pipeline geometry.
Mesh make_cube(float lo, float hi);

} // namespace btfstream
