#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "btfstream/vecmath.hpp"

namespace btfstream {

// Hemisphere direction parameterization: p = (x/(1+z), y/(1+z)) maps the
// upper hemisphere (z >= 0) onto the unit disk.
inline void parabolic_forward(const Vec3& dir, float& px, float& py) {
    px = dir.x / (1.0f + dir.z);
    py = dir.y / (1.0f + dir.z);
}

inline Vec3 parabolic_inverse(float px, float py) {
    float s = px * px + py * py;
    float z = (1.0f - s) / (1.0f + s);
    return {2.0f * px / (1.0f + s), 2.0f * py / (1.0f + s), z};
}

// Regular grid over the parabolic disk. Cell (row, col) has center
// p = ((col+0.5)/R * 2 - 1, (row+0.5)/R * 2 - 1); cells whose center lies
// outside the unit disk are invalid and carry no direction.
struct DirectionGrid {
    uint32_t resolution = 0;
    std::vector<Vec3> directions; // resolution^2, row-major; (0,0,0) for invalid cells
    std::vector<uint8_t> valid;   // resolution^2

    uint32_t cell_count() const { return resolution * resolution; }
    uint32_t cell_index(uint32_t row, uint32_t col) const { return row * resolution + col; }
};

DirectionGrid build_direction_grid(uint32_t resolution);

// Bilinear footprint of a direction on a parabolic grid: up to 4 texels.
struct GridSample {
    uint32_t cell[4];
    float weight[4];
};
GridSample sample_grid(const DirectionGrid& grid, const Vec3& dir);

// Direction-pair row index with the view grid outer and the light grid
// inner: row = (v_row*Rv + v_col) * Rl^2 + (l_row*Rl + l_col).
inline uint32_t pair_index(const DirectionGrid& light, uint32_t light_cell, uint32_t view_cell) {
    return view_cell * light.cell_count() + light_cell;
}

// Raw reflectance tensor: one D x P matrix per color channel, row-major.
// Rows are nested (view, light) direction pairs, columns are surface points.
struct BTFTensor {
    uint32_t direction_pairs = 0; // D
    uint32_t point_count = 0;     // P
    uint32_t light_resolution = 0;
    uint32_t view_resolution = 0;
    std::array<std::vector<float>, 3> channels; // R, G, B

    float& at(int ch, uint32_t row, uint32_t col) {
        return channels[ch][size_t(row) * point_count + col];
    }
    float at(int ch, uint32_t row, uint32_t col) const {
        return channels[ch][size_t(row) * point_count + col];
    }
};

// Log-luminance / chroma-ratio decorrelated channels, same shape as the
// source tensor.
struct DecorrelatedChannels {
    uint32_t direction_pairs = 0;
    uint32_t point_count = 0;
    uint32_t light_resolution = 0;
    uint32_t view_resolution = 0;
    std::array<std::vector<float>, 3> channels; // Y', U', V'
};

// Truncated factorization of one channel: angular columns are orthonormal
// eigen-ABRDFs, spatial rows are singular-value-scaled eigen-textures.
struct CompressedChannel {
    uint32_t component_count = 0; // k
    uint32_t direction_pairs = 0; // D
    uint32_t point_count = 0;     // P
    std::vector<float> angular;   // D x k, row-major
    std::vector<float> spatial;   // k x P, row-major
};

struct CompressedBtf {
    DirectionGrid light_grid;
    DirectionGrid view_grid;
    CompressedChannel y, u, v;
    uint32_t point_count = 0;
};

// BT.601 with exact inverse.
Vec3 rgb_to_yuv(const Vec3& rgb);
Vec3 yuv_to_rgb(const Vec3& yuv);

// Per-texel transform of one decorrelated (Y', U', V') triple back to RGB:
// Y = exp(Y'), U = U'*Y, V = V'*Y, then YUV -> RGB clamped to >= 0.
Vec3 recorrelate_texel(const Vec3& yuv_prime);

constexpr float kLuminanceClamp = 1e-6f;

DecorrelatedChannels decorrelate(const BTFTensor& tensor);
BTFTensor recorrelate(const DecorrelatedChannels& channels);

// Best rank-k approximation of a D x P row-major matrix. Angular columns
// come back orthonormal with the largest-magnitude entry of each column
// positive; spatial rows carry the singular values pre-multiplied.
void truncated_svd(const std::vector<float>& matrix, uint32_t rows, uint32_t cols, uint32_t k,
                   std::vector<float>& angular_out, std::vector<float>& spatial_out);

CompressedBtf compress_dfmf(const BTFTensor& tensor, uint32_t k_y, uint32_t k_uv);

// Rank-limited reflectance lookup; k_used components per channel, angular
// factors sampled bilinearly over both parabolic grids.
Vec3 evaluate(const CompressedBtf& btf, uint32_t point_index, const Vec3& light, const Vec3& view,
              uint32_t k_y_used, uint32_t k_u_used, uint32_t k_v_used);

// Bilinear sample of one angular component (column c of a D x k row-major
// factor) at a (view, light) footprint.
float sample_angular(const std::vector<float>& angular, uint32_t k, const GridSample& view_s,
                     const GridSample& light_s, uint32_t light_cells, uint32_t c);

// Rank-limited decorrelated channel value from an explicit spatial row.
float evaluate_row(const std::vector<float>& angular, uint32_t k, const std::vector<float>& row,
                   const GridSample& view_s, const GridSample& light_s, uint32_t light_cells,
                   uint32_t k_used);

// Synthetic test material: per-point Lambertian albedo plus a Phong lobe
// with seed-driven spatially varying parameters.
struct MaterialOptions {
    float specular_scale = 1.0f;             // 0 disables the lobe
    std::optional<Vec3> albedo_override;     // forces a constant albedo
};

BTFTensor synthesize_btf(uint32_t point_grid, const DirectionGrid& light_grid,
                         const DirectionGrid& view_grid, uint64_t material_seed,
                         const MaterialOptions& options = {});

// Lattice of point-cell centers in the unit cube; index (iz*g + iy)*g + ix.
std::vector<Vec3> lattice_points(uint32_t point_grid);

// Synthetic material parameters for one point (the analytic oracle side).
struct PointMaterial {
    Vec3 albedo;
    float specular_weight;
    float specular_exponent;
};
PointMaterial material_at(uint64_t seed, uint32_t point_index, const MaterialOptions& options = {});

// Analytic reflectance of the synthetic material.
Vec3 synthetic_reflectance(const PointMaterial& m, const Vec3& light, const Vec3& view);

// Flat binary tensor container ("BTFT").
void write_tensor(const std::string& path, const BTFTensor& tensor);
BTFTensor read_tensor(const std::string& path);

} // namespace btfstream
