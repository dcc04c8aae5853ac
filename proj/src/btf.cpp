#include "btfstream/btf.hpp"

#include <algorithm>
#include <cmath>

#include "btfstream/binio.hpp"
#include "btfstream/errors.hpp"

namespace btfstream {

DirectionGrid build_direction_grid(uint32_t resolution) {
    if (resolution < 1)
        throw ValidationError("direction grid resolution must be >= 1");
    DirectionGrid grid;
    grid.resolution = resolution;
    grid.directions.resize(size_t(resolution) * resolution);
    grid.valid.resize(size_t(resolution) * resolution, 0);
    for (uint32_t row = 0; row < resolution; ++row) {
        for (uint32_t col = 0; col < resolution; ++col) {
            float px = (col + 0.5f) / resolution * 2.0f - 1.0f;
            float py = (row + 0.5f) / resolution * 2.0f - 1.0f;
            uint32_t idx = grid.cell_index(row, col);
            if (px * px + py * py <= 1.0f) {
                grid.directions[idx] = parabolic_inverse(px, py);
                grid.valid[idx] = 1;
            }
        }
    }
    return grid;
}

GridSample sample_grid(const DirectionGrid& grid, const Vec3& dir) {
    float px, py;
    parabolic_forward(dir, px, py);
    uint32_t res = grid.resolution;
    // Continuous texel coordinates; texel centers sit at integer coords.
    float gx = (px + 1.0f) * 0.5f * res - 0.5f;
    float gy = (py + 1.0f) * 0.5f * res - 0.5f;
    float fx = std::floor(gx);
    float fy = std::floor(gy);
    float tx = gx - fx;
    float ty = gy - fy;
    auto clamp_idx = [res](float v) {
        return uint32_t(std::clamp(v, 0.0f, float(res - 1)));
    };
    uint32_t x0 = clamp_idx(fx), x1 = clamp_idx(fx + 1.0f);
    uint32_t y0 = clamp_idx(fy), y1 = clamp_idx(fy + 1.0f);
    GridSample s;
    s.cell[0] = grid.cell_index(y0, x0);
    s.cell[1] = grid.cell_index(y0, x1);
    s.cell[2] = grid.cell_index(y1, x0);
    s.cell[3] = grid.cell_index(y1, x1);
    s.weight[0] = (1.0f - tx) * (1.0f - ty);
    s.weight[1] = tx * (1.0f - ty);
    s.weight[2] = (1.0f - tx) * ty;
    s.weight[3] = tx * ty;
    return s;
}

Vec3 rgb_to_yuv(const Vec3& rgb) {
    float y = 0.299f * rgb.x + 0.587f * rgb.y + 0.114f * rgb.z;
    float u = 0.492f * (rgb.z - y);
    float v = 0.877f * (rgb.x - y);
    return {y, u, v};
}

Vec3 yuv_to_rgb(const Vec3& yuv) {
    float y = yuv.x;
    float b = yuv.y / 0.492f + y;
    float r = yuv.z / 0.877f + y;
    float g = (y - 0.299f * r - 0.114f * b) / 0.587f;
    return {r, g, b};
}

Vec3 recorrelate_texel(const Vec3& yuv_prime) {
    float y = std::exp(yuv_prime.x);
    Vec3 rgb = yuv_to_rgb({y, yuv_prime.y * y, yuv_prime.z * y});
    return {std::fmax(rgb.x, 0.0f), std::fmax(rgb.y, 0.0f), std::fmax(rgb.z, 0.0f)};
}

DecorrelatedChannels decorrelate(const BTFTensor& tensor) {
    DecorrelatedChannels out;
    out.direction_pairs = tensor.direction_pairs;
    out.point_count = tensor.point_count;
    out.light_resolution = tensor.light_resolution;
    out.view_resolution = tensor.view_resolution;
    size_t n = size_t(tensor.direction_pairs) * tensor.point_count;
    for (auto& ch : out.channels)
        ch.resize(n);
    for (size_t i = 0; i < n; ++i) {
        Vec3 yuv = rgb_to_yuv({tensor.channels[0][i], tensor.channels[1][i], tensor.channels[2][i]});
        float y = std::fmax(yuv.x, kLuminanceClamp);
        out.channels[0][i] = std::log(y);
        out.channels[1][i] = yuv.y / y;
        out.channels[2][i] = yuv.z / y;
    }
    return out;
}

BTFTensor recorrelate(const DecorrelatedChannels& channels) {
    BTFTensor out;
    out.direction_pairs = channels.direction_pairs;
    out.point_count = channels.point_count;
    out.light_resolution = channels.light_resolution;
    out.view_resolution = channels.view_resolution;
    size_t n = size_t(channels.direction_pairs) * channels.point_count;
    for (auto& ch : out.channels)
        ch.resize(n);
    for (size_t i = 0; i < n; ++i) {
        Vec3 rgb = recorrelate_texel(
            {channels.channels[0][i], channels.channels[1][i], channels.channels[2][i]});
        out.channels[0][i] = rgb.x;
        out.channels[1][i] = rgb.y;
        out.channels[2][i] = rgb.z;
    }
    return out;
}

CompressedBtf compress_dfmf(const BTFTensor& tensor, uint32_t k_y, uint32_t k_uv) {
    if (k_y == 0 || k_y % 4 != 0)
        throw ValidationError("k_Y must be a positive multiple of 4");
    if (k_uv == 0 || k_uv % 4 != 0)
        throw ValidationError("k_UV must be a positive multiple of 4");
    uint32_t rank_limit = std::min(tensor.direction_pairs, tensor.point_count);
    if (k_y > rank_limit || k_uv > rank_limit)
        throw ValidationError("component count exceeds min(D, P)");

    DecorrelatedChannels dec = decorrelate(tensor);
    CompressedBtf out;
    out.light_grid = build_direction_grid(tensor.light_resolution);
    out.view_grid = build_direction_grid(tensor.view_resolution);
    out.point_count = tensor.point_count;

    CompressedChannel* dst[3] = {&out.y, &out.u, &out.v};
    uint32_t ks[3] = {k_y, k_uv, k_uv};
    for (int ch = 0; ch < 3; ++ch) {
        dst[ch]->component_count = ks[ch];
        dst[ch]->direction_pairs = tensor.direction_pairs;
        dst[ch]->point_count = tensor.point_count;
        truncated_svd(dec.channels[ch], tensor.direction_pairs, tensor.point_count, ks[ch],
                      dst[ch]->angular, dst[ch]->spatial);
    }
    return out;
}

float sample_angular(const std::vector<float>& angular, uint32_t k, const GridSample& view_s,
                     const GridSample& light_s, uint32_t light_cells, uint32_t c) {
    float acc = 0.0f;
    for (int vi = 0; vi < 4; ++vi) {
        if (view_s.weight[vi] == 0.0f)
            continue;
        float inner = 0.0f;
        for (int li = 0; li < 4; ++li) {
            if (light_s.weight[li] == 0.0f)
                continue;
            uint32_t row = view_s.cell[vi] * light_cells + light_s.cell[li];
            inner += light_s.weight[li] * angular[size_t(row) * k + c];
        }
        acc += view_s.weight[vi] * inner;
    }
    return acc;
}

float evaluate_row(const std::vector<float>& angular, uint32_t k, const std::vector<float>& row,
                   const GridSample& view_s, const GridSample& light_s, uint32_t light_cells,
                   uint32_t k_used) {
    double sum = 0.0;
    for (uint32_t c = 0; c < k_used; ++c)
        sum += double(sample_angular(angular, k, view_s, light_s, light_cells, c)) * row[c];
    return float(sum);
}

namespace {

float evaluate_channel(const CompressedChannel& ch, const GridSample& view_s,
                       const GridSample& light_s, uint32_t light_cells, uint32_t point,
                       uint32_t k_used) {
    double sum = 0.0;
    for (uint32_t c = 0; c < k_used; ++c) {
        float u = sample_angular(ch.angular, ch.component_count, view_s, light_s, light_cells, c);
        sum += double(u) * ch.spatial[size_t(c) * ch.point_count + point];
    }
    return float(sum);
}

} // namespace

Vec3 evaluate(const CompressedBtf& btf, uint32_t point_index, const Vec3& light, const Vec3& view,
              uint32_t k_y_used, uint32_t k_u_used, uint32_t k_v_used) {
    if (point_index >= btf.point_count)
        throw ValidationError("point index out of range");
    if (k_y_used > btf.y.component_count || k_u_used > btf.u.component_count ||
        k_v_used > btf.v.component_count)
        throw ValidationError("k_used exceeds retained component count");

    GridSample light_s = sample_grid(btf.light_grid, light);
    GridSample view_s = sample_grid(btf.view_grid, view);
    uint32_t light_cells = btf.light_grid.cell_count();
    Vec3 yuv{evaluate_channel(btf.y, view_s, light_s, light_cells, point_index, k_y_used),
             evaluate_channel(btf.u, view_s, light_s, light_cells, point_index, k_u_used),
             evaluate_channel(btf.v, view_s, light_s, light_cells, point_index, k_v_used)};
    return recorrelate_texel(yuv);
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

float unit_float(uint64_t h) { return float(h >> 11) * (1.0f / 9007199254740992.0f); }

} // namespace

PointMaterial material_at(uint64_t seed, uint32_t point_index, const MaterialOptions& options) {
    uint64_t h = splitmix64(seed ^ splitmix64(point_index + 1));
    PointMaterial m;
    m.albedo = {0.2f + 0.7f * unit_float(splitmix64(h ^ 1)),
                0.2f + 0.7f * unit_float(splitmix64(h ^ 2)),
                0.2f + 0.7f * unit_float(splitmix64(h ^ 3))};
    if (options.albedo_override)
        m.albedo = *options.albedo_override;
    m.specular_weight = options.specular_scale * 0.5f * unit_float(splitmix64(h ^ 4));
    m.specular_exponent = 8.0f + 56.0f * unit_float(splitmix64(h ^ 5));
    return m;
}

Vec3 synthetic_reflectance(const PointMaterial& m, const Vec3& light, const Vec3& view) {
    constexpr float kPi = 3.14159265358979323846f;
    float cos_l = std::fmax(light.z, 0.0f);
    Vec3 half = normalize(light + view);
    float spec = m.specular_weight * std::pow(std::fmax(half.z, 0.0f), m.specular_exponent);
    return {m.albedo.x * cos_l / kPi + spec, m.albedo.y * cos_l / kPi + spec,
            m.albedo.z * cos_l / kPi + spec};
}

std::vector<Vec3> lattice_points(uint32_t point_grid) {
    std::vector<Vec3> pts;
    pts.reserve(size_t(point_grid) * point_grid * point_grid);
    for (uint32_t iz = 0; iz < point_grid; ++iz)
        for (uint32_t iy = 0; iy < point_grid; ++iy)
            for (uint32_t ix = 0; ix < point_grid; ++ix)
                pts.push_back({(ix + 0.5f) / point_grid, (iy + 0.5f) / point_grid,
                               (iz + 0.5f) / point_grid});
    return pts;
}

BTFTensor synthesize_btf(uint32_t point_grid, const DirectionGrid& light_grid,
                         const DirectionGrid& view_grid, uint64_t material_seed,
                         const MaterialOptions& options) {
    if (point_grid < 1)
        throw ValidationError("point grid must be >= 1");
    BTFTensor t;
    t.light_resolution = light_grid.resolution;
    t.view_resolution = view_grid.resolution;
    t.direction_pairs = light_grid.cell_count() * view_grid.cell_count();
    t.point_count = point_grid * point_grid * point_grid;
    size_t n = size_t(t.direction_pairs) * t.point_count;
    for (auto& ch : t.channels)
        ch.resize(n, 0.0f);

    std::vector<PointMaterial> materials(t.point_count);
    for (uint32_t p = 0; p < t.point_count; ++p)
        materials[p] = material_at(material_seed, p, options);

    for (uint32_t vc = 0; vc < view_grid.cell_count(); ++vc) {
        if (!view_grid.valid[vc])
            continue;
        for (uint32_t lc = 0; lc < light_grid.cell_count(); ++lc) {
            if (!light_grid.valid[lc])
                continue;
            uint32_t row = vc * light_grid.cell_count() + lc;
            size_t base = size_t(row) * t.point_count;
            for (uint32_t p = 0; p < t.point_count; ++p) {
                Vec3 r = synthetic_reflectance(materials[p], light_grid.directions[lc],
                                               view_grid.directions[vc]);
                t.channels[0][base + p] = r.x;
                t.channels[1][base + p] = r.y;
                t.channels[2][base + p] = r.z;
            }
        }
    }
    return t;
}

static constexpr char kTensorMagic[4] = {'B', 'T', 'F', 'T'};

void write_tensor(const std::string& path, const BTFTensor& tensor) {
    ByteWriter w;
    w.raw(kTensorMagic, 4);
    w.u32(1);
    w.u32(tensor.direction_pairs);
    w.u32(tensor.point_count);
    w.u32(tensor.light_resolution);
    w.u32(tensor.view_resolution);
    for (const auto& ch : tensor.channels)
        w.raw(ch.data(), ch.size() * 4);
    write_file(path, w.buf);
}

BTFTensor read_tensor(const std::string& path) {
    std::vector<uint8_t> data = read_file(path);
    ByteReader r(data);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
        throw FormatError("not a BTFT file");
    if (r.u32() != 1)
        throw FormatError("unsupported BTFT version");
    BTFTensor t;
    t.direction_pairs = r.u32();
    t.point_count = r.u32();
    t.light_resolution = r.u32();
    t.view_resolution = r.u32();
    size_t n = size_t(t.direction_pairs) * t.point_count;
    for (auto& ch : t.channels) {
        ch.resize(n);
        r.raw(ch.data(), n * 4);
    }
    if (!r.done())
        throw FormatError("trailing bytes in BTFT file");
    return t;
}

} // namespace btfstream
