#include "btfstream/chunks.hpp"

#include <algorithm>
#include <cstring>
#include <tuple>

#include "btfstream/errors.hpp"
#include "zstd_compat.hpp"

namespace btfstream {

bool ChunkId::operator<(const ChunkId& o) const {
    return std::tie(kind, level, channel, layer) < std::tie(o.kind, o.level, o.channel, o.layer);
}

std::vector<uint8_t> zstd_compress(const std::vector<uint8_t>& raw) {
    // Frame checksums on so payload corruption is always detectable.
    ZSTD_CCtx* cctx = ZSTD_createCCtx();
    if (!cctx)
        throw FormatError("zstd context allocation failed");
    ZSTD_CCtx_setParameter(cctx, kZstdParamCompressionLevel, kZstdLevel);
    ZSTD_CCtx_setParameter(cctx, kZstdParamChecksumFlag, 1);
    std::vector<uint8_t> out(ZSTD_compressBound(raw.size()));
    size_t n = ZSTD_compress2(cctx, out.data(), out.size(), raw.data(), raw.size());
    ZSTD_freeCCtx(cctx);
    if (ZSTD_isError(n))
        throw FormatError(std::string("zstd compression failed: ") + ZSTD_getErrorName(n));
    out.resize(n);
    return out;
}

std::vector<uint8_t> zstd_decompress(const std::vector<uint8_t>& compressed,
                                     size_t expected_size) {
    std::vector<uint8_t> out(expected_size);
    size_t n = ZSTD_decompress(out.data(), out.size(), compressed.data(), compressed.size());
    if (ZSTD_isError(n))
        throw FormatError(std::string("zstd decompression failed: ") + ZSTD_getErrorName(n));
    if (n != expected_size)
        throw FormatError("decompressed size does not match descriptor");
    return out;
}

std::vector<uint8_t> zstd_decompress_framed(const std::vector<uint8_t>& compressed) {
    unsigned long long n = ZSTD_getFrameContentSize(compressed.data(), compressed.size());
    if (n == kZstdContentSizeUnknown || n == kZstdContentSizeError)
        throw FormatError("zstd frame has no content size");
    return zstd_decompress(compressed, size_t(n));
}

Chunk compress_chunk(const ChunkId& id, const std::vector<uint8_t>& raw) {
    Chunk c;
    c.descriptor.id = id;
    c.descriptor.uncompressed_size = uint32_t(raw.size());
    c.payload = zstd_compress(raw);
    c.descriptor.compressed_size = uint32_t(c.payload.size());
    return c;
}

std::vector<uint8_t> decompress_chunk(const Chunk& chunk) {
    if (chunk.payload.size() != chunk.descriptor.compressed_size)
        throw FormatError("chunk payload size does not match descriptor");
    return zstd_decompress(chunk.payload, chunk.descriptor.uncompressed_size);
}

uint32_t chunk_count(uint32_t levels, uint32_t k_y, uint32_t k_uv) {
    return 4 * levels + k_y / 4 + k_uv / 2;
}

namespace {

std::vector<uint8_t> encode_voxel_chunk(const OctreeLevel& level) {
    ByteWriter w;
    for (const Voxel& v : level.voxels) {
        w.u64(v.code);
        w.f32(v.normal.x);
        w.f32(v.normal.y);
        w.f32(v.normal.z);
        w.f32(v.tangent.x);
        w.f32(v.tangent.y);
        w.f32(v.tangent.z);
    }
    return w.buf;
}

std::vector<uint8_t> encode_spatial_chunk(const OctreeLevel& level, int ch, uint32_t k) {
    ByteWriter w;
    w.buf.reserve(size_t(level.voxels.size()) * k * 4);
    // Per-voxel interleaving: all k components of voxel 0, then voxel 1, ...
    for (const Voxel& v : level.voxels)
        w.raw(v.spatial[ch].data(), size_t(k) * 4);
    return w.buf;
}

std::vector<uint8_t> encode_angular_chunk(const std::vector<float>& angular, uint32_t k,
                                          uint32_t direction_pairs, uint32_t layer) {
    ByteWriter w;
    w.buf.reserve(size_t(direction_pairs) * 16);
    for (uint32_t d = 0; d < direction_pairs; ++d)
        w.raw(&angular[size_t(d) * k + layer * 4], 16);
    return w.buf;
}

} // namespace

std::vector<Chunk> build_chunks(const OctreeBTF& tree) {
    if (!tree.spatial_assigned || !tree.lod_built)
        throw NotReadyError("tree is not fully populated");
    std::vector<Chunk> chunks;
    uint32_t l = tree.level_count();
    chunks.reserve(chunk_count(l, tree.k_y, tree.k_uv));
    for (uint16_t j = 0; j < l; ++j) {
        const OctreeLevel& level = tree.levels[j];
        chunks.push_back(compress_chunk({ChunkKind::Voxel, j, kNoChannel, 0},
                                        encode_voxel_chunk(level)));
    }
    for (uint16_t j = 0; j < l; ++j)
        for (uint8_t ch = 0; ch < 3; ++ch)
            chunks.push_back(compress_chunk(
                {ChunkKind::Spatial, j, ch, 0},
                encode_spatial_chunk(tree.levels[j], ch, tree.channel_k(ch))));
    for (uint8_t ch = 0; ch < 3; ++ch) {
        uint32_t k = tree.channel_k(ch);
        for (uint16_t g = 0; g < k / 4; ++g)
            chunks.push_back(compress_chunk(
                {ChunkKind::Angular, kNoLevel, ch, g},
                encode_angular_chunk(tree.angular[ch], k, tree.direction_pairs, g)));
    }
    return chunks;
}

LoadOrder build_load_order(uint32_t levels, uint32_t k_y, uint32_t k_uv) {
    if (levels < 1)
        throw ValidationError("load order needs at least one level");
    if (k_y == 0 || k_y % 4 != 0 || k_uv == 0 || k_uv % 4 != 0)
        throw ValidationError("component counts must be positive multiples of 4");

    auto vox = [](uint16_t j) { return ChunkId{ChunkKind::Voxel, j, kNoChannel, 0}; };
    auto spat = [](uint16_t j, uint8_t ch) { return ChunkId{ChunkKind::Spatial, j, ch, 0}; };
    auto ang = [](uint8_t ch, uint16_t g) { return ChunkId{ChunkKind::Angular, kNoLevel, ch, g}; };

    uint32_t layers_y = k_y / 4;
    uint32_t layers_uv = k_uv / 4;
    uint32_t per_level_y = std::max(layers_y / levels, 1u);
    uint32_t per_level_uv = std::max(layers_uv / levels, 1u);

    LoadOrder order;
    order.reserve(chunk_count(levels, k_y, k_uv));
    order.push_back(vox(0));
    order.push_back(spat(0, 0));
    order.push_back(spat(0, 1));
    order.push_back(spat(0, 2));
    order.push_back(ang(0, 0));
    order.push_back(ang(1, 0));
    order.push_back(ang(2, 0));

    uint32_t added_y = 1;
    uint32_t added_uv = 1;
    for (uint16_t i = 1; i < levels; ++i) {
        order.push_back(vox(i));
        order.push_back(spat(i, 0));
        for (uint32_t g = 0; g < per_level_y; ++g)
            if (added_y < layers_y)
                order.push_back(ang(0, uint16_t(added_y++)));
        order.push_back(spat(i, 1));
        order.push_back(spat(i, 2));
        for (uint32_t g = 0; g < per_level_uv; ++g)
            if (added_uv < layers_uv) {
                order.push_back(ang(1, uint16_t(added_uv)));
                order.push_back(ang(2, uint16_t(added_uv)));
                ++added_uv;
            }
    }
    // Layers the even distribution did not place (short trees, remainders).
    for (; added_y < layers_y; ++added_y)
        order.push_back(ang(0, uint16_t(added_y)));
    for (uint32_t g = added_uv; g < layers_uv; ++g)
        order.push_back(ang(1, uint16_t(g)));
    for (uint32_t g = added_uv; g < layers_uv; ++g)
        order.push_back(ang(2, uint16_t(g)));
    return order;
}

void write_descriptor(ByteWriter& w, const ChunkDescriptor& d) {
    w.u8(uint8_t(d.id.kind));
    w.u16(d.id.level);
    w.u8(d.id.channel);
    w.u16(d.id.layer);
    w.u32(d.uncompressed_size);
    w.u32(d.compressed_size);
}

ChunkDescriptor read_descriptor(ByteReader& r) {
    ChunkDescriptor d;
    uint8_t kind = r.u8();
    if (kind > 2)
        throw FormatError("unknown chunk kind");
    d.id.kind = ChunkKind(kind);
    d.id.level = r.u16();
    d.id.channel = r.u8();
    d.id.layer = r.u16();
    d.uncompressed_size = r.u32();
    d.compressed_size = r.u32();
    return d;
}

static constexpr char kContainerMagic[4] = {'O', 'B', 'T', 'F'};
static constexpr uint32_t kContainerVersion = 1;

std::vector<uint8_t> serialize_header(const ContainerHeader& header) {
    ByteWriter w;
    w.raw(kContainerMagic, 4);
    w.u32(kContainerVersion);
    w.u8(header.d_min);
    w.u8(header.d_max);
    w.u16(header.k_y);
    w.u16(header.k_uv);
    w.u16(header.light_resolution);
    w.u16(header.view_resolution);
    for (uint32_t c : header.voxel_counts)
        w.u32(c);
    w.u64(header.geometry_size);
    w.u32(header.chunk_count);
    return w.buf;
}

ContainerHeader parse_header(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kContainerMagic, 4) != 0)
        throw FormatError("not an OBTF container");
    if (r.u32() != kContainerVersion)
        throw FormatError("unsupported OBTF version");
    ContainerHeader h;
    h.d_min = r.u8();
    h.d_max = r.u8();
    if (h.d_min > h.d_max)
        throw FormatError("header d_min exceeds d_max");
    h.k_y = r.u16();
    h.k_uv = r.u16();
    h.light_resolution = r.u16();
    h.view_resolution = r.u16();
    h.voxel_counts.resize(h.level_count());
    for (uint32_t& c : h.voxel_counts)
        c = r.u32();
    h.geometry_size = r.u64();
    h.chunk_count = r.u32();
    if (!r.done())
        throw FormatError("header size mismatch");
    return h;
}

LoadOrder Container::load_order() const {
    LoadOrder order;
    order.reserve(chunks.size());
    for (const Chunk& c : chunks)
        order.push_back(c.descriptor.id);
    return order;
}

Container build_container(const OctreeBTF& tree, const Mesh& mesh) {
    Container out;
    out.header.d_min = uint8_t(tree.d_min);
    out.header.d_max = uint8_t(tree.d_max);
    out.header.k_y = uint16_t(tree.k_y);
    out.header.k_uv = uint16_t(tree.k_uv);
    out.header.light_resolution = uint16_t(tree.light_grid.resolution);
    out.header.view_resolution = uint16_t(tree.view_grid.resolution);
    for (const OctreeLevel& level : tree.levels)
        out.header.voxel_counts.push_back(uint32_t(level.voxels.size()));
    out.geometry = zstd_compress(serialize_geometry(mesh));
    out.header.geometry_size = out.geometry.size();

    std::vector<Chunk> chunks = build_chunks(tree);
    LoadOrder order = build_load_order(tree.level_count(), tree.k_y, tree.k_uv);
    out.chunks.reserve(chunks.size());
    for (const ChunkId& id : order) {
        auto it = std::find_if(chunks.begin(), chunks.end(),
                               [&](const Chunk& c) { return c.descriptor.id == id; });
        if (it == chunks.end())
            throw FormatError("load order references a missing chunk");
        out.chunks.push_back(std::move(*it));
        chunks.erase(it);
    }
    if (!chunks.empty())
        throw FormatError("load order does not cover the chunk set");
    out.header.chunk_count = uint32_t(out.chunks.size());
    return out;
}

std::vector<uint8_t> serialize_container(const Container& container) {
    ByteWriter w;
    w.bytes(serialize_header(container.header));

    // Chunk table in load order; offsets patched once the layout is known.
    std::vector<size_t> offset_slots;
    for (const Chunk& c : container.chunks) {
        write_descriptor(w, c.descriptor);
        offset_slots.push_back(w.size());
        w.u64(0);
    }
    w.bytes(container.geometry);
    for (size_t i = 0; i < container.chunks.size(); ++i) {
        w.patch_u64(offset_slots[i], w.size());
        w.bytes(container.chunks[i].payload);
    }
    return w.buf;
}

void write_container(const Container& container, const std::string& path) {
    write_file(path, serialize_container(container));
}

Container parse_container(const std::vector<uint8_t>& bytes) {
    // Header length depends on the level count at byte offsets 8..9.
    if (bytes.size() < 18)
        throw FormatError("container too small");
    uint8_t d_min = bytes[8], d_max = bytes[9];
    if (d_min > d_max)
        throw FormatError("header d_min exceeds d_max");
    size_t header_size = 4 + 4 + 2 + 8 + size_t(d_max - d_min + 1) * 4 + 8 + 4;
    if (bytes.size() < header_size)
        throw FormatError("truncated container header");

    Container out;
    out.header = parse_header({bytes.begin(), bytes.begin() + header_size});

    ByteReader r(bytes.data() + header_size, bytes.size() - header_size);
    struct Entry {
        ChunkDescriptor d;
        uint64_t offset;
    };
    std::vector<Entry> table(out.header.chunk_count);
    for (Entry& e : table) {
        e.d = read_descriptor(r);
        e.offset = r.u64();
    }
    out.geometry = r.bytes(out.header.geometry_size);
    uint64_t cursor = header_size + r.position();
    out.chunks.reserve(table.size());
    for (const Entry& e : table) {
        if (e.offset != cursor)
            throw FormatError("chunk table offset mismatch");
        if (e.offset + e.d.compressed_size > bytes.size())
            throw FormatError("chunk payload out of bounds");
        Chunk c;
        c.descriptor = e.d;
        c.payload.assign(bytes.begin() + e.offset, bytes.begin() + e.offset + e.d.compressed_size);
        // Surface corruption now rather than at first use.
        std::vector<uint8_t> raw = decompress_chunk(c);
        (void)raw;
        out.chunks.push_back(std::move(c));
        cursor = e.offset + e.d.compressed_size;
    }
    if (cursor != bytes.size())
        throw FormatError("trailing bytes after chunk payloads");
    return out;
}

Container read_container(const std::string& path) {
    return parse_container(read_file(path));
}

OctreeBTF tree_from_header(const ContainerHeader& header) {
    OctreeBTF tree;
    tree.d_min = header.d_min;
    tree.d_max = header.d_max;
    tree.levels.resize(tree.level_count());
    for (uint32_t j = 0; j < tree.level_count(); ++j)
        tree.levels[j].depth = header.d_min + j;
    tree.light_grid = build_direction_grid(header.light_resolution);
    tree.view_grid = build_direction_grid(header.view_resolution);
    tree.k_y = header.k_y;
    tree.k_uv = header.k_uv;
    tree.direction_pairs = header.direction_pairs();
    for (int ch = 0; ch < 3; ++ch)
        tree.angular[ch].assign(size_t(tree.direction_pairs) * tree.channel_k(ch), 0.0f);
    return tree;
}

void apply_chunk_payload(OctreeBTF& tree, const ChunkId& id, const std::vector<uint8_t>& raw,
                         const ContainerHeader& header) {
    switch (id.kind) {
    case ChunkKind::Voxel: {
        if (id.level >= tree.level_count())
            throw FormatError("voxel chunk level out of range");
        if (raw.size() != size_t(header.voxel_counts[id.level]) * 32)
            throw FormatError("voxel chunk size mismatch");
        OctreeLevel& level = tree.levels[id.level];
        level.voxels.resize(header.voxel_counts[id.level]);
        ByteReader r(raw);
        for (Voxel& v : level.voxels) {
            v.code = r.u64();
            v.normal = {r.f32(), r.f32(), r.f32()};
            v.tangent = {r.f32(), r.f32(), r.f32()};
        }
        break;
    }
    case ChunkKind::Spatial: {
        if (id.level >= tree.level_count() || id.channel > 2)
            throw FormatError("spatial chunk id out of range");
        OctreeLevel& level = tree.levels[id.level];
        if (level.voxels.size() != header.voxel_counts[id.level])
            throw ProtocolError("spatial chunk before its voxel chunk");
        uint32_t k = tree.channel_k(id.channel);
        if (raw.size() != size_t(level.voxels.size()) * k * 4)
            throw FormatError("spatial chunk size mismatch");
        const float* src = reinterpret_cast<const float*>(raw.data());
        for (size_t i = 0; i < level.voxels.size(); ++i)
            level.voxels[i].spatial[id.channel].assign(src + i * k, src + (i + 1) * k);
        break;
    }
    case ChunkKind::Angular: {
        if (id.channel > 2)
            throw FormatError("angular chunk channel out of range");
        uint32_t k = tree.channel_k(id.channel);
        if (uint32_t(id.layer) * 4 + 4 > k)
            throw FormatError("angular layer out of range");
        if (raw.size() != size_t(tree.direction_pairs) * 16)
            throw FormatError("angular chunk size mismatch");
        const float* src = reinterpret_cast<const float*>(raw.data());
        for (uint32_t d = 0; d < tree.direction_pairs; ++d)
            std::memcpy(&tree.angular[id.channel][size_t(d) * k + id.layer * 4], src + size_t(d) * 4,
                        16);
        break;
    }
    }
}

AssembledObject assemble(const Container& container) {
    AssembledObject out;
    out.tree = tree_from_header(container.header);
    // Voxel chunks first so spatial chunks always find their level.
    for (const Chunk& c : container.chunks)
        if (c.descriptor.id.kind == ChunkKind::Voxel)
            apply_chunk_payload(out.tree, c.descriptor.id, decompress_chunk(c), container.header);
    for (const Chunk& c : container.chunks)
        if (c.descriptor.id.kind != ChunkKind::Voxel)
            apply_chunk_payload(out.tree, c.descriptor.id, decompress_chunk(c), container.header);
    out.tree.spatial_assigned = true;
    out.tree.lod_built = true;
    out.mesh = deserialize_geometry(zstd_decompress_framed(container.geometry));
    return out;
}

} // namespace btfstream
