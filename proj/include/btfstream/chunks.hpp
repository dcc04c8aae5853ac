#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btfstream/binio.hpp"
#include "btfstream/mesh.hpp"
#include "btfstream/octree.hpp"

namespace btfstream {

enum class ChunkKind : uint8_t { Voxel = 0, Spatial = 1, Angular = 2 };
enum class Channel : uint8_t { Y = 0, U = 1, V = 2 };

constexpr uint16_t kNoLevel = 0xFFFF;
constexpr uint8_t kNoChannel = 0xFF;
constexpr int kZstdLevel = 19;

// Identity of a chunk within one container; levels are 0-based from the
// coarsest streamed level (depth = d_min + level).
struct ChunkId {
    ChunkKind kind = ChunkKind::Voxel;
    uint16_t level = 0;   // VOXEL/SPATIAL; kNoLevel for ANGULAR
    uint8_t channel = 0;  // SPATIAL/ANGULAR; kNoChannel for VOXEL
    uint16_t layer = 0;   // ANGULAR: group of 4 components

    bool operator==(const ChunkId&) const = default;
    bool operator<(const ChunkId& o) const;
};

struct ChunkDescriptor {
    ChunkId id;
    uint32_t uncompressed_size = 0;
    uint32_t compressed_size = 0;
};

struct Chunk {
    ChunkDescriptor descriptor;
    std::vector<uint8_t> payload; // zstd-compressed
};

using LoadOrder = std::vector<ChunkId>;

// Zstandard, fixed level, one frame per chunk.
std::vector<uint8_t> zstd_compress(const std::vector<uint8_t>& raw);
std::vector<uint8_t> zstd_decompress(const std::vector<uint8_t>& compressed,
                                     size_t expected_size);
// Size taken from the frame header (geometry blobs).
std::vector<uint8_t> zstd_decompress_framed(const std::vector<uint8_t>& compressed);
Chunk compress_chunk(const ChunkId& id, const std::vector<uint8_t>& raw);
std::vector<uint8_t> decompress_chunk(const Chunk& chunk);

// Chunk inventory of a fully populated tree, in canonical (not transmission)
// order: voxel chunks, spatial chunks, angular layers.
std::vector<Chunk> build_chunks(const OctreeBTF& tree);

// Total chunk count: l voxel + 3l spatial + k_Y/4 + 2*k_UV/4 angular.
uint32_t chunk_count(uint32_t levels, uint32_t k_y, uint32_t k_uv);

// Progressive transmission order: coarsest level first with one angular
// layer per channel, remaining layers spread over the finer levels,
// leftovers appended at the end.
LoadOrder build_load_order(uint32_t levels, uint32_t k_y, uint32_t k_uv);

void write_descriptor(ByteWriter& w, const ChunkDescriptor& d);
ChunkDescriptor read_descriptor(ByteReader& r);
constexpr size_t kDescriptorWireSize = 14;

// ---- OBTF container ----

struct ContainerHeader {
    uint8_t d_min = 0;
    uint8_t d_max = 0;
    uint16_t k_y = 0;
    uint16_t k_uv = 0;
    uint16_t light_resolution = 0;
    uint16_t view_resolution = 0;
    std::vector<uint32_t> voxel_counts; // per streamed level
    uint64_t geometry_size = 0;         // compressed byte length
    uint32_t chunk_count = 0;

    uint32_t level_count() const { return uint32_t(d_max - d_min) + 1; }
    uint32_t direction_pairs() const {
        return uint32_t(light_resolution) * light_resolution * view_resolution * view_resolution;
    }
    uint32_t channel_k(int ch) const { return ch == 0 ? k_y : k_uv; }
};

std::vector<uint8_t> serialize_header(const ContainerHeader& header);
ContainerHeader parse_header(const std::vector<uint8_t>& bytes);

struct Container {
    ContainerHeader header;
    std::vector<uint8_t> geometry; // zstd-compressed wire-form mesh
    std::vector<Chunk> chunks;     // in load order

    LoadOrder load_order() const;
};

// Assemble a container from a populated tree and its mesh; chunks are laid
// out in transmission order.
Container build_container(const OctreeBTF& tree, const Mesh& mesh);

void write_container(const Container& container, const std::string& path);
std::vector<uint8_t> serialize_container(const Container& container);
Container read_container(const std::string& path);
Container parse_container(const std::vector<uint8_t>& bytes);

// ---- chunk payload application (shared by client assembly and readers) ----

// Skeleton tree sized from a header: level/angular storage allocated, no
// voxel or factor data yet.
OctreeBTF tree_from_header(const ContainerHeader& header);

// Applies one decompressed payload. Spatial chunks require the level's voxel
// chunk first; angular layers slot into their component columns.
void apply_chunk_payload(OctreeBTF& tree, const ChunkId& id, const std::vector<uint8_t>& raw,
                         const ContainerHeader& header);

// Full offline reassembly (geometry + every chunk).
struct AssembledObject {
    OctreeBTF tree;
    Mesh mesh;
};
AssembledObject assemble(const Container& container);

} // namespace btfstream
