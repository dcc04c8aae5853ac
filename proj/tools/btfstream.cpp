// btfstream: synthesize, compress, serve, fetch, render, measure and
// annotate progressive BTF containers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "btfstream/btf.hpp"
#include "btfstream/chunks.hpp"
#include "btfstream/client.hpp"
#include "btfstream/errors.hpp"
#include "btfstream/image.hpp"
#include "btfstream/mesh.hpp"
#include "btfstream/octree.hpp"
#include "btfstream/render.hpp"
#include "btfstream/server.hpp"

using namespace btfstream;

namespace {

int log_level() {
    static int level = [] {
        const char* env = std::getenv("BTFSTREAM_LOG");
        if (!env)
            return 1;
        std::string v = env;
        if (v == "debug")
            return 2;
        if (v == "info")
            return 1;
        if (v == "quiet" || v == "error")
            return 0;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1)
        std::cerr << "btfstream: " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2)
        std::cerr << "btfstream: " << msg << "\n";
}

std::vector<float> parse_floats(const std::string& csv, size_t expected, const std::string& what) {
    std::vector<float> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(std::stof(item));
    if (out.size() != expected)
        throw ValidationError(what + " needs " + std::to_string(expected) + " comma-separated values");
    return out;
}

Vec3 parse_vec3(const std::string& csv, const std::string& what) {
    auto v = parse_floats(csv, 3, what);
    return {v[0], v[1], v[2]};
}

// point:x,y,z[:r,g,b] | dir:dx,dy,dz[:r,g,b] | spot:x,y,z:dx,dy,dz:angle[:r,g,b]
LightSource parse_light(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':'))
        parts.push_back(item);
    if (parts.empty())
        throw ValidationError("empty light specification");
    LightSource light;
    if (parts[0] == "point") {
        if (parts.size() < 2 || parts.size() > 3)
            throw ValidationError("point light: point:x,y,z[:r,g,b]");
        light.kind = LightKind::Point;
        light.position = parse_vec3(parts[1], "light position");
        if (parts.size() == 3)
            light.intensity = parse_vec3(parts[2], "light intensity");
    } else if (parts[0] == "dir") {
        if (parts.size() < 2 || parts.size() > 3)
            throw ValidationError("directional light: dir:dx,dy,dz[:r,g,b]");
        light.kind = LightKind::Directional;
        light.direction = parse_vec3(parts[1], "light direction");
        if (parts.size() == 3)
            light.intensity = parse_vec3(parts[2], "light intensity");
    } else if (parts[0] == "spot") {
        if (parts.size() < 4 || parts.size() > 5)
            throw ValidationError("spot light: spot:x,y,z:dx,dy,dz:angle[:r,g,b]");
        light.kind = LightKind::Spot;
        light.position = parse_vec3(parts[1], "light position");
        light.direction = parse_vec3(parts[2], "light direction");
        light.cone_angle_degrees = std::stof(parts[3]);
        if (parts.size() == 5)
            light.intensity = parse_vec3(parts[4], "light intensity");
    } else {
        throw ValidationError("unknown light kind: " + parts[0]);
    }
    return light;
}

bool looks_like_address(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon + 1 >= s.size())
        return false;
    for (size_t i = colon + 1; i < s.size(); ++i)
        if (!std::isdigit((unsigned char)s[i]))
            return false;
    return true;
}

// Offline replay of a container into a renderable snapshot.
std::shared_ptr<const Snapshot> snapshot_from_container(const Container& container) {
    ProgressiveState state;
    state.apply_object_info(serialize_header(container.header));
    state.apply_geometry(container.geometry);
    for (const Chunk& chunk : container.chunks)
        state.apply_chunk(chunk.descriptor, chunk.payload);
    return state.snapshot();
}

std::shared_ptr<const Snapshot> load_snapshot(const std::string& source, int timeout_ms) {
    if (looks_like_address(source)) {
        auto [host, port] = parse_address(source);
        StreamClient client(host, port);
        if (!client.wait_complete(timeout_ms))
            throw NetworkError("timed out waiting for the full object from " + source);
        auto snap = client.snapshot();
        client.close();
        return snap;
    }
    return snapshot_from_container(parse_container(read_file(source)));
}

const char* kind_name(ChunkKind kind) {
    switch (kind) {
    case ChunkKind::Voxel: return "voxel";
    case ChunkKind::Spatial: return "spatial";
    case ChunkKind::Angular: return "angular";
    }
    return "?";
}

int run(int argc, char** argv) {
    CLI::App app{"Progressive BTF compression and streaming toolkit"};
    app.require_subcommand(1);
    app.set_config("--config");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Synthesize a test reflectance tensor");
    std::string synth_out;
    uint32_t synth_points = 16, synth_light_res = 8, synth_view_res = 8;
    uint64_t synth_seed = 1;
    bool synth_lambert = false;
    std::string synth_albedo;
    synth->add_option("output", synth_out, "Output tensor file")->required();
    synth->add_option("--points", synth_points, "Point lattice resolution (P = points^3)");
    synth->add_option("--light-res", synth_light_res, "Light grid resolution");
    synth->add_option("--view-res", synth_view_res, "View grid resolution");
    synth->add_option("--seed", synth_seed, "Material seed");
    synth->add_flag("--lambert", synth_lambert, "Disable the specular lobe");
    synth->add_option("--albedo", synth_albedo, "Constant albedo r,g,b");

    // ---- compress ----
    auto* compress = app.add_subcommand("compress", "Factorize a tensor into a container");
    std::string compress_in, compress_out, compress_mesh;
    uint32_t compress_ky = 72, compress_kuv = 8, compress_dmin = 0, compress_dmax = 4;
    compress->add_option("input", compress_in, "Input tensor file")->required();
    compress->add_option("output", compress_out, "Output container")->required();
    compress->add_option("--kY", compress_ky, "Retained luminance components (multiple of 4)");
    compress->add_option("--kUV", compress_kuv, "Retained chroma components (multiple of 4)");
    compress->add_option("--dmin", compress_dmin, "Coarsest streamed octree depth");
    compress->add_option("--dmax", compress_dmax, "Finest octree depth");
    compress->add_option("--mesh", compress_mesh, "Geometry (OBJ/PLY); default unit-cube block");

    // ---- serve ----
    auto* serve = app.add_subcommand("serve", "Stream a container over TCP");
    std::string serve_container, serve_bind = "127.0.0.1:7600", serve_journal;
    serve->add_option("container", serve_container, "Container to serve")->required();
    serve->add_option("--bind", serve_bind, "Listen address host:port");
    serve->add_option("--journal", serve_journal, "Annotation journal (JSON lines)");

    // ---- fetch ----
    auto* fetch = app.add_subcommand("fetch", "Download a streamed object to a container");
    std::string fetch_addr, fetch_out;
    int fetch_timeout = 120000;
    fetch->add_option("address", fetch_addr, "Server host:port")->required();
    fetch->add_option("--out", fetch_out, "Output container")->required();
    fetch->add_option("--timeout-ms", fetch_timeout, "Completion timeout");

    // ---- annotate ----
    auto* annotate = app.add_subcommand("annotate", "Place an annotation on a streamed object");
    std::string ann_addr, ann_kind = "marker", ann_pos, ann_text;
    uint32_t ann_stroke = 0;
    annotate->add_option("address", ann_addr, "Server host:port")->required();
    annotate->add_option("--kind", ann_kind, "marker | text | stroke");
    annotate->add_option("--pos", ann_pos, "Position x,y,z in the unit cube")->required();
    annotate->add_option("--text", ann_text, "Label (text annotations)");
    annotate->add_option("--stroke-id", ann_stroke, "Stroke identifier (stroke points)");

    // ---- render ----
    auto* render_cmd = app.add_subcommand("render", "Ray-cast a container or streamed object");
    std::string render_source, render_out, render_camera, render_size = "256x256";
    std::string render_envmap;
    std::vector<std::string> render_lights;
    uint32_t render_env_lights = 8;
    int render_timeout = 120000;
    render_cmd->add_option("source", render_source, "Container path or server host:port")->required();
    render_cmd->add_option("--out", render_out, "Output image (.png or .ppm)")->required();
    render_cmd->add_option("--camera", render_camera, "px,py,pz,lx,ly,lz,fov");
    render_cmd->add_option("--size", render_size, "WIDTHxHEIGHT");
    render_cmd->add_option("--light", render_lights, "Light spec (repeatable)");
    render_cmd->add_option("--envmap", render_envmap, "Equirectangular environment map (PPM)");
    render_cmd->add_option("--env-lights", render_env_lights, "Directional lights for --envmap");
    render_cmd->add_option("--timeout-ms", render_timeout, "Streaming completion timeout");

    // ---- curve ----
    auto* curve_cmd = app.add_subcommand("curve", "Progressive quality curve against a reference");
    std::string curve_source, curve_reference, curve_csv, curve_camera;
    std::vector<std::string> curve_lights;
    int curve_timeout = 120000;
    curve_cmd->add_option("source", curve_source, "Container path or server host:port")->required();
    curve_cmd->add_option("--reference", curve_reference, "Reference image (PPM)")->required();
    curve_cmd->add_option("--csv", curve_csv, "Output CSV (default standard output)");
    curve_cmd->add_option("--camera", curve_camera, "px,py,pz,lx,ly,lz,fov");
    curve_cmd->add_option("--light", curve_lights, "Light spec (repeatable)");
    curve_cmd->add_option("--timeout-ms", curve_timeout, "Streaming completion timeout");

    // ---- inspect ----
    auto* inspect = app.add_subcommand("inspect", "Print a container's header and chunk table");
    std::string inspect_container;
    inspect->add_option("container", inspect_container, "Container file")->required();

    CLI11_PARSE(app, argc, argv);

    auto camera_from = [](const std::string& spec, const std::string& size) {
        Camera camera;
        if (!spec.empty()) {
            auto v = parse_floats(spec, 7, "--camera");
            camera.position = {v[0], v[1], v[2]};
            camera.look_at = {v[3], v[4], v[5]};
            camera.fov_degrees = v[6];
        }
        auto x = size.find('x');
        if (x == std::string::npos)
            throw ValidationError("--size must be WIDTHxHEIGHT");
        camera.width = std::stoul(size.substr(0, x));
        camera.height = std::stoul(size.substr(x + 1));
        if (camera.width == 0 || camera.height == 0)
            throw ValidationError("image dimensions must be positive");
        return camera;
    };
    auto lights_from = [](const std::vector<std::string>& specs) {
        std::vector<LightSource> lights;
        for (const auto& s : specs)
            lights.push_back(parse_light(s));
        if (lights.empty())
            lights.push_back({LightKind::Directional, {}, {0, 0, -1}, {3, 3, 3}, 45.0f});
        return lights;
    };

    if (*synth) {
        MaterialOptions options;
        if (synth_lambert)
            options.specular_scale = 0.0f;
        if (!synth_albedo.empty())
            options.albedo_override = parse_vec3(synth_albedo, "--albedo");
        DirectionGrid light_grid = build_direction_grid(synth_light_res);
        DirectionGrid view_grid = build_direction_grid(synth_view_res);
        BTFTensor tensor = synthesize_btf(synth_points, light_grid, view_grid, synth_seed, options);
        write_tensor(synth_out, tensor);
        log_info("wrote " + std::to_string(tensor.direction_pairs) + "x" +
                 std::to_string(tensor.point_count) + " tensor to " + synth_out);
    } else if (*compress) {
        BTFTensor tensor = read_tensor(compress_in);
        uint32_t grid = uint32_t(std::lround(std::cbrt(double(tensor.point_count))));
        if (grid * grid * grid != tensor.point_count)
            throw ValidationError("tensor point count is not a cubic lattice");
        if (compress_dmax < compress_dmin)
            throw ValidationError("--dmax must be >= --dmin");
        log_debug("factorizing " + std::to_string(tensor.direction_pairs) + "x" +
                  std::to_string(tensor.point_count));
        CompressedBtf channels = compress_dfmf(tensor, compress_ky, compress_kuv);
        Mesh mesh = compress_mesh.empty() ? make_cube(0.25f, 0.75f) : load_mesh(compress_mesh);
        if (!compress_mesh.empty())
            normalize_to_unit_cube(mesh);
        OctreeBTF tree = voxelize(mesh, compress_dmin, compress_dmax);
        assign_spatial(tree, channels, lattice_points(grid));
        build_lod(tree);
        write_container(build_container(tree, mesh), compress_out);
        log_info("wrote container " + compress_out);
    } else if (*serve) {
        Container container = parse_container(read_file(serve_container));
        auto [host, port] = parse_address(serve_bind);
        StreamServer server(std::move(container), host, port, serve_journal);
        log_info("serving " + serve_container + " on " + host + ":" + std::to_string(server.port()));
        // Runs until interrupted.
        for (;;)
            std::this_thread::sleep_for(std::chrono::hours(1));
    } else if (*fetch) {
        auto [host, port] = parse_address(fetch_addr);
        StreamClient client(host, port);
        if (!client.wait_complete(fetch_timeout)) {
            client.check_error();
            throw NetworkError("timed out fetching from " + fetch_addr);
        }
        write_container(client.assembled_container(), fetch_out);
        client.close();
        log_info("wrote container " + fetch_out);
    } else if (*annotate) {
        AnnotationKind kind;
        if (ann_kind == "marker")
            kind = AnnotationKind::Marker;
        else if (ann_kind == "text")
            kind = AnnotationKind::Text;
        else if (ann_kind == "stroke")
            kind = AnnotationKind::StrokePoint;
        else
            throw ValidationError("--kind must be marker, text or stroke");
        auto [host, port] = parse_address(ann_addr);
        StreamClient client(host, port);
        Annotation placed =
            client.place_annotation(kind, parse_vec3(ann_pos, "--pos"), ann_text, ann_stroke);
        client.close();
        std::cout << placed.sequence << "\n";
        log_info("annotation accepted with sequence " + std::to_string(placed.sequence));
    } else if (*render_cmd) {
        Camera camera = camera_from(render_camera, render_size);
        std::vector<LightSource> lights;
        if (!render_envmap.empty()) {
            lights = approximate_environment(load_ppm(render_envmap), render_env_lights);
            for (const auto& extra : render_lights)
                lights.push_back(parse_light(extra));
        } else {
            lights = lights_from(render_lights);
        }
        auto snap = load_snapshot(render_source, render_timeout);
        save_image(render_out, render(*snap, camera, lights));
        log_info("wrote " + render_out);
    } else if (*curve_cmd) {
        Camera camera = camera_from(curve_camera, render_size);
        Image reference = load_ppm(curve_reference);
        camera.width = reference.width;
        camera.height = reference.height;
        Container container;
        if (looks_like_address(curve_source)) {
            auto [host, port] = parse_address(curve_source);
            StreamClient client(host, port);
            if (!client.wait_complete(curve_timeout))
                throw NetworkError("timed out fetching from " + curve_source);
            container = client.assembled_container();
            client.close();
        } else {
            container = parse_container(read_file(curve_source));
        }
        auto points = quality_curve(container, camera, lights_from(curve_lights), reference);
        std::ostringstream csv;
        csv << "version,rmse,psnr\n";
        for (const auto& p : points)
            csv << p.version << "," << p.metrics.rmse << "," << p.metrics.psnr << "\n";
        if (curve_csv.empty()) {
            std::cout << csv.str();
        } else {
            std::ofstream out(curve_csv);
            if (!out)
                throw FormatError("cannot write " + curve_csv);
            out << csv.str();
        }
    } else if (*inspect) {
        Container container = parse_container(read_file(inspect_container));
        const ContainerHeader& h = container.header;
        std::cout << "depth range: " << int(h.d_min) << ".." << int(h.d_max) << " ("
                  << h.level_count() << " levels)\n"
                  << "components: k_Y=" << h.k_y << " k_UV=" << h.k_uv << "\n"
                  << "grids: light " << h.light_resolution << "x" << h.light_resolution << ", view "
                  << h.view_resolution << "x" << h.view_resolution << " (" << h.direction_pairs()
                  << " direction pairs)\n"
                  << "voxels per level:";
        for (uint32_t c : h.voxel_counts)
            std::cout << " " << c;
        std::cout << "\ngeometry: " << h.geometry_size << " bytes compressed\n"
                  << "chunks: " << h.chunk_count << "\n";
        std::cout << "index kind    level channel layer uncompressed compressed\n";
        size_t index = 0;
        for (const Chunk& chunk : container.chunks) {
            const ChunkDescriptor& d = chunk.descriptor;
            char line[128];
            std::snprintf(line, sizeof line, "%5zu %-7s %5s %7s %5s %12u %10u", index++,
                          kind_name(d.id.kind),
                          d.id.level == kNoLevel ? "-" : std::to_string(d.id.level).c_str(),
                          d.id.channel == kNoChannel ? "-" : std::string(1, "YUV"[d.id.channel]).c_str(),
                          d.id.kind == ChunkKind::Angular ? std::to_string(d.id.layer).c_str() : "-",
                          d.uncompressed_size, d.compressed_size);
            std::cout << line << "\n";
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "btfstream: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "btfstream: " << e.what() << "\n";
        return 2;
    }
}
