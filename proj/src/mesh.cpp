#include "btfstream/mesh.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "btfstream/binio.hpp"
#include "btfstream/errors.hpp"

namespace btfstream {

Mesh load_mesh(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    Mesh mesh;
    if (ext == "obj")
        mesh = load_obj(path);
    else if (ext == "ply")
        mesh = load_ply(path);
    else
        throw FormatError("unsupported mesh format: " + path);
    if (mesh.empty())
        throw ValidationError("mesh has no triangles: " + path);
    if (mesh.normals.size() != mesh.positions.size())
        recompute_normals(mesh);
    return mesh;
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open OBJ file: " + path);
    Mesh mesh;
    std::vector<Vec3> file_normals;
    std::vector<int> vertex_normal; // normal index per vertex, -1 if none
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            ls >> p.x >> p.y >> p.z;
            mesh.positions.push_back(p);
            vertex_normal.push_back(-1);
        } else if (tag == "vn") {
            Vec3 n;
            ls >> n.x >> n.y >> n.z;
            file_normals.push_back(n);
        } else if (tag == "f") {
            std::vector<uint32_t> verts;
            std::string corner;
            while (ls >> corner) {
                // v, v/vt, v//vn, v/vt/vn
                int vi = 0, ni = 0;
                size_t s1 = corner.find('/');
                vi = std::stoi(corner.substr(0, s1));
                if (s1 != std::string::npos) {
                    size_t s2 = corner.find('/', s1 + 1);
                    if (s2 != std::string::npos && s2 + 1 < corner.size())
                        ni = std::stoi(corner.substr(s2 + 1));
                }
                if (vi < 0)
                    vi = int(mesh.positions.size()) + vi + 1;
                if (vi < 1 || size_t(vi) > mesh.positions.size())
                    throw FormatError("OBJ vertex index out of range");
                if (ni >= 1 && size_t(ni) <= file_normals.size())
                    vertex_normal[vi - 1] = ni - 1;
                verts.push_back(uint32_t(vi - 1));
            }
            for (size_t i = 2; i < verts.size(); ++i)
                mesh.triangles.push_back({verts[0], verts[i - 1], verts[i]});
        }
    }
    if (!file_normals.empty() &&
        std::all_of(vertex_normal.begin(), vertex_normal.end(), [](int i) { return i >= 0; })) {
        mesh.normals.resize(mesh.positions.size());
        for (size_t i = 0; i < mesh.positions.size(); ++i)
            mesh.normals[i] = normalize(file_normals[vertex_normal[i]]);
    }
    return mesh;
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
    bool is_list = false;
    std::string count_type;
};

size_t type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw FormatError("unknown PLY type: " + t);
}

double read_scalar(ByteReader& r, const std::string& t) {
    size_t n = type_size(t);
    if (t == "float" || t == "float32") return r.f32();
    if (t == "double" || t == "float64") {
        double d;
        r.raw(&d, 8);
        return d;
    }
    uint64_t v = 0;
    r.raw(&v, n);
    if ((t == "char" || t == "int8") && (v & 0x80)) v |= ~0xffull;
    if ((t == "short" || t == "int16") && (v & 0x8000)) v |= ~0xffffull;
    if ((t == "int" || t == "int32") && (v & 0x80000000ull)) v |= ~0xffffffffull;
    return double(int64_t(v));
}

} // namespace

Mesh load_ply(const std::string& path) {
    std::vector<uint8_t> data = read_file(path);
    // Header is ASCII up to "end_header\n".
    const char* end_tag = "end_header\n";
    auto it = std::search(data.begin(), data.end(), end_tag, end_tag + std::strlen(end_tag));
    if (it == data.end())
        throw FormatError("PLY header not terminated");
    std::string header(data.begin(), it + std::strlen(end_tag));
    size_t body_off = header.size();

    std::istringstream hs(header);
    std::string line;
    std::getline(hs, line);
    if (line != "ply")
        throw FormatError("not a PLY file");
    struct Element {
        std::string name;
        size_t count = 0;
        std::vector<PlyProperty> props;
    };
    std::vector<Element> elements;
    bool little_endian = false;
    while (std::getline(hs, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            little_endian = fmt == "binary_little_endian";
        } else if (tag == "element") {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty())
                throw FormatError("PLY property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        }
    }
    if (!little_endian)
        throw FormatError("only binary little-endian PLY is supported");

    Mesh mesh;
    ByteReader r(data.data() + body_off, data.size() - body_off);
    for (const auto& e : elements) {
        for (size_t i = 0; i < e.count; ++i) {
            Vec3 pos{}, nrm{};
            bool has_n = false;
            for (const auto& p : e.props) {
                if (p.is_list) {
                    size_t n = size_t(read_scalar(r, p.count_type));
                    std::vector<uint32_t> idx(n);
                    for (size_t j = 0; j < n; ++j)
                        idx[j] = uint32_t(read_scalar(r, p.type));
                    if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index"))
                        for (size_t j = 2; j < n; ++j)
                            mesh.triangles.push_back({idx[0], idx[j - 1], idx[j]});
                } else {
                    double v = read_scalar(r, p.type);
                    if (e.name == "vertex") {
                        if (p.name == "x") pos.x = float(v);
                        else if (p.name == "y") pos.y = float(v);
                        else if (p.name == "z") pos.z = float(v);
                        else if (p.name == "nx") { nrm.x = float(v); has_n = true; }
                        else if (p.name == "ny") { nrm.y = float(v); has_n = true; }
                        else if (p.name == "nz") { nrm.z = float(v); has_n = true; }
                    }
                }
            }
            if (e.name == "vertex") {
                mesh.positions.push_back(pos);
                if (has_n)
                    mesh.normals.push_back(normalize(nrm));
            }
        }
    }
    for (const auto& t : mesh.triangles)
        for (uint32_t v : t)
            if (v >= mesh.positions.size())
                throw FormatError("PLY face index out of range");
    return mesh;
}

void recompute_normals(Mesh& mesh) {
    mesh.normals.assign(mesh.positions.size(), {0, 0, 0});
    for (const auto& t : mesh.triangles) {
        Vec3 n = cross(mesh.positions[t[1]] - mesh.positions[t[0]],
                       mesh.positions[t[2]] - mesh.positions[t[0]]);
        for (uint32_t v : t)
            mesh.normals[v] += n; // area-weighted (cross product length = 2*area)
    }
    for (auto& n : mesh.normals) {
        n = normalize(n);
        if (n == Vec3{0, 0, 0})
            n = {0, 0, 1};
    }
}

void normalize_to_unit_cube(Mesh& mesh) {
    if (mesh.positions.empty())
        throw ValidationError("empty mesh");
    Vec3 lo = mesh.positions[0], hi = mesh.positions[0];
    for (const auto& p : mesh.positions) {
        lo = min3(lo, p);
        hi = max3(hi, p);
    }
    Vec3 extent = hi - lo;
    float largest = std::max({extent.x, extent.y, extent.z});
    float scale = largest > 0.0f ? 1.0f / largest : 1.0f;
    // Center the smaller axes inside the cube.
    Vec3 margin = (Vec3{largest, largest, largest} - extent) * (0.5f * scale);
    for (auto& p : mesh.positions)
        p = (p - lo) * scale + margin;
}

std::vector<uint8_t> serialize_geometry(const Mesh& mesh) {
    ByteWriter w;
    w.u32(uint32_t(mesh.positions.size()));
    w.u32(uint32_t(mesh.triangles.size()));
    for (const auto& p : mesh.positions) {
        w.f32(p.x);
        w.f32(p.y);
        w.f32(p.z);
    }
    for (const auto& t : mesh.triangles) {
        w.u32(t[0]);
        w.u32(t[1]);
        w.u32(t[2]);
    }
    return w.buf;
}

Mesh deserialize_geometry(const std::vector<uint8_t>& data) {
    ByteReader r(data);
    Mesh mesh;
    uint32_t nv = r.u32();
    uint32_t nt = r.u32();
    mesh.positions.resize(nv);
    for (auto& p : mesh.positions) {
        p.x = r.f32();
        p.y = r.f32();
        p.z = r.f32();
    }
    mesh.triangles.resize(nt);
    for (auto& t : mesh.triangles) {
        t[0] = r.u32();
        t[1] = r.u32();
        t[2] = r.u32();
        for (uint32_t v : t)
            if (v >= nv)
                throw FormatError("geometry index out of range");
    }
    if (!r.done())
        throw FormatError("trailing bytes in geometry blob");
    recompute_normals(mesh);
    return mesh;
}

Mesh placeholder_sphere() {
    // Icosahedron, subdivided twice: 20 * 4^2 = 320 triangles.
    const float phi = (1.0f + std::sqrt(5.0f)) / 2.0f;
    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : verts)
        v = normalize(v);
    std::vector<std::array<uint32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int level = 0; level < 2; ++level) {
        std::map<std::pair<uint32_t, uint32_t>, uint32_t> midpoint;
        auto mid = [&](uint32_t a, uint32_t b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end())
                return it->second;
            verts.push_back(normalize(verts[a] + verts[b]));
            uint32_t idx = uint32_t(verts.size() - 1);
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<uint32_t, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            uint32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    Mesh mesh;
    mesh.positions.resize(verts.size());
    mesh.normals.resize(verts.size());
    for (size_t i = 0; i < verts.size(); ++i) {
        mesh.positions[i] = verts[i] * 0.5f + Vec3{0.5f, 0.5f, 0.5f};
        mesh.normals[i] = verts[i];
    }
    mesh.triangles = std::move(faces);
    return mesh;
}

Mesh make_cube(float lo, float hi) {
    Mesh mesh;
    for (int i = 0; i < 8; ++i)
        mesh.positions.push_back({i & 1 ? hi : lo, i & 2 ? hi : lo, i & 4 ? hi : lo});
    auto quad = [&](uint32_t a, uint32_t b, uint32_t c, uint32_t d) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
    };
    quad(0, 2, 3, 1); // z = lo
    quad(4, 5, 7, 6); // z = hi
    quad(0, 1, 5, 4); // y = lo
    quad(2, 6, 7, 3); // y = hi
    quad(0, 4, 6, 2); // x = lo
    quad(1, 3, 7, 5); // x = hi
    recompute_normals(mesh);
    return mesh;
}

} // namespace btfstream
