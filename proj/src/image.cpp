#include "btfstream/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <zlib.h>

#include "btfstream/binio.hpp"
#include "btfstream/errors.hpp"

namespace btfstream {

namespace {

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

uint8_t to_byte(float v) { return uint8_t(std::lround(clamp01(v) * 255.0f)); }

} // namespace

ImageMetrics compute_metrics(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ValidationError("image dimensions differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const Vec3& pa = a.pixels[i];
        const Vec3& pb = b.pixels[i];
        double dr = clamp01(pa.x) - clamp01(pb.x);
        double dg = clamp01(pa.y) - clamp01(pb.y);
        double db = clamp01(pa.z) - clamp01(pb.z);
        sum += dr * dr + dg * dg + db * db;
    }
    ImageMetrics m;
    m.rmse = float(std::sqrt(sum / (double(a.pixels.size()) * 3.0)));
    m.psnr = m.rmse > 0.0f ? std::min(99.0f, 20.0f * std::log10(1.0f / m.rmse)) : 99.0f;
    return m;
}

ImageMetrics compute_metrics_8bit(const Image& a, const Image& b) {
    auto quantize = [](const Image& src) {
        Image out(src.width, src.height);
        for (size_t i = 0; i < src.pixels.size(); ++i)
            out.pixels[i] = {to_byte(src.pixels[i].x) / 255.0f, to_byte(src.pixels[i].y) / 255.0f,
                             to_byte(src.pixels[i].z) / 255.0f};
        return out;
    };
    return compute_metrics(quantize(a), quantize(b));
}

void save_ppm(const std::string& path, const Image& image) {
    std::ostringstream header;
    header << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::string h = header.str();
    std::vector<uint8_t> data(h.begin(), h.end());
    data.reserve(data.size() + image.pixels.size() * 3);
    for (const Vec3& p : image.pixels) {
        data.push_back(to_byte(p.x));
        data.push_back(to_byte(p.y));
        data.push_back(to_byte(p.z));
    }
    write_file(path, data);
}

Image load_ppm(const std::string& path) {
    std::vector<uint8_t> data = read_file(path);
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < data.size() && std::isspace(data[pos]))
            ++pos;
        if (pos < data.size() && data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n')
                ++pos;
            while (pos < data.size() && std::isspace(data[pos]))
                ++pos;
        }
        size_t start = pos;
        while (pos < data.size() && !std::isspace(data[pos]))
            ++pos;
        return std::string(data.begin() + start, data.begin() + pos);
    };
    if (token() != "P6")
        throw FormatError("not a P6 PPM: " + path);
    uint32_t w = std::stoul(token());
    uint32_t h = std::stoul(token());
    uint32_t maxval = std::stoul(token());
    if (maxval != 255)
        throw FormatError("only maxval 255 PPM is supported");
    ++pos; // single whitespace after maxval
    if (data.size() - pos < size_t(w) * h * 3)
        throw FormatError("truncated PPM payload");
    Image img(w, h);
    for (size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = {data[pos + 3 * i] / 255.0f, data[pos + 3 * i + 1] / 255.0f,
                         data[pos + 3 * i + 2] / 255.0f};
    return img;
}

namespace {

void png_chunk(ByteWriter& w, const char tag[4], const std::vector<uint8_t>& body) {
    uint32_t len = uint32_t(body.size());
    uint8_t be[4] = {uint8_t(len >> 24), uint8_t(len >> 16), uint8_t(len >> 8), uint8_t(len)};
    w.raw(be, 4);
    size_t crc_start = w.size();
    w.raw(tag, 4);
    w.bytes(body);
    uint32_t crc = uint32_t(
        ::crc32(0, w.buf.data() + crc_start, uInt(w.size() - crc_start)));
    uint8_t crc_be[4] = {uint8_t(crc >> 24), uint8_t(crc >> 16), uint8_t(crc >> 8), uint8_t(crc)};
    w.raw(crc_be, 4);
}

} // namespace

void save_png(const std::string& path, const Image& image) {
    // Raw scanlines with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(size_t(image.height) * (1 + size_t(image.width) * 3));
    for (uint32_t y = 0; y < image.height; ++y) {
        raw.push_back(0);
        for (uint32_t x = 0; x < image.width; ++x) {
            const Vec3& p = image.at(x, y);
            raw.push_back(to_byte(p.x));
            raw.push_back(to_byte(p.y));
            raw.push_back(to_byte(p.z));
        }
    }
    uLongf compressed_size = ::compressBound(uLong(raw.size()));
    std::vector<uint8_t> compressed(compressed_size);
    if (::compress2(compressed.data(), &compressed_size, raw.data(), uLong(raw.size()), 9) != Z_OK)
        throw FormatError("PNG deflate failed");
    compressed.resize(compressed_size);

    ByteWriter w;
    const uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    w.raw(signature, 8);
    std::vector<uint8_t> ihdr = {
        uint8_t(image.width >> 24),  uint8_t(image.width >> 16),
        uint8_t(image.width >> 8),   uint8_t(image.width),
        uint8_t(image.height >> 24), uint8_t(image.height >> 16),
        uint8_t(image.height >> 8),  uint8_t(image.height),
        8,  // bit depth
        2,  // color type: truecolor
        0, 0, 0,
    };
    png_chunk(w, "IHDR", ihdr);
    png_chunk(w, "IDAT", compressed);
    png_chunk(w, "IEND", {});
    write_file(path, w.buf);
}

void save_image(const std::string& path, const Image& image) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "png")
        save_png(path, image);
    else if (ext == "ppm")
        save_ppm(path, image);
    else
        throw ValidationError("unsupported image extension: " + path);
}

} // namespace btfstream
