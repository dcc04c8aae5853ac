#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btfstream/vecmath.hpp"

namespace btfstream {

// Linear RGB float image, row-major from the top-left.
struct Image {
    uint32_t width = 0;
    uint32_t height = 0;
    std::vector<Vec3> pixels;

    Image() = default;
    Image(uint32_t w, uint32_t h) : width(w), height(h), pixels(size_t(w) * h) {}

    Vec3& at(uint32_t x, uint32_t y) { return pixels[size_t(y) * width + x]; }
    const Vec3& at(uint32_t x, uint32_t y) const { return pixels[size_t(y) * width + x]; }
};

struct ImageMetrics {
    float rmse = 0.0f;
    float psnr = 99.0f; // dB, capped at 99 for identical images
};

// RMSE/PSNR over unit-range (clamped) pixel values.
ImageMetrics compute_metrics(const Image& a, const Image& b);

// Quantize both images to 8 bits first (comparisons against images that
// went through a file).
ImageMetrics compute_metrics_8bit(const Image& a, const Image& b);

void save_ppm(const std::string& path, const Image& image);
Image load_ppm(const std::string& path);
void save_png(const std::string& path, const Image& image);

// Picks the writer from the extension (.png or .ppm).
void save_image(const std::string& path, const Image& image);

} // namespace btfstream
