#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace meshdrag {

/// Interleaved RGB image, row-major (row 0 at the top), H x W x 3 doubles.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

    double& at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
               static_cast<std::size_t>(c);
    }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

    std::span<double> values() { return data; }
    std::span<const double> values() const { return data; }
};

/// 8-bit RGB PNG; values are clamped to [0,1]. Throws std::runtime_error on failure.
void write_png(const Image& image, const std::filesystem::path& path);
/// Reads 8-bit gray/RGB/RGBA PNGs (alpha dropped) into [0,1].
Image read_png(const std::filesystem::path& path);

}  // namespace meshdrag
