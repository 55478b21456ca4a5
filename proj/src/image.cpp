#include "meshdrag/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace meshdrag {

void write_png(const Image& image, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + png.message);
}

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&png);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + png.message);
    }
    Image out(static_cast<int>(png.width), static_cast<int>(png.height));
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = bytes[i] / 255.0;
    return out;
}

}  // namespace meshdrag
