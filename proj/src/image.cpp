#include "baccae/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <array>
#include <fstream>
#include <string>

#include "baccae/error.hpp"

namespace baccae {

Image::Image(int width, int height, std::uint8_t fill) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::Parameter, "image dimensions must be positive");
    }
    width_ = width;
    height_ = height;
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image::Image(int width, int height, std::vector<std::uint8_t> pixels) {
    if (width <= 0 || height <= 0) {
        throw Error(ErrorKind::Parameter, "image dimensions must be positive");
    }
    if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error(ErrorKind::Dimension, "pixel count does not match width*height");
    }
    width_ = width;
    height_ = height;
    pixels_ = std::move(pixels);
}

std::uint8_t Image::clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return pixels_[index(x, y)];
}

namespace {

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

struct Header {
    int bit_depth = 0;
    int color_type = 0;
};

// IHDR is always the first chunk: 8-byte signature, 4-byte length, "IHDR",
// width, height, then bit depth and colour type.
Header read_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Load, "cannot open " + path.string());
    std::array<unsigned char, 26> head{};
    in.read(reinterpret_cast<char*>(head.data()), head.size());
    static constexpr std::array<unsigned char, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (in.gcount() != static_cast<std::streamsize>(head.size()) ||
        !std::equal(kSignature.begin(), kSignature.end(), head.begin()) ||
        std::string(reinterpret_cast<const char*>(head.data()) + 12, 4) != "IHDR") {
        throw Error(ErrorKind::Load, "not a PNG file: " + path.string());
    }
    return {head[24], head[25]};
}

}  // namespace

Image load_grayscale(const std::filesystem::path& path) {
    const Header header = read_header(path);
    const bool palette = header.color_type == PNG_COLOR_TYPE_PALETTE;
    if (!palette && header.bit_depth != 8) {
        throw Error(ErrorKind::Load, "unsupported bit depth " + std::to_string(header.bit_depth) +
                                         " in " + path.string());
    }
    const bool colour = palette || (header.color_type & PNG_COLOR_MASK_COLOR) != 0;

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::Load, path.string() + ": " + msg);
    }
    // Alpha is kept in the requested format and discarded below so libpng
    // never composites against a background.
    image.format = colour ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::Load, path.string() + ": " + msg);
    }

    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    const std::size_t channels = colour ? 4 : 2;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const png_byte* px = buffer.data() + i * channels;
        pixels[i] = colour ? luma(px[0], px[1], px[2]) : px[0];
    }
    return Image(width, height, std::move(pixels));
}

namespace {

void write_png(const std::filesystem::path& path, int width, int height, png_uint_32 format,
               const std::uint8_t* data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::Io, "cannot write " + path.string() + ": " + msg);
    }
}

}  // namespace

void save_png(const std::filesystem::path& path, const Image& img) {
    if (img.empty()) throw Error(ErrorKind::Parameter, "cannot save an empty image");
    write_png(path, img.width(), img.height(), PNG_FORMAT_GRAY, img.pixels().data());
}

void save_rgb_png(const std::filesystem::path& path, int width, int height,
                  const std::vector<std::uint8_t>& rgb) {
    if (width <= 0 || height <= 0 ||
        rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
        throw Error(ErrorKind::Dimension, "rgb buffer does not match dimensions");
    }
    write_png(path, width, height, PNG_FORMAT_RGB, rgb.data());
}

}  // namespace baccae
