#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace baccae {

// 8-bit grayscale raster, row-major.
class Image {
public:
    Image() = default;
    Image(int width, int height, std::uint8_t fill = 0);
    Image(int width, int height, std::vector<std::uint8_t> pixels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return pixels_.empty(); }

    std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
    std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

    // Edge-replicated read: coordinates outside the frame clamp to the border.
    std::uint8_t clamped(int x, int y) const;

    const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
    std::vector<std::uint8_t>& pixels() noexcept { return pixels_; }

    bool operator==(const Image&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

// Reads an 8-bit grayscale, gray+alpha, palette, RGB or RGBA PNG. Colour is
// reduced with luma weights 0.299/0.587/0.114 and rounded; alpha is dropped.
Image load_grayscale(const std::filesystem::path& path);

// Writes an 8-bit grayscale PNG. Output bytes depend only on the image.
void save_png(const std::filesystem::path& path, const Image& img);

// Writes an 8-bit RGB PNG from interleaved rgb triples (test fixtures, plots).
void save_rgb_png(const std::filesystem::path& path, int width, int height,
                  const std::vector<std::uint8_t>& rgb);

}  // namespace baccae
