#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "baccae/image.hpp"
#include "baccae/rng.hpp"

namespace baccae::testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("baccae_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Image random_image(Rng& rng, int min_side = 1, int max_side = 40) {
    const int w = min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - min_side + 1)));
    const int h = min_side + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - min_side + 1)));
    Image img(w, h);
    // Mix of flat, narrow-range and full-range images.
    const int mode = static_cast<int>(rng.below(3));
    const int lo = static_cast<int>(rng.below(200));
    for (auto& p : img.pixels()) {
        if (mode == 0) {
            p = static_cast<std::uint8_t>(rng.below(256));
        } else if (mode == 1) {
            p = static_cast<std::uint8_t>(lo + static_cast<int>(rng.below(40)));
        } else {
            p = static_cast<std::uint8_t>(rng.uniform() < 0.5 ? lo : 255);
        }
    }
    return img;
}

}  // namespace baccae::testing
