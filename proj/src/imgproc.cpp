#include "baccae/imgproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae::imgproc {

namespace {

std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Image histogram_equalize(const Image& img) {
    std::array<std::size_t, 256> hist{};
    for (auto p : img.pixels()) ++hist[p];

    std::array<std::size_t, 256> cdf{};
    std::size_t running = 0;
    for (int v = 0; v < 256; ++v) {
        running += hist[v];
        cdf[v] = running;
    }
    const std::size_t total = img.pixels().size();
    std::size_t cdf_min = 0;
    for (int v = 0; v < 256; ++v) {
        if (cdf[v] != 0) {
            cdf_min = cdf[v];
            break;
        }
    }
    if (total == cdf_min) return img;

    std::array<std::uint8_t, 256> lut{};
    const double denom = static_cast<double>(total - cdf_min);
    for (int v = 0; v < 256; ++v) {
        const double num = cdf[v] >= cdf_min ? static_cast<double>(cdf[v] - cdf_min) : 0.0;
        lut[v] = to_u8(255.0 * num / denom);
    }
    Image out = img;
    for (auto& p : out.pixels()) p = lut[p];
    return out;
}

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
    if (kernel_size <= 0 || kernel_size % 2 == 0) {
        throw Error(ErrorKind::Parameter, "blur kernel size must be odd and positive, got " +
                                              std::to_string(kernel_size));
    }
    if (!(sigma > 0.0)) throw Error(ErrorKind::Parameter, "blur sigma must be positive");
    const int r = kernel_size / 2;
    std::vector<double> w(static_cast<std::size_t>(kernel_size));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        w[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i + r)];
    }
    for (auto& x : w) x /= sum;
    return w;
}

Image gaussian_blur(const Image& img, double sigma, int kernel_size) {
    const auto w = gaussian_kernel(kernel_size, sigma);
    const int r = kernel_size / 2;
    const int width = img.width();
    const int height = img.height();

    std::vector<double> tmp(img.pixels().size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += w[static_cast<std::size_t>(i + r)] * img.clamped(x + i, y);
            tmp[static_cast<std::size_t>(y) * width + x] = acc;
        }
    }
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::clamp(y + i, 0, height - 1);
                acc += w[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(yy) * width + x];
            }
            out.at(x, y) = to_u8(acc);
        }
    }
    return out;
}

Image adaptive_threshold(const Image& img, int block_size, double offset_c) {
    if (block_size < 3 || block_size % 2 == 0) {
        throw Error(ErrorKind::Parameter, "threshold block size must be odd and >= 3, got " +
                                              std::to_string(block_size));
    }
    const int r = block_size / 2;
    const int width = img.width();
    const int height = img.height();
    // Summed-area table over the edge-replicated padded image.
    const int pw = width + 2 * r;
    const int ph = height + 2 * r;
    std::vector<std::int64_t> sat(static_cast<std::size_t>(pw + 1) * (ph + 1), 0);
    auto at = [&](int x, int y) -> std::int64_t& { return sat[static_cast<std::size_t>(y) * (pw + 1) + x]; };
    for (int y = 0; y < ph; ++y) {
        std::int64_t row = 0;
        for (int x = 0; x < pw; ++x) {
            row += img.clamped(x - r, y - r);
            at(x + 1, y + 1) = at(x + 1, y) + row;
        }
    }
    const double area = static_cast<double>(block_size) * block_size;
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            // Padded coordinates of the block centred on (x, y) span [x, x + 2r].
            const std::int64_t sum = at(x + block_size, y + block_size) - at(x, y + block_size) -
                                     at(x + block_size, y) + at(x, y);
            const double mean = static_cast<double>(sum) / area;
            out.at(x, y) = img.at(x, y) > mean - offset_c ? 255 : 0;
        }
    }
    return out;
}

Image preprocess(const Image& img, const PreprocessParams& params) {
    Image out = params.equalize ? histogram_equalize(img) : img;
    out = gaussian_blur(out, params.blur_sigma, params.blur_kernel);
    return adaptive_threshold(out, params.threshold_block, params.threshold_c);
}

Image resize_bilinear(const Image& img, int width, int height) {
    if (width <= 0 || height <= 0) throw Error(ErrorKind::Parameter, "resize target must be positive");
    if (width == img.width() && height == img.height()) return img;
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height() - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width() - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double tx = fx - x0;
            const double top = (1 - tx) * img.at(x0, y0) + tx * img.at(x1, y0);
            const double bottom = (1 - tx) * img.at(x0, y1) + tx * img.at(x1, y1);
            out.at(x, y) = to_u8((1 - ty) * top + ty * bottom);
        }
    }
    return out;
}

RegionManifest::RegionManifest(std::vector<ManifestEntry> entries) {
    for (auto& e : entries) add(std::move(e));
}

void RegionManifest::add(ManifestEntry e) {
    const std::string where = "sample '" + e.sample_id + "' region " + std::to_string(e.region_id);
    if (e.region_id < kMinRegionId || e.region_id > kMaxRegionId) {
        throw Error(ErrorKind::Manifest, where + ": region id outside [1,19]");
    }
    for (double c : {e.x0, e.y0, e.x1, e.y1}) {
        if (!(c >= 0.0 && c <= 1.0)) throw Error(ErrorKind::Manifest, where + ": coordinate outside [0,1]");
    }
    if (!(e.x0 < e.x1 && e.y0 < e.y1)) throw Error(ErrorKind::Manifest, where + ": zero-area box");
    const auto key = std::make_pair(e.sample_id, e.region_id);
    if (index_.contains(key)) throw Error(ErrorKind::Manifest, where + ": duplicate entry");
    index_.emplace(key, entries_.size());
    entries_.push_back(std::move(e));
}

const ManifestEntry* RegionManifest::find(const std::string& sample_id, int region_id) const {
    const auto it = index_.find({sample_id, region_id});
    return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<int> RegionManifest::region_ids() const {
    std::set<int> ids;
    for (const auto& e : entries_) ids.insert(e.region_id);
    return {ids.begin(), ids.end()};
}

RegionManifest RegionManifest::load(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_sample = table.column("sample_id");
    const auto c_region = table.column("region_id");
    const auto c_x0 = table.column("x0");
    const auto c_y0 = table.column("y0");
    const auto c_x1 = table.column("x1");
    const auto c_y1 = table.column("y1");
    RegionManifest manifest;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        ManifestEntry e;
        e.sample_id = row[c_sample];
        e.region_id = static_cast<int>(csv::parse_int(row[c_region], table, i));
        e.x0 = csv::parse_double(row[c_x0], table, i);
        e.y0 = csv::parse_double(row[c_y0], table, i);
        e.x1 = csv::parse_double(row[c_x1], table, i);
        e.y1 = csv::parse_double(row[c_y1], table, i);
        try {
            manifest.add(std::move(e));
        } catch (const Error& err) {
            throw Error(ErrorKind::Manifest, path.string() + ":" + std::to_string(table.line_numbers[i]) +
                                                 ": " + err.what());
        }
    }
    return manifest;
}

void RegionManifest::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "sample_id,region_id,x0,y0,x1,y1\n";
    for (const auto& e : entries_) {
        out << e.sample_id << ',' << e.region_id << ',' << csv::format_double(e.x0) << ','
            << csv::format_double(e.y0) << ',' << csv::format_double(e.x1) << ','
            << csv::format_double(e.y1) << '\n';
    }
}

CropResult crop_regions(const Image& img, const std::string& sample_id, const RegionManifest& manifest,
                        const CanonicalSizes& canonical_sizes) {
    CropResult result;
    for (const auto& [region, size] : canonical_sizes) {
        const ManifestEntry* e = manifest.find(sample_id, region);
        if (!e) {
            result.missing_regions.push_back(region);
            continue;
        }
        const int px0 = std::clamp(static_cast<int>(std::floor(e->x0 * img.width())), 0, img.width());
        const int py0 = std::clamp(static_cast<int>(std::floor(e->y0 * img.height())), 0, img.height());
        const int px1 = std::clamp(static_cast<int>(std::ceil(e->x1 * img.width())), 0, img.width());
        const int py1 = std::clamp(static_cast<int>(std::ceil(e->y1 * img.height())), 0, img.height());
        if (px1 <= px0 || py1 <= py0) {
            throw Error(ErrorKind::Manifest, "sample '" + sample_id + "' region " + std::to_string(region) +
                                                 ": box maps to zero pixels");
        }
        Image cut(px1 - px0, py1 - py0);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) cut.at(x - px0, y - py0) = img.at(x, y);
        }
        result.crops.push_back({sample_id, region, resize_bilinear(cut, size.width, size.height)});
    }
    return result;
}

}  // namespace baccae::imgproc
