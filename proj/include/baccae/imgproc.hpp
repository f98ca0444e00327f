#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "baccae/image.hpp"

namespace baccae::imgproc {

// Maps intensities through the normalized cumulative histogram so the output
// distribution is as flat as the input allows. Constant images pass through.
Image histogram_equalize(const Image& img);

// Normalized 1-D Gaussian taps, w(i) ∝ exp(-i²/2σ²) for i in [-r, r].
std::vector<double> gaussian_kernel(int kernel_size, double sigma);

// Separable Gaussian blur with edge replication. kernel_size must be odd.
Image gaussian_blur(const Image& img, double sigma, int kernel_size);

// Pixel becomes 255 iff it is brighter than the mean of its block_size² neighbourhood
// (edge-replicated) minus offset_c; otherwise 0.
Image adaptive_threshold(const Image& img, int block_size, double offset_c);

struct PreprocessParams {
    bool equalize = true;
    int blur_kernel = 5;
    double blur_sigma = 1.2;
    int threshold_block = 31;
    double threshold_c = 10.0;
};

// equalize -> blur -> threshold.
Image preprocess(const Image& img, const PreprocessParams& params);

// Half-pixel-centre bilinear resampling with clamped borders.
Image resize_bilinear(const Image& img, int width, int height);

inline constexpr int kMinRegionId = 1;
inline constexpr int kMaxRegionId = 19;

struct ManifestEntry {
    std::string sample_id;
    int region_id = 0;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Normalized crop boxes keyed by (sample, region).
class RegionManifest {
public:
    RegionManifest() = default;
    explicit RegionManifest(std::vector<ManifestEntry> entries);

    void add(ManifestEntry entry);
    const ManifestEntry* find(const std::string& sample_id, int region_id) const;
    const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
    std::vector<int> region_ids() const;

    // CSV with header sample_id,region_id,x0,y0,x1,y1.
    static RegionManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<ManifestEntry> entries_;
    std::map<std::pair<std::string, int>, std::size_t> index_;
};

struct Size {
    int width = 0;
    int height = 0;
    bool operator==(const Size&) const = default;
};

using CanonicalSizes = std::map<int, Size>;

struct RegionCrop {
    std::string sample_id;
    int region_id = 0;
    Image image;
};

struct CropResult {
    std::vector<RegionCrop> crops;
    std::vector<int> missing_regions;
};

// Crops every region listed in canonical_sizes. A region without a manifest
// entry for this sample is reported in missing_regions; zero-area boxes throw.
CropResult crop_regions(const Image& img, const std::string& sample_id,
                        const RegionManifest& manifest, const CanonicalSizes& canonical_sizes);

}  // namespace baccae::imgproc
