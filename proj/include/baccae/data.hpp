#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "baccae/eval.hpp"
#include "baccae/image.hpp"
#include "baccae/imgproc.hpp"

namespace baccae::data {

struct SampleRecord {
    std::string sample_id;
    int age_months = 0;
    std::optional<bool> male;
    std::filesystem::path image_path;
};

struct LoadResult {
    std::vector<SampleRecord> records;  // sorted by sample_id
    std::vector<std::string> warnings;
};

// Labels CSV with header id,boneage,male; image for id X is <image_dir>/X.png.
LoadResult load_dataset(const std::filesystem::path& labels_csv, const std::filesystem::path& image_dir);

void save_labels(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

std::map<std::string, int> ages_by_id(const std::vector<SampleRecord>& records);

struct SubsetResult {
    std::vector<SampleRecord> subset;  // sorted by sample_id
    std::vector<int> selected_per_class;
    std::vector<int> shortfall_per_class;
};

// Seeded sampling without replacement toward per-class targets; a class with
// fewer records than its target contributes all of them.
SubsetResult select_subset(const std::vector<SampleRecord>& records, const eval::IntervalRule& rule,
                           const std::vector<int>& per_class_target, std::uint64_t seed);

struct SynthConfig {
    int num_classes = 4;
    int per_class = 50;
    int image_h = 28;
    int image_w = 28;
    double noise_level = 0.05;
    std::uint64_t seed = 0;
    eval::IntervalRule rule;
};

struct SynthDataset {
    std::vector<std::string> sample_ids;
    std::vector<Image> images;
    std::vector<int> ages;
    std::vector<int> classes;
    imgproc::RegionManifest manifest;
};

// Region ids the generator's manifest uses, one per blob anchor plus a
// lower-block region.
std::vector<int> synth_region_ids(int num_classes);

// Class c images carry c+2 bright elliptical blobs at fixed anchors with radius
// growing with c, plus Gaussian pixel noise of std noise_level*255.
SynthDataset synthesize(const SynthConfig& cfg);

// labels.csv, images/<id>.png, manifest.csv under root.
void write_dataset(const std::filesystem::path& root, const SynthDataset& ds);

}  // namespace baccae::data
