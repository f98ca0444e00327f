#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "baccae/ccae.hpp"
#include "baccae/cluster.hpp"
#include "baccae/data.hpp"
#include "baccae/embed.hpp"
#include "baccae/eval.hpp"
#include "baccae/imgproc.hpp"

namespace baccae {

struct DataPaths {
    std::filesystem::path labels;
    std::filesystem::path images;
    std::filesystem::path manifest;
};

struct CcaeSettings {
    int joint_size = 64;    // regions 1-18
    int carpal_size = 128;  // region 19
    std::vector<ccae::LayerSpec> encoder = ccae::CCAEConfig::defaults(1, 64, 64).encoder;
    int latent_dim = 16;
    double lambda = 0.01;
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    // Per-region patches over the fields above, plus "input_size": [h, w].
    std::map<int, nlohmann::json> overrides;
};

struct SweepSettings {
    std::vector<int> k_values{4, 8, 16, 24, 32, 64};
    std::vector<int> single_regions;  // empty: every region in `regions`
    std::vector<std::vector<int>> region_sets;
};

// Stage seeds derive from the global seed by fixed offsets.
struct SeedOffsets {
    static constexpr std::uint64_t synth = 0;
    static constexpr std::uint64_t ccae = 1000;  // + region id
    static constexpr std::uint64_t kmeans = 2000;
    static constexpr std::uint64_t tsne = 3000;
    static constexpr std::uint64_t subset = 4000;
};

struct RunConfig {
    DataPaths data;
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;
    int threads = 1;
    imgproc::PreprocessParams preprocess;
    CcaeSettings ccae;
    std::vector<int> regions{2, 5, 8, 11, 16, 17, 19};
    cluster::KMeansConfig kmeans;
    eval::IntervalRule interval;
    embed::TsneConfig tsne;
    SweepSettings sweep;
    data::SynthConfig synth;

    // Resolved model config for one region (sizes, overrides, derived seed).
    ccae::CCAEConfig region_config(int region_id) const;
    imgproc::CanonicalSizes canonical_sizes(const std::vector<int>& region_ids) const;
    // Every region any stage needs: regions, sweep singles, sweep sets.
    std::vector<int> all_regions() const;
    cluster::KMeansConfig kmeans_config() const;
    embed::TsneConfig tsne_config() const;
    data::SynthConfig synth_config() const;

    // Every violation, empty when valid.
    std::vector<std::string> validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const ccae::CCAEConfig& cfg);
nlohmann::json to_json(const ccae::LayerSpec& spec);

// Missing keys keep defaults; unknown keys and type errors are collected and
// thrown together as one config error.
RunConfig run_config_from_json(const nlohmann::json& j);
// Relative data and output paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

ccae::LayerSpec layer_spec_from_json(const nlohmann::json& j);

std::vector<int> parse_region_list(const std::string& text);

}  // namespace baccae
