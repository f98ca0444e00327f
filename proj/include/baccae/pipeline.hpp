#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "baccae/config.hpp"

namespace baccae::pipeline {

// Fixed artifact names under the output directory.
std::filesystem::path crop_path(const std::filesystem::path& out, int region_id, const std::string& sample_id);
std::filesystem::path checkpoint_path(const std::filesystem::path& out, int region_id);
std::filesystem::path latents_path(const std::filesystem::path& out, int region_id);

// Appends stage records to <out>/run.json, which also carries the resolved
// config. Timestamps live only here so every other artifact is reproducible.
class RunLog {
public:
    explicit RunLog(const RunConfig& cfg);
    void record(const std::string& stage, double seconds, nlohmann::json metrics);
    const nlohmann::json& document() const { return doc_; }

private:
    std::filesystem::path path_;
    nlohmann::json doc_;
};

using Logger = std::function<void(const std::string&)>;

// Writes labels.csv, images/, manifest.csv and config.json (a run config
// pointing at this tree) under cfg.out.
nlohmann::json synth(const RunConfig& cfg, const Logger& log = {});

// equalize/blur/threshold each image, then crop to <out>/<region>/<sample>.png.
nlohmann::json preprocess(const RunConfig& cfg, const Logger& log = {});

// One CCAE per region from its crops; <out>/ccae_r<id>.ckpt.
nlohmann::json train(const RunConfig& cfg, const Logger& log = {});

// <out>/latents_r<id>.csv from checkpoints and crops.
nlohmann::json encode(const RunConfig& cfg, const Logger& log = {});

// K-means over concatenated latents of cfg.regions; <out>/assignment.csv.
nlohmann::json cluster(const RunConfig& cfg, const Logger& log = {});

// report.json and report.csv from assignment.csv and the labels file.
nlohmann::json evaluate(const RunConfig& cfg, const Logger& log = {});

// Table check without any model: counts matrix -> report.json/report.csv.
nlohmann::json evaluate_counts(const RunConfig& cfg, const std::filesystem::path& counts_csv, const Logger& log = {});

// tsne.csv and tsne.svg coloured by true interval class.
nlohmann::json embed(const RunConfig& cfg, const Logger& log = {});

// Single-region sweep, region-set comparison and k sweep; sweep.json + CSVs.
nlohmann::json sweep(const RunConfig& cfg, const Logger& log = {});

// preprocess -> train -> encode -> cluster -> evaluate -> embed.
nlohmann::json run_all(const RunConfig& cfg, const Logger& log = {});

nlohmann::json report_to_json(const eval::EvaluationReport& report, const eval::IntervalRule& rule);

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
// failure after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace baccae::pipeline
