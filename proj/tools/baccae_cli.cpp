#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "baccae/config.hpp"
#include "baccae/error.hpp"
#include "baccae/pipeline.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string regions;
    std::optional<int> k;
    std::optional<int> interval;
    std::string counts;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Run config (JSON, comments allowed)");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seed", f.seed, "Global seed");
    cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--regions", f.regions, "Region set, e.g. 2,5,8,11,16,17,19");
    cmd->add_option("--k", f.k, "Number of clusters");
    cmd->add_option("--interval", f.interval, "Interval width in months");
    cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress lines");
}

baccae::RunConfig resolve(const Flags& f) {
    baccae::RunConfig cfg = f.config.empty() ? baccae::RunConfig{} : baccae::load_run_config(f.config);
    if (!f.out.empty()) cfg.out = f.out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.threads) cfg.threads = *f.threads;
    if (!f.regions.empty()) cfg.regions = baccae::parse_region_list(f.regions);
    if (f.k) cfg.kmeans.k = *f.k;
    if (f.interval) cfg.interval.interval_months = *f.interval;
    const auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += " [" + p + "]";
        throw baccae::Error(baccae::ErrorKind::Config, msg);
    }
    return cfg;
}

std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
}

int exit_code(baccae::ErrorKind kind) {
    switch (kind) {
        case baccae::ErrorKind::Usage: return 2;
        case baccae::ErrorKind::Config: return 3;
        case baccae::ErrorKind::Dependency: return 4;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised bone-age pipeline: crops, convolutional autoencoders, K-means, reports"};
    app.require_subcommand(1);
    Flags flags;

    using Stage = nlohmann::json (*)(const baccae::RunConfig&, const baccae::pipeline::Logger&);
    const std::pair<const char*, std::pair<const char*, Stage>> stages[] = {
        {"synth", {"Write a synthetic dataset (labels.csv, images/, manifest.csv, config.json)", baccae::pipeline::synth}},
        {"preprocess", {"Equalize, blur, threshold and crop every image", baccae::pipeline::preprocess}},
        {"train", {"Train one autoencoder per region", baccae::pipeline::train}},
        {"encode", {"Write latent vectors per region", baccae::pipeline::encode}},
        {"cluster", {"K-means over concatenated latents", baccae::pipeline::cluster}},
        {"evaluate", {"Dominant-label report (or --counts for a bare count matrix)", baccae::pipeline::evaluate}},
        {"embed", {"t-SNE scatter of the latents", baccae::pipeline::embed}},
        {"sweep", {"Single-region, region-set and k sweeps", baccae::pipeline::sweep}},
        {"run", {"preprocess through embed in one go", baccae::pipeline::run_all}},
    };
    std::vector<std::pair<CLI::App*, Stage>> commands;
    for (const auto& [name, info] : stages) {
        auto* cmd = app.add_subcommand(name, info.first);
        add_common(cmd, flags);
        if (std::string(name) == "evaluate") cmd->add_option("--counts", flags.counts, "Cluster x class count CSV");
        commands.emplace_back(cmd, info.second);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve(flags);
        const baccae::pipeline::Logger log = [&](const std::string& msg) {
            if (!flags.quiet) std::cerr << msg << '\n';
        };
        for (const auto& [cmd, stage] : commands) {
            if (!cmd->parsed()) continue;
            if (cmd->get_name() == "evaluate" && !flags.counts.empty()) {
                const auto m = baccae::pipeline::evaluate_counts(cfg, flags.counts);
                std::printf("overall accuracy %.2f%%\n", 100.0 * m["overall_accuracy"].get<double>());
            } else {
                const auto m = stage(cfg, log);
                if (m.contains("overall_accuracy")) {
                    std::printf("overall accuracy %.2f%%\n", 100.0 * m["overall_accuracy"].get<double>());
                } else if (m.contains("evaluate")) {
                    std::printf("overall accuracy %.2f%%\n", 100.0 * m["evaluate"]["overall_accuracy"].get<double>());
                }
            }
        }
    } catch (const baccae::Error& e) {
        std::cerr << "baccae: " << one_line(e.what()) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "baccae: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
