#include "baccae/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path crop_path(const fs::path& out, int region_id, const std::string& sample_id) {
    return out / std::to_string(region_id) / (sample_id + ".png");
}

fs::path checkpoint_path(const fs::path& out, int region_id) {
    return out / ("ccae_r" + std::to_string(region_id) + ".ckpt");
}

fs::path latents_path(const fs::path& out, int region_id) {
    return out / ("latents_r" + std::to_string(region_id) + ".csv");
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void require(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw Error(ErrorKind::Dependency, "missing " + path.string() + " (run '" + producer + "' first)");
    }
}

void require_data(const fs::path& path, const char* key) {
    if (path.empty()) throw Error(ErrorKind::Config, std::string("data.") + key + " is not set");
    if (!fs::exists(path)) throw Error(ErrorKind::Dependency, "missing input " + path.string());
}

std::map<std::string, int> read_ages(const fs::path& labels_csv) {
    const auto table = csv::read(labels_csv);
    const auto c_id = table.column("id");
    const auto c_age = table.column("boneage");
    std::map<std::string, int> ages;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        ages[table.rows[r][c_id]] = static_cast<int>(std::lround(csv::parse_double(table.rows[r][c_age], table, r)));
    }
    return ages;
}

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct SafeLogger {
    const Logger& log;
    std::mutex mutex;
    void operator()(const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(mutex);
        log(msg);
    }
};

std::vector<ccae::LatentVector> load_region_latents(const RunConfig& cfg, const std::vector<int>& regions) {
    std::vector<ccae::LatentVector> all;
    for (int r : regions) {
        const auto path = latents_path(cfg.out, r);
        require(path, "encode");
        auto part = ccae::load_latents(path);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return all;
}

std::vector<fs::path> list_crops(const RunConfig& cfg, int region) {
    const fs::path dir = cfg.out / std::to_string(region);
    require(dir, "preprocess");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::Dependency, "no crops in " + dir.string());
    return files;
}

}  // namespace

RunLog::RunLog(const RunConfig& cfg) : path_(cfg.out / "run.json") {
    if (fs::exists(path_)) {
        std::ifstream in(path_);
        try {
            doc_ = json::parse(in);
        } catch (const std::exception&) {
            doc_ = json::object();
        }
    }
    if (!doc_.is_object()) doc_ = json::object();
    doc_["config"] = to_json(cfg);
    if (!doc_.contains("stages") || !doc_["stages"].is_array()) doc_["stages"] = json::array();
}

void RunLog::record(const std::string& stage, double seconds, json metrics) {
    doc_["stages"].push_back(
        {{"stage", stage}, {"finished_at", utc_now()}, {"seconds", seconds}, {"metrics", std::move(metrics)}});
    if (doc_["stages"].back()["metrics"].contains("overall_accuracy")) {
        doc_["overall_accuracy"] = doc_["stages"].back()["metrics"]["overall_accuracy"];
    }
    write_json(path_, doc_);
}

json report_to_json(const eval::EvaluationReport& report, const eval::IntervalRule& rule) {
    json clusters = json::array();
    for (const auto& c : report.clusters) {
        clusters.push_back({{"cluster", c.cluster},
                            {"counts", c.counts},
                            {"size", c.size},
                            {"dominated", c.dominated},
                            {"dominated_label", c.dominated >= 0 ? rule.class_name(c.dominated) : ""},
                            {"accuracy", c.accuracy}});
    }
    json classes = json::array();
    const std::size_t width = report.clusters.empty() ? 0 : report.clusters.front().counts.size();
    for (std::size_t j = 0; j < width; ++j) classes.push_back(rule.class_name(static_cast<int>(j)));
    return {{"classes", classes},
            {"clusters", clusters},
            {"n", report.n},
            {"correct", report.correct},
            {"overall_accuracy", report.overall_accuracy}};
}

json synth(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto scfg = cfg.synth_config();
    const auto ds = data::synthesize(scfg);
    data::write_dataset(cfg.out, ds);

    // A ready-to-run config for this tree, paths relative to it.
    RunConfig run = cfg;
    run.data = {"labels.csv", "images", "manifest.csv"};
    run.out = "run";
    run.regions = data::synth_region_ids(scfg.num_classes);
    run.ccae.joint_size = 16;
    run.ccae.carpal_size = 16;
    // Keep only pixels well above the local mean; the default offset turns
    // the flat noisy background into speckle.
    run.preprocess.threshold_c = -40.0;
    json j = to_json(run);
    j["ccae"].erase("resolved");
    write_json(cfg.out / "config.json", j);

    json metrics{{"samples", ds.sample_ids.size()},
                 {"classes", scfg.num_classes},
                 {"image_size", {scfg.image_h, scfg.image_w}},
                 {"noise_level", scfg.noise_level},
                 {"seed", scfg.seed},
                 {"regions", run.regions}};
    RunLog(cfg).record("synth", timer.seconds(), metrics);
    if (log) log("synth: wrote " + std::to_string(ds.sample_ids.size()) + " samples to " + cfg.out.string());
    return metrics;
}

json preprocess(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    require_data(cfg.data.labels, "labels");
    require_data(cfg.data.images, "images");
    require_data(cfg.data.manifest, "manifest");
    const auto loaded = data::load_dataset(cfg.data.labels, cfg.data.images);
    const auto manifest = imgproc::RegionManifest::load(cfg.data.manifest);
    const auto regions = cfg.all_regions();
    const auto sizes = cfg.canonical_sizes(regions);

    std::vector<std::vector<int>> missing(loaded.records.size());
    parallel_for(loaded.records.size(), cfg.threads, [&](std::size_t i) {
        const auto& rec = loaded.records[i];
        const Image img = imgproc::preprocess(load_grayscale(rec.image_path), cfg.preprocess);
        auto result = imgproc::crop_regions(img, rec.sample_id, manifest, sizes);
        for (const auto& crop : result.crops) save_png(crop_path(cfg.out, crop.region_id, crop.sample_id), crop.image);
        missing[i] = std::move(result.missing_regions);
    });

    json absent = json::array();
    std::size_t crops = 0;
    for (std::size_t i = 0; i < missing.size(); ++i) {
        crops += regions.size() - missing[i].size();
        for (int r : missing[i]) absent.push_back({{"sample_id", loaded.records[i].sample_id}, {"region_id", r}});
    }
    json metrics{{"images", loaded.records.size()},
                 {"crops", crops},
                 {"regions", regions},
                 {"missing_crops", absent},
                 {"warnings", loaded.warnings}};
    RunLog(cfg).record("preprocess", timer.seconds(), metrics);
    if (log) {
        log("preprocess: " + std::to_string(loaded.records.size()) + " images, " + std::to_string(crops) + " crops, " +
            std::to_string(absent.size()) + " missing");
    }
    return metrics;
}

json train(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto regions = cfg.all_regions();
    std::vector<json> results(regions.size());
    SafeLogger safe{log, {}};
    parallel_for(regions.size(), cfg.threads, [&](std::size_t idx) {
        const int region = regions[idx];
        const auto files = list_crops(cfg, region);
        std::vector<nn::Tensor> dataset;
        dataset.reserve(files.size());
        for (const auto& f : files) dataset.push_back(ccae::image_to_tensor(load_grayscale(f)));
        auto model = ccae::build(cfg.region_config(region));
        ccae::train(model, dataset, [&](int epoch, double loss) {
            if (epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == model.config().epochs) {
                safe("train r" + std::to_string(region) + " epoch " + std::to_string(epoch + 1) + " loss " +
                     csv::format_double(loss));
            }
        });
        nn::save_checkpoint(checkpoint_path(cfg.out, region), model.params());
        results[idx] = {{"region_id", region},
                        {"samples", dataset.size()},
                        {"history", model.history()},
                        {"config", to_json(model.config())}};
    });
    json metrics{{"regions", results}};
    RunLog(cfg).record("train", timer.seconds(), metrics);
    return metrics;
}

json encode(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto regions = cfg.all_regions();
    std::vector<json> results(regions.size());
    parallel_for(regions.size(), cfg.threads, [&](std::size_t idx) {
        const int region = regions[idx];
        const auto ckpt = checkpoint_path(cfg.out, region);
        require(ckpt, "train");
        auto model = ccae::build(cfg.region_config(region));
        model.load_params(nn::load_checkpoint(ckpt));
        std::vector<ccae::LatentVector> latents;
        for (const auto& f : list_crops(cfg, region)) {
            latents.push_back(ccae::encode(model, f.stem().string(), ccae::image_to_tensor(load_grayscale(f))));
        }
        ccae::save_latents(latents_path(cfg.out, region), latents);
        results[idx] = {{"region_id", region}, {"samples", latents.size()}, {"latent_dim", model.config().latent_dim}};
    });
    json metrics{{"regions", results}};
    RunLog(cfg).record("encode", timer.seconds(), metrics);
    if (log) log("encode: wrote latents for " + std::to_string(regions.size()) + " regions");
    return metrics;
}

json cluster(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto latents = load_region_latents(cfg, cfg.regions);
    const auto fm = cluster::concat_latents(latents, cfg.regions);
    const auto kcfg = cfg.kmeans_config();
    const auto a = cluster::kmeans(fm, kcfg);
    cluster::save_assignment(cfg.out / "assignment.csv", fm, a);
    json metrics{{"samples", fm.rows},
                 {"dims", fm.cols},
                 {"region_set", fm.region_set},
                 {"k", kcfg.k},
                 {"inertia", a.inertia},
                 {"iterations", a.iterations_run},
                 {"restarts", a.restarts},
                 {"best_restart", a.best_restart},
                 {"seed", kcfg.seed},
                 {"standardize", kcfg.standardize}};
    RunLog(cfg).record("cluster", timer.seconds(), metrics);
    if (log) log("cluster: k=" + std::to_string(kcfg.k) + " inertia " + csv::format_double(a.inertia));
    return metrics;
}

json evaluate(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto assignment_csv = cfg.out / "assignment.csv";
    require(assignment_csv, "cluster");
    require_data(cfg.data.labels, "labels");
    const auto assignment = cluster::load_assignment(assignment_csv);
    const auto ages = read_ages(cfg.data.labels);
    const auto labels = eval::align_labels(assignment.sample_ids, ages, cfg.interval);
    int k = cfg.kmeans.k;
    for (int c : assignment.clusters) k = std::max(k, c + 1);
    const auto report = eval::dominant_label_report(assignment.clusters, labels.classes, k, cfg.interval.num_classes);
    const auto mae = eval::mae_report(assignment.clusters, labels.ages, k, cfg.interval);

    json doc = report_to_json(report, cfg.interval);
    doc["mae_months"] = mae.mae_months;
    doc["mae_predictor"] = mae.predictor;
    // Output location and thread count do not affect results; data paths are
    // kept relative to the output directory so relocated runs compare equal.
    json config = to_json(cfg);
    config.erase("out");
    config.erase("threads");
    for (const char* key : {"labels", "images", "manifest"}) {
        if (!config["data"].contains(key)) continue;
        const fs::path p = config["data"][key].get<std::string>();
        if (p.empty()) continue;
        config["data"][key] = fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(cfg.out)).generic_string();
    }
    doc["config"] = config;
    write_json(cfg.out / "report.json", doc);
    eval::save_report_csv(cfg.out / "report.csv", report, cfg.interval);

    json metrics{{"overall_accuracy", report.overall_accuracy}, {"mae_months", mae.mae_months}, {"n", report.n}};
    RunLog(cfg).record("evaluate", timer.seconds(), metrics);
    if (log) log("evaluate: overall accuracy " + csv::format_double(report.overall_accuracy));
    return metrics;
}

json evaluate_counts(const RunConfig& cfg, const fs::path& counts_csv, const Logger& log) {
    Timer timer;
    require(counts_csv, "--counts");
    const auto counts = eval::load_count_matrix(counts_csv);
    const auto report = eval::report_from_counts(counts);
    eval::IntervalRule rule = cfg.interval;
    rule.num_classes = static_cast<int>(counts.front().size());
    json doc = report_to_json(report, rule);
    doc["source"] = counts_csv.string();
    write_json(cfg.out / "report.json", doc);
    eval::save_report_csv(cfg.out / "report.csv", report, rule);
    json metrics{{"overall_accuracy", report.overall_accuracy}, {"n", report.n}, {"clusters", counts.size()}};
    RunLog(cfg).record("evaluate", timer.seconds(), metrics);
    if (log) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * report.overall_accuracy);
        log(std::string("overall accuracy ") + buf);
    }
    return metrics;
}

json embed(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    const auto latents = load_region_latents(cfg, cfg.regions);
    const auto fm = cluster::concat_latents(latents, cfg.regions);
    std::vector<int> classes;
    if (!cfg.data.labels.empty() && fs::exists(cfg.data.labels)) {
        classes = eval::align_labels(fm.sample_ids, read_ages(cfg.data.labels), cfg.interval).classes;
    }
    const auto tcfg = cfg.tsne_config();
    const auto emb = embed::tsne(fm, tcfg);
    std::vector<std::string> names;
    for (int c = 0; c < cfg.interval.num_classes; ++c) names.push_back(cfg.interval.class_name(c));
    embed::emit_scatter(emb, fm.sample_ids, classes, names, cfg.out / "tsne.csv", cfg.out / "tsne.svg");
    json metrics{{"samples", fm.rows}, {"kl_initial", emb.kl_initial}, {"kl_final", emb.kl_final}, {"seed", tcfg.seed}};
    RunLog(cfg).record("embed", timer.seconds(), metrics);
    if (log) log("embed: KL " + csv::format_double(emb.kl_initial) + " -> " + csv::format_double(emb.kl_final));
    return metrics;
}

json sweep(const RunConfig& cfg, const Logger& log) {
    Timer timer;
    require_data(cfg.data.labels, "labels");
    const auto ages = read_ages(cfg.data.labels);
    const auto kcfg = cfg.kmeans_config();
    const std::vector<int> singles = cfg.sweep.single_regions.empty() ? cfg.regions : cfg.sweep.single_regions;
    std::vector<std::vector<int>> sets = cfg.sweep.region_sets;
    if (sets.empty()) sets.push_back(cfg.regions);

    const auto latents = load_region_latents(cfg, cfg.all_regions());
    const auto single = eval::region_sweep(latents, singles, kcfg, ages, cfg.interval);
    const auto combos = eval::combination_eval(latents, sets, kcfg, ages, cfg.interval);

    const auto fm = cluster::concat_latents(latents, cfg.regions);
    std::vector<int> ks;
    json skipped = json::array();
    for (int k : cfg.sweep.k_values) {
        if (static_cast<std::size_t>(k) <= fm.rows) {
            ks.push_back(k);
        } else {
            skipped.push_back(k);
        }
    }
    const auto krows = eval::k_sweep(fm, ks, kcfg, ages, cfg.interval);

    json jsingle = json::array(), jsets = json::array(), jk = json::array();
    std::ofstream regions_csv(cfg.out / "sweep_regions.csv");
    regions_csv << "region_id,accuracy\n";
    for (const auto& r : single) {
        jsingle.push_back({{"region_id", r.region_set.front()}, {"accuracy", r.accuracy}});
        regions_csv << r.region_set.front() << ',' << csv::format_double(r.accuracy) << '\n';
    }
    std::ofstream sets_csv(cfg.out / "sweep_sets.csv");
    sets_csv << "region_set,accuracy\n";
    for (const auto& r : combos) {
        jsets.push_back({{"region_set", r.region_set}, {"accuracy", r.accuracy}});
        std::string name;
        for (int id : r.region_set) name += (name.empty() ? "" : " ") + std::to_string(id);
        sets_csv << name << ',' << csv::format_double(r.accuracy) << '\n';
    }
    std::ofstream k_csv(cfg.out / "sweep_k.csv");
    k_csv << "k,accuracy,mae_months\n";
    for (const auto& r : krows) {
        jk.push_back({{"k", r.k}, {"accuracy", r.accuracy}, {"mae_months", r.mae_months}});
        k_csv << r.k << ',' << csv::format_double(r.accuracy) << ',' << csv::format_double(r.mae_months) << '\n';
    }
    json doc{{"single_regions", jsingle}, {"region_sets", jsets}, {"k_sweep", jk}, {"k_skipped", skipped},
             {"seed", kcfg.seed}, {"interval", {{"origin_months", cfg.interval.origin_months},
                                               {"interval_months", cfg.interval.interval_months},
                                               {"num_classes", cfg.interval.num_classes}}}};
    write_json(cfg.out / "sweep.json", doc);
    RunLog(cfg).record("sweep", timer.seconds(), doc);
    if (log) log("sweep: " + std::to_string(single.size()) + " regions, " + std::to_string(combos.size()) +
                 " sets, " + std::to_string(krows.size()) + " k values");
    return doc;
}

json run_all(const RunConfig& cfg, const Logger& log) {
    json out;
    out["preprocess"] = preprocess(cfg, log);
    out["train"] = train(cfg, log);
    out["encode"] = encode(cfg, log);
    out["cluster"] = cluster(cfg, log);
    out["evaluate"] = evaluate(cfg, log);
    out["embed"] = embed(cfg, log);
    return out;
}

}  // namespace baccae::pipeline
