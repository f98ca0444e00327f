#include "baccae/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <type_traits>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae {

using nlohmann::json;

ccae::CCAEConfig RunConfig::region_config(int region_id) const {
    const int side = region_id == imgproc::kMaxRegionId ? ccae.carpal_size : ccae.joint_size;
    ccae::CCAEConfig c;
    c.region_id = region_id;
    c.input_h = side;
    c.input_w = side;
    c.encoder = ccae.encoder;
    c.latent_dim = ccae.latent_dim;
    c.lambda = ccae.lambda;
    c.epochs = ccae.epochs;
    c.batch_size = ccae.batch_size;
    c.learning_rate = ccae.learning_rate;
    c.seed = seed + SeedOffsets::ccae + static_cast<std::uint64_t>(region_id);

    const auto it = ccae.overrides.find(region_id);
    if (it != ccae.overrides.end()) {
        const json& o = it->second;
        if (o.contains("input_size")) {
            const auto& s = o.at("input_size");
            if (s.is_array()) {
                c.input_h = s.at(0).get<int>();
                c.input_w = s.at(1).get<int>();
            } else {
                c.input_h = c.input_w = s.get<int>();
            }
        }
        if (o.contains("encoder")) {
            c.encoder.clear();
            for (const auto& l : o.at("encoder")) c.encoder.push_back(layer_spec_from_json(l));
        }
        if (o.contains("latent_dim")) c.latent_dim = o.at("latent_dim").get<int>();
        if (o.contains("lambda")) c.lambda = o.at("lambda").get<double>();
        if (o.contains("epochs")) c.epochs = o.at("epochs").get<int>();
        if (o.contains("batch_size")) c.batch_size = o.at("batch_size").get<int>();
        if (o.contains("learning_rate")) c.learning_rate = o.at("learning_rate").get<double>();
    }
    return c;
}

imgproc::CanonicalSizes RunConfig::canonical_sizes(const std::vector<int>& region_ids) const {
    imgproc::CanonicalSizes sizes;
    for (int r : region_ids) {
        const auto c = region_config(r);
        sizes[r] = {c.input_w, c.input_h};
    }
    return sizes;
}

std::vector<int> RunConfig::all_regions() const {
    std::set<int> ids(regions.begin(), regions.end());
    ids.insert(sweep.single_regions.begin(), sweep.single_regions.end());
    for (const auto& s : sweep.region_sets) ids.insert(s.begin(), s.end());
    return {ids.begin(), ids.end()};
}

cluster::KMeansConfig RunConfig::kmeans_config() const {
    auto k = kmeans;
    k.seed = seed + SeedOffsets::kmeans;
    return k;
}

embed::TsneConfig RunConfig::tsne_config() const {
    auto t = tsne;
    t.seed = seed + SeedOffsets::tsne;
    return t;
}

data::SynthConfig RunConfig::synth_config() const {
    auto s = synth;
    s.seed = seed + SeedOffsets::synth;
    s.rule = interval;
    s.num_classes = interval.num_classes;
    return s;
}

std::vector<std::string> RunConfig::validate() const {
    std::vector<std::string> v;
    auto check_region = [&](int r, const std::string& where) {
        if (r < imgproc::kMinRegionId || r > imgproc::kMaxRegionId) {
            v.push_back(where + ": region " + std::to_string(r) + " outside [1,19]");
        }
    };
    if (regions.empty()) v.push_back("regions: must not be empty");
    for (int r : regions) check_region(r, "regions");
    for (int r : sweep.single_regions) check_region(r, "sweep.single_regions");
    for (const auto& s : sweep.region_sets) {
        if (s.empty()) v.push_back("sweep.region_sets: empty set");
        for (int r : s) check_region(r, "sweep.region_sets");
    }
    for (int k : sweep.k_values) {
        if (k <= 0) v.push_back("sweep.k_values: " + std::to_string(k) + " is not positive");
    }
    for (const auto& [r, _] : ccae.overrides) check_region(r, "ccae.overrides");
    if (threads < 1) v.push_back("threads: must be >= 1");
    if (preprocess.blur_kernel <= 0 || preprocess.blur_kernel % 2 == 0) v.push_back("preprocess.blur_kernel: must be odd and positive");
    if (!(preprocess.blur_sigma > 0)) v.push_back("preprocess.blur_sigma: must be positive");
    if (preprocess.threshold_block < 3 || preprocess.threshold_block % 2 == 0) {
        v.push_back("preprocess.threshold_block: must be odd and >= 3");
    }
    if (ccae.joint_size <= 0 || ccae.carpal_size <= 0) v.push_back("ccae: sizes must be positive");
    for (int r : all_regions()) {
        if (r < imgproc::kMinRegionId || r > imgproc::kMaxRegionId) continue;
        try {
            const auto c = region_config(r);
            if (c.input_h <= 0 || c.input_w <= 0) v.push_back("ccae region " + std::to_string(r) + ": input size must be positive");
            if (c.latent_dim <= 0) v.push_back("ccae region " + std::to_string(r) + ": latent_dim must be positive");
            if (c.lambda < 0) v.push_back("ccae region " + std::to_string(r) + ": lambda must be non-negative");
            if (c.epochs <= 0) v.push_back("ccae region " + std::to_string(r) + ": epochs must be positive");
            if (c.batch_size <= 0) v.push_back("ccae region " + std::to_string(r) + ": batch_size must be positive");
            if (c.learning_rate < 0) v.push_back("ccae region " + std::to_string(r) + ": learning_rate must be non-negative");
        } catch (const std::exception& e) {
            v.push_back("ccae.overrides." + std::to_string(r) + ": " + e.what());
        }
    }
    if (kmeans.k <= 0) v.push_back("kmeans.k: must be positive");
    if (kmeans.max_iters <= 0) v.push_back("kmeans.max_iters: must be positive");
    if (kmeans.tol < 0) v.push_back("kmeans.tol: must be non-negative");
    if (kmeans.restarts <= 0) v.push_back("kmeans.restarts: must be positive");
    if (interval.interval_months <= 0) v.push_back("interval.interval_months: must be positive");
    if (interval.num_classes <= 0) v.push_back("interval.num_classes: must be positive");
    if (!(tsne.perplexity > 0)) v.push_back("tsne.perplexity: must be positive");
    if (tsne.iterations <= 0) v.push_back("tsne.iterations: must be positive");
    if (!(tsne.learning_rate > 0)) v.push_back("tsne.learning_rate: must be positive");
    if (tsne.early_exaggeration < 1) v.push_back("tsne.early_exaggeration: must be >= 1");
    if (synth.per_class < 1) v.push_back("synth.per_class: must be >= 1");
    if (!(synth.noise_level >= 0 && synth.noise_level < 1)) v.push_back("synth.noise_level: must be in [0,1)");
    if (std::min(synth.image_h, synth.image_w) < 16) v.push_back("synth.image_size: must be at least 16");
    return v;
}

json to_json(const ccae::LayerSpec& spec) {
    json j{{"kind", ccae::to_string(spec.kind)}};
    if (spec.kind == ccae::LayerKind::Conv || spec.kind == ccae::LayerKind::ConvTranspose) {
        j["kernel"] = json::array({spec.kernel_h, spec.kernel_w});
        j["stride"] = spec.stride;
        j["padding"] = spec.padding;
        j["out"] = spec.out;
    } else if (spec.kind == ccae::LayerKind::Dense) {
        j["out"] = spec.out;
    }
    return j;
}

json to_json(const ccae::CCAEConfig& c) {
    json enc = json::array();
    for (const auto& l : c.encoder) enc.push_back(to_json(l));
    return {{"region_id", c.region_id},   {"input_size", {c.input_h, c.input_w}},
            {"encoder", enc},             {"latent_dim", c.latent_dim},
            {"lambda", c.lambda},         {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"seed", c.seed}};
}

ccae::LayerSpec layer_spec_from_json(const json& j) {
    ccae::LayerSpec s;
    s.kind = ccae::layer_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("kernel")) {
        const auto& k = j.at("kernel");
        if (k.is_array()) {
            s.kernel_h = k.at(0).get<int>();
            s.kernel_w = k.at(1).get<int>();
        } else {
            s.kernel_h = s.kernel_w = k.get<int>();
        }
    }
    s.stride = j.value("stride", 1);
    s.padding = j.value("padding", 0);
    s.out = j.value("out", 0);
    return s;
}

json to_json(const RunConfig& c) {
    json enc = json::array();
    for (const auto& l : c.ccae.encoder) enc.push_back(to_json(l));
    json overrides = json::object();
    for (const auto& [r, o] : c.ccae.overrides) overrides[std::to_string(r)] = o;
    json resolved = json::object();
    for (int r : c.all_regions()) resolved[std::to_string(r)] = to_json(c.region_config(r));
    const auto k = c.kmeans_config();
    const auto t = c.tsne_config();
    return {
        {"data", {{"labels", c.data.labels.string()}, {"images", c.data.images.string()}, {"manifest", c.data.manifest.string()}}},
        {"out", c.out.string()},
        {"seed", c.seed},
        {"threads", c.threads},
        {"preprocess",
         {{"equalize", c.preprocess.equalize},
          {"blur_kernel", c.preprocess.blur_kernel},
          {"blur_sigma", c.preprocess.blur_sigma},
          {"threshold_block", c.preprocess.threshold_block},
          {"threshold_c", c.preprocess.threshold_c}}},
        {"ccae",
         {{"joint_size", c.ccae.joint_size},
          {"carpal_size", c.ccae.carpal_size},
          {"encoder", enc},
          {"latent_dim", c.ccae.latent_dim},
          {"lambda", c.ccae.lambda},
          {"epochs", c.ccae.epochs},
          {"batch_size", c.ccae.batch_size},
          {"learning_rate", c.ccae.learning_rate},
          {"overrides", overrides},
          {"resolved", resolved}}},
        {"regions", c.regions},
        {"kmeans",
         {{"k", k.k}, {"max_iters", k.max_iters}, {"tol", k.tol}, {"restarts", k.restarts},
          {"standardize", k.standardize}, {"seed", k.seed}}},
        {"interval",
         {{"origin_months", c.interval.origin_months},
          {"interval_months", c.interval.interval_months},
          {"num_classes", c.interval.num_classes}}},
        {"tsne",
         {{"perplexity", t.perplexity},
          {"iterations", t.iterations},
          {"learning_rate", t.learning_rate},
          {"early_exaggeration", t.early_exaggeration},
          {"exaggeration_iters", t.exaggeration_iters},
          {"initial_momentum", t.initial_momentum},
          {"final_momentum", t.final_momentum},
          {"momentum_switch_iter", t.momentum_switch_iter},
          {"seed", t.seed}}},
        {"sweep",
         {{"k_values", c.sweep.k_values}, {"single_regions", c.sweep.single_regions}, {"region_sets", c.sweep.region_sets}}},
        {"synth",
         {{"per_class", c.synth.per_class},
          {"image_size", {c.synth.image_h, c.synth.image_w}},
          {"noise_level", c.synth.noise_level}}},
    };
}

namespace {

// Walks one JSON object, reading known keys and recording problems.
class Reader {
public:
    Reader(const json& j, std::string prefix, std::vector<std::string>& errors)
        : j_(j), prefix_(std::move(prefix)), errors_(errors) {
        if (!j_.is_object()) errors_.push_back(label("") + "expected an object");
    }

    ~Reader() {
        if (!j_.is_object()) return;
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.contains(key)) errors_.push_back(label(key) + "unknown key");
        }
    }

    template <class T>
    void get(const std::string& key, T& dst) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) return mistyped(key, "a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) return mistyped(key, "a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) return mistyped(key, "an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) return mistyped(key, "a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return mistyped(key, "a string");
        }
        try {
            dst = v.get<T>();
        } catch (const std::exception&) {
            mistyped(key, "a different type");
        }
    }

    void mistyped(const std::string& key, const char* expected) {
        errors_.push_back(label(key) + "expected " + expected + ", got " + j_.at(key).dump());
    }

    void path(const std::string& key, std::filesystem::path& dst) {
        std::string s = dst.string();
        get(key, s);
        dst = s;
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    std::string label(const std::string& key) const {
        const std::string full = prefix_.empty() ? key : (key.empty() ? prefix_ : prefix_ + "." + key);
        return full.empty() ? "" : full + ": ";
    }

    std::string sub(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
    std::vector<std::string>& errors() { return errors_; }

private:
    const json& j_;
    std::string prefix_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    std::vector<std::string> errors;
    {
        Reader root(j, "", errors);
        if (const json* d = root.child("data")) {
            Reader r(*d, "data", errors);
            r.path("labels", c.data.labels);
            r.path("images", c.data.images);
            r.path("manifest", c.data.manifest);
        }
        root.path("out", c.out);
        root.get("seed", c.seed);
        root.get("threads", c.threads);
        if (const json* p = root.child("preprocess")) {
            Reader r(*p, "preprocess", errors);
            r.get("equalize", c.preprocess.equalize);
            r.get("blur_kernel", c.preprocess.blur_kernel);
            r.get("blur_sigma", c.preprocess.blur_sigma);
            r.get("threshold_block", c.preprocess.threshold_block);
            r.get("threshold_c", c.preprocess.threshold_c);
        }
        if (const json* m = root.child("ccae")) {
            Reader r(*m, "ccae", errors);
            r.get("joint_size", c.ccae.joint_size);
            r.get("carpal_size", c.ccae.carpal_size);
            if (const json* enc = r.child("encoder")) {
                try {
                    c.ccae.encoder.clear();
                    for (const auto& l : *enc) c.ccae.encoder.push_back(layer_spec_from_json(l));
                } catch (const std::exception& e) {
                    errors.push_back("ccae.encoder: " + std::string(e.what()));
                }
            }
            r.get("latent_dim", c.ccae.latent_dim);
            r.get("lambda", c.ccae.lambda);
            r.get("epochs", c.ccae.epochs);
            r.get("batch_size", c.ccae.batch_size);
            r.get("learning_rate", c.ccae.learning_rate);
            r.child("resolved");  // informational; written by to_json
            if (const json* o = r.child("overrides")) {
                if (!o->is_object()) {
                    errors.push_back("ccae.overrides: expected an object keyed by region id");
                } else {
                    for (const auto& [key, patch] : o->items()) {
                        try {
                            c.ccae.overrides[std::stoi(key)] = patch;
                        } catch (const std::exception&) {
                            errors.push_back("ccae.overrides: key '" + key + "' is not a region id");
                        }
                    }
                }
            }
        }
        root.get("regions", c.regions);
        if (const json* k = root.child("kmeans")) {
            Reader r(*k, "kmeans", errors);
            r.get("k", c.kmeans.k);
            r.get("max_iters", c.kmeans.max_iters);
            r.get("tol", c.kmeans.tol);
            r.get("restarts", c.kmeans.restarts);
            r.get("standardize", c.kmeans.standardize);
            r.child("seed");  // derived from the global seed
        }
        if (const json* i = root.child("interval")) {
            Reader r(*i, "interval", errors);
            r.get("origin_months", c.interval.origin_months);
            r.get("interval_months", c.interval.interval_months);
            r.get("num_classes", c.interval.num_classes);
        }
        if (const json* t = root.child("tsne")) {
            Reader r(*t, "tsne", errors);
            r.get("perplexity", c.tsne.perplexity);
            r.get("iterations", c.tsne.iterations);
            r.get("learning_rate", c.tsne.learning_rate);
            r.get("early_exaggeration", c.tsne.early_exaggeration);
            r.get("exaggeration_iters", c.tsne.exaggeration_iters);
            r.get("initial_momentum", c.tsne.initial_momentum);
            r.get("final_momentum", c.tsne.final_momentum);
            r.get("momentum_switch_iter", c.tsne.momentum_switch_iter);
            r.child("seed");
        }
        if (const json* s = root.child("sweep")) {
            Reader r(*s, "sweep", errors);
            r.get("k_values", c.sweep.k_values);
            r.get("single_regions", c.sweep.single_regions);
            r.get("region_sets", c.sweep.region_sets);
        }
        if (const json* s = root.child("synth")) {
            Reader r(*s, "synth", errors);
            r.get("per_class", c.synth.per_class);
            r.get("noise_level", c.synth.noise_level);
            if (const json* size = r.child("image_size")) {
                try {
                    if (size->is_array()) {
                        c.synth.image_h = size->at(0).get<int>();
                        c.synth.image_w = size->at(1).get<int>();
                    } else {
                        c.synth.image_h = c.synth.image_w = size->get<int>();
                    }
                } catch (const std::exception& e) {
                    errors.push_back("synth.image_size: " + std::string(e.what()));
                }
            }
        }
    }
    const auto more = c.validate();
    errors.insert(errors.end(), more.begin(), more.end());
    if (!errors.empty()) {
        std::string msg = std::to_string(errors.size()) + " problem(s):";
        for (const auto& e : errors) msg += " [" + e + "]";
        throw Error(ErrorKind::Config, msg);
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
    auto cfg = run_config_from_json(j);
    // Relative paths in a config file are relative to the file itself.
    const auto base = path.parent_path();
    auto anchor = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
    };
    anchor(cfg.data.labels);
    anchor(cfg.data.images);
    anchor(cfg.data.manifest);
    if (j.contains("out")) anchor(cfg.out);
    return cfg;
}

std::vector<int> parse_region_list(const std::string& text) {
    std::vector<int> out;
    for (const auto& field : csv::split(text)) {
        if (field.empty()) continue;
        int v = 0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || ptr != field.data() + field.size()) {
            throw Error(ErrorKind::Config, "invalid region id '" + field + "'");
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace baccae
