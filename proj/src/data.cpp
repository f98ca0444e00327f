#include "baccae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"
#include "baccae/rng.hpp"

namespace baccae::data {

LoadResult load_dataset(const std::filesystem::path& labels_csv, const std::filesystem::path& image_dir) {
    const auto table = csv::read(labels_csv);
    const auto c_id = table.column("id");
    const auto c_age = table.column("boneage");
    const auto c_male = table.column("male");
    LoadResult result;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        SampleRecord rec;
        rec.sample_id = row[c_id];
        if (rec.sample_id.empty()) {
            throw Error(ErrorKind::Parse, labels_csv.string() + ":" + std::to_string(table.line_numbers[r]) +
                                              ": empty id");
        }
        // RSNA ages are occasionally written as decimals ("120.0").
        const double age = csv::parse_double(row[c_age], table, r);
        if (!(age >= 1.0 && age <= 300.0)) {
            throw Error(ErrorKind::Parse, labels_csv.string() + ":" + std::to_string(table.line_numbers[r]) +
                                              ": boneage " + row[c_age] + " outside [1,300]");
        }
        rec.age_months = static_cast<int>(std::lround(age));
        std::string m = row[c_male];
        std::transform(m.begin(), m.end(), m.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (m == "true" || m == "1") {
            rec.male = true;
        } else if (m == "false" || m == "0") {
            rec.male = false;
        } else if (!m.empty()) {
            throw Error(ErrorKind::Parse, labels_csv.string() + ":" + std::to_string(table.line_numbers[r]) +
                                              ": invalid male flag '" + row[c_male] + "'");
        }
        rec.image_path = image_dir / (rec.sample_id + ".png");
        if (!std::filesystem::exists(rec.image_path)) {
            result.warnings.push_back("missing image " + rec.image_path.string());
            continue;
        }
        result.records.push_back(std::move(rec));
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
    return result;
}

void save_labels(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "id,boneage,male\n";
    for (const auto& r : records) {
        out << r.sample_id << ',' << r.age_months << ',';
        if (r.male) out << (*r.male ? "True" : "False");
        out << '\n';
    }
}

std::map<std::string, int> ages_by_id(const std::vector<SampleRecord>& records) {
    std::map<std::string, int> out;
    for (const auto& r : records) out[r.sample_id] = r.age_months;
    return out;
}

SubsetResult select_subset(const std::vector<SampleRecord>& records, const eval::IntervalRule& rule,
                           const std::vector<int>& per_class_target, std::uint64_t seed) {
    if (static_cast<int>(per_class_target.size()) != rule.num_classes) {
        throw Error(ErrorKind::Usage, "need one target per class (" + std::to_string(rule.num_classes) + ")");
    }
    std::vector<std::vector<const SampleRecord*>> buckets(static_cast<std::size_t>(rule.num_classes));
    for (const auto& r : records) {
        if (r.age_months < rule.origin_months) continue;
        buckets[static_cast<std::size_t>(eval::assign_interval_label(r.age_months, rule))].push_back(&r);
    }
    SubsetResult result;
    Rng rng(seed);
    for (std::size_t c = 0; c < buckets.size(); ++c) {
        auto& bucket = buckets[c];
        std::sort(bucket.begin(), bucket.end(),
                  [](const SampleRecord* a, const SampleRecord* b) { return a->sample_id < b->sample_id; });
        rng.shuffle(bucket.begin(), bucket.end());
        const int target = std::max(0, per_class_target[c]);
        const int take = std::min<int>(target, static_cast<int>(bucket.size()));
        for (int i = 0; i < take; ++i) result.subset.push_back(*bucket[static_cast<std::size_t>(i)]);
        result.selected_per_class.push_back(take);
        result.shortfall_per_class.push_back(target - take);
    }
    std::sort(result.subset.begin(), result.subset.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
    return result;
}

namespace {

struct Anchor {
    double x, y;  // normalized centre
};

// Five finger-joint-like anchors and, for larger class counts, extra ones on a
// lower row. Class c lights anchors 0..c+1.
std::vector<Anchor> anchors(int count) {
    static const std::vector<Anchor> base{{0.20, 0.25}, {0.50, 0.20}, {0.80, 0.25}, {0.30, 0.70}, {0.70, 0.70}};
    std::vector<Anchor> out;
    for (int i = 0; i < count; ++i) {
        if (i < static_cast<int>(base.size())) {
            out.push_back(base[static_cast<std::size_t>(i)]);
        } else {
            const int j = i - static_cast<int>(base.size());
            out.push_back({0.15 + 0.2 * (j % 4), 0.9});
        }
    }
    return out;
}

constexpr int kRegionIds[] = {2, 5, 8, 11, 17, 3, 4, 6, 7, 9, 10, 12, 13, 14, 15, 16, 18, 1};
constexpr double kBoxHalf = 0.15;
constexpr int kBackground = 40;
constexpr int kBlob = 210;

}  // namespace

std::vector<int> synth_region_ids(int num_classes) {
    const int n_anchor = num_classes + 1;
    std::vector<int> ids;
    for (int i = 0; i < n_anchor && i < static_cast<int>(std::size(kRegionIds)); ++i) ids.push_back(kRegionIds[i]);
    ids.push_back(19);
    std::sort(ids.begin(), ids.end());
    return ids;
}

SynthDataset synthesize(const SynthConfig& cfg) {
    if (cfg.num_classes < 1 || cfg.per_class < 1) throw Error(ErrorKind::Config, "synth needs num_classes, per_class >= 1");
    if (cfg.num_classes + 1 > static_cast<int>(std::size(kRegionIds))) {
        throw Error(ErrorKind::Config, "synth supports at most " + std::to_string(std::size(kRegionIds) - 1) + " classes");
    }
    if (!(cfg.noise_level >= 0.0 && cfg.noise_level < 1.0)) throw Error(ErrorKind::Config, "noise_level must be in [0,1)");
    if (cfg.rule.num_classes != cfg.num_classes) throw Error(ErrorKind::Config, "interval rule class count differs");
    const int side = std::min(cfg.image_h, cfg.image_w);
    if (side < 16) throw Error(ErrorKind::Config, "synthetic images must be at least 16x16 for the blob layout");

    const auto spots = anchors(cfg.num_classes + 1);
    // Largest radius must stay inside its crop box.
    const double base_radius = 0.05 * side;
    const double growth = cfg.num_classes > 1 ? (0.13 * side - base_radius) / (cfg.num_classes - 1) : 0.0;

    SynthDataset ds;
    Rng rng(cfg.seed);
    int serial = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        const double radius = base_radius + growth * c;
        const int lo = cfg.rule.origin_months + c * cfg.rule.interval_months;
        const int hi = lo + cfg.rule.interval_months - (c == cfg.num_classes - 1 ? 0 : 1);
        for (int s = 0; s < cfg.per_class; ++s) {
            char id[32];
            std::snprintf(id, sizeof(id), "s%05d", serial++);
            Image img(cfg.image_w, cfg.image_h, kBackground);
            for (int b = 0; b < c + 2; ++b) {
                const double cx = spots[static_cast<std::size_t>(b)].x * cfg.image_w - 0.5;
                const double cy = spots[static_cast<std::size_t>(b)].y * cfg.image_h - 0.5;
                const double rx = radius, ry = 0.8 * radius;
                for (int y = 0; y < cfg.image_h; ++y) {
                    for (int x = 0; x < cfg.image_w; ++x) {
                        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                        if (dx * dx + dy * dy <= 1.0) img.at(x, y) = kBlob;
                    }
                }
            }
            if (cfg.noise_level > 0.0) {
                const double sd = cfg.noise_level * 255.0;
                for (auto& p : img.pixels()) {
                    p = static_cast<std::uint8_t>(std::clamp(std::lround(p + sd * rng.normal()), 0L, 255L));
                }
            }
            const int age = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));

            for (std::size_t a = 0; a < spots.size(); ++a) {
                const auto& sp = spots[a];
                ds.manifest.add({id, kRegionIds[a], std::max(0.0, sp.x - kBoxHalf), std::max(0.0, sp.y - kBoxHalf),
                                 std::min(1.0, sp.x + kBoxHalf), std::min(1.0, sp.y + kBoxHalf)});
            }
            ds.manifest.add({id, 19, 0.0, 0.45, 1.0, 1.0});

            ds.sample_ids.push_back(id);
            ds.images.push_back(std::move(img));
            ds.ages.push_back(age);
            ds.classes.push_back(c);
        }
    }
    return ds;
}

void write_dataset(const std::filesystem::path& root, const SynthDataset& ds) {
    std::filesystem::create_directories(root / "images");
    std::vector<SampleRecord> records;
    for (std::size_t i = 0; i < ds.sample_ids.size(); ++i) {
        save_png(root / "images" / (ds.sample_ids[i] + ".png"), ds.images[i]);
        records.push_back({ds.sample_ids[i], ds.ages[i], std::nullopt, root / "images" / (ds.sample_ids[i] + ".png")});
    }
    save_labels(root / "labels.csv", records);
    ds.manifest.save(root / "manifest.csv");
}

}  // namespace baccae::data
