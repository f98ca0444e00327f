#include <doctest.h>

#include <fstream>
#include <numeric>

#include "baccae/data.hpp"
#include "baccae/error.hpp"
#include "support.hpp"

using namespace baccae;
using namespace baccae::data;
using baccae::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

void make_images(const TempDir& dir, std::initializer_list<const char*> ids) {
    std::filesystem::create_directories(dir / "images");
    for (const char* id : ids) save_png(dir.path() / "images" / (std::string(id) + ".png"), Image(4, 4, 9));
}

std::vector<SampleRecord> abundant(int per_class, Rng& rng) {
    std::vector<SampleRecord> out;
    for (int i = 0; i < per_class * 4; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "r%05d", i);
        out.push_back({id, 24 + 48 * (i % 4) + static_cast<int>(rng.below(48)), std::nullopt, {}});
    }
    return out;
}

}  // namespace

TEST_SUITE("load dataset") {
    TEST_CASE("all images present") {
        TempDir dir("load");
        write_text(dir / "labels.csv", "id,boneage,male\nc,30,True\na,100.4,False\nb,200,\n");
        make_images(dir, {"a", "b", "c"});
        const auto res = load_dataset(dir / "labels.csv", dir / "images");
        REQUIRE(res.records.size() == 3);
        CHECK(res.warnings.empty());
        CHECK(res.records[0].sample_id == "a");
        CHECK(res.records[0].age_months == 100);
        CHECK(res.records[0].male == false);
        CHECK(res.records[2].male == true);
        CHECK_FALSE(res.records[1].male.has_value());
    }

    TEST_CASE("missing image becomes a warning") {
        TempDir dir("load");
        write_text(dir / "labels.csv", "id,boneage,male\na,30,1\nb,40,0\nc,50,1\n");
        make_images(dir, {"a", "c"});
        const auto res = load_dataset(dir / "labels.csv", dir / "images");
        CHECK(res.records.size() == 2);
        REQUIRE(res.warnings.size() == 1);
        CHECK(res.warnings[0].find("b") != std::string::npos);
    }

    TEST_CASE("bad age names the line") {
        TempDir dir("load");
        write_text(dir / "labels.csv", "id,boneage,male\na,30,1\nb,abc,0\n");
        make_images(dir, {"a", "b"});
        try {
            load_dataset(dir / "labels.csv", dir / "images");
            FAIL("expected a parse error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Parse);
            CHECK(std::string(e.what()).find(":3") != std::string::npos);
        }
    }

    TEST_CASE("out-of-range ages, bad flags and bad headers") {
        TempDir dir("load");
        make_images(dir, {"a"});
        write_text(dir / "l1.csv", "id,boneage,male\na,0,1\n");
        CHECK_THROWS_AS(load_dataset(dir / "l1.csv", dir / "images"), Error);
        write_text(dir / "l2.csv", "id,boneage,male\na,301,1\n");
        CHECK_THROWS_AS(load_dataset(dir / "l2.csv", dir / "images"), Error);
        write_text(dir / "l3.csv", "id,boneage,male\na,30,maybe\n");
        CHECK_THROWS_AS(load_dataset(dir / "l3.csv", dir / "images"), Error);
        write_text(dir / "l4.csv", "name,age\na,30\n");
        CHECK_THROWS_AS(load_dataset(dir / "l4.csv", dir / "images"), Error);
        CHECK_THROWS_AS(load_dataset(dir / "none.csv", dir / "images"), Error);
    }

    TEST_CASE("labels round trip") {
        TempDir dir("load");
        const std::vector<SampleRecord> recs{{"a", 30, true, {}}, {"b", 99, std::nullopt, {}}};
        save_labels(dir / "labels.csv", recs);
        make_images(dir, {"a", "b"});
        const auto back = load_dataset(dir / "labels.csv", dir / "images");
        REQUIRE(back.records.size() == 2);
        CHECK(back.records[1].age_months == 99);
        CHECK(ages_by_id(back.records).at("a") == 30);
    }
}

TEST_SUITE("subset selection") {
    TEST_CASE("balanced targets from abundant data") {
        Rng rng(1);
        const auto recs = abundant(400, rng);
        const auto res = select_subset(recs, {}, {240, 240, 240, 240}, 5);
        CHECK(res.subset.size() == 960);
        CHECK(res.selected_per_class == std::vector<int>{240, 240, 240, 240});
        CHECK(res.shortfall_per_class == std::vector<int>{0, 0, 0, 0});
        CHECK(std::is_sorted(res.subset.begin(), res.subset.end(),
                             [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; }));
    }

    TEST_CASE("short bucket is taken whole") {
        Rng rng(2);
        auto recs = abundant(50, rng);
        const auto res = select_subset(recs, {}, {60, 10, 10, 10}, 5);
        CHECK(res.selected_per_class[0] == 50);
        CHECK(res.shortfall_per_class[0] == 10);
        CHECK(res.subset.size() == 80);
    }

    TEST_CASE("same seed, same subset; different seed differs") {
        Rng rng(3);
        const auto recs = abundant(100, rng);
        const auto a = select_subset(recs, {}, {20, 20, 20, 20}, 8);
        const auto b = select_subset(recs, {}, {20, 20, 20, 20}, 8);
        const auto c = select_subset(recs, {}, {20, 20, 20, 20}, 9);
        auto ids = [](const SubsetResult& r) {
            std::vector<std::string> v;
            for (const auto& s : r.subset) v.push_back(s.sample_id);
            return v;
        };
        CHECK(ids(a) == ids(b));
        CHECK(ids(a) != ids(c));
    }

    TEST_CASE("target count must match the class count") {
        Rng rng(4);
        CHECK_THROWS_AS(select_subset(abundant(5, rng), {}, {1, 2}, 0), Error);
    }
}

TEST_SUITE("synthetic generator") {
    TEST_CASE("default set shape and ages") {
        const auto ds = synthesize({});
        CHECK(ds.images.size() == 200);
        CHECK(ds.sample_ids.size() == 200);
        for (std::size_t i = 0; i < ds.ages.size(); ++i) {
            CHECK(ds.ages[i] >= 24);
            CHECK(ds.ages[i] <= 216);
            CHECK(eval::assign_interval_label(ds.ages[i], {}) == ds.classes[i]);
            CHECK(ds.images[i].width() == 28);
        }
        for (int c = 0; c < 4; ++c) CHECK(std::count(ds.classes.begin(), ds.classes.end(), c) == 50);
        const auto regions = ds.manifest.region_ids();
        CHECK(regions == synth_region_ids(4));
        CHECK(ds.manifest.entries().size() == 200 * regions.size());
    }

    TEST_CASE("bit-reproducible for a seed") {
        SynthConfig cfg;
        cfg.seed = 7;
        const auto a = synthesize(cfg);
        const auto b = synthesize(cfg);
        CHECK(a.images == b.images);
        CHECK(a.ages == b.ages);
        cfg.seed = 8;
        CHECK_FALSE(synthesize(cfg).images == a.images);
    }

    TEST_CASE("zero noise: identical images within a class") {
        SynthConfig cfg;
        cfg.noise_level = 0.0;
        cfg.per_class = 5;
        const auto ds = synthesize(cfg);
        for (std::size_t i = 1; i < ds.images.size(); ++i) {
            if (ds.classes[i] == ds.classes[i - 1]) {
                CHECK(ds.images[i] == ds.images[i - 1]);
            } else {
                CHECK_FALSE(ds.images[i] == ds.images[i - 1]);
            }
        }
    }

    TEST_CASE("class mean intensity strictly increases") {
        SynthConfig cfg;
        cfg.noise_level = 0.0;
        cfg.per_class = 3;
        const auto ds = synthesize(cfg);
        std::vector<double> sum(4, 0.0);
        std::vector<int> n(4, 0);
        for (std::size_t i = 0; i < ds.images.size(); ++i) {
            const auto& px = ds.images[i].pixels();
            sum[ds.classes[i]] += std::accumulate(px.begin(), px.end(), 0.0) / px.size();
            ++n[ds.classes[i]];
        }
        for (int c = 1; c < 4; ++c) CHECK(sum[c] / n[c] > sum[c - 1] / n[c - 1]);
    }

    TEST_CASE("too small for the blob layout") {
        SynthConfig cfg;
        cfg.image_h = 8;
        cfg.image_w = 8;
        try {
            synthesize(cfg);
            FAIL("expected a config error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }

    TEST_CASE("written tree loads back") {
        TempDir dir("synth");
        SynthConfig cfg;
        cfg.per_class = 4;
        const auto ds = synthesize(cfg);
        write_dataset(dir.path(), ds);
        const auto res = load_dataset(dir / "labels.csv", dir / "images");
        CHECK(res.records.size() == 16);
        CHECK(res.warnings.empty());
        CHECK(load_grayscale(res.records[3].image_path) == ds.images[3]);
        const auto m = imgproc::RegionManifest::load(dir / "manifest.csv");
        CHECK(m.entries().size() == ds.manifest.entries().size());
    }
}
