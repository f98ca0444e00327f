#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "baccae/embed.hpp"
#include "baccae/error.hpp"
#include "support.hpp"

using namespace baccae;
using namespace baccae::embed;
using cluster::FeatureMatrix;
using baccae::testing::TempDir;

namespace {

FeatureMatrix matrix(std::size_t d, std::vector<double> v) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < v.size() / d; ++i) ids.push_back("p" + std::to_string(i));
    return FeatureMatrix(ids, d, std::move(v));
}

FeatureMatrix two_blobs(std::size_t per_blob, Rng& rng) {
    std::vector<double> v;
    for (std::size_t i = 0; i < 2 * per_blob; ++i) {
        const double c = i < per_blob ? 0.0 : 20.0;
        for (int j = 0; j < 5; ++j) v.push_back(c + rng.normal());
    }
    return matrix(5, v);
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("affinities") {
    TEST_CASE("equidistant points give uniform rows") {
        const auto fm = matrix(3, {1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1});
        const auto p = perplexity_affinities(fm, 1.2);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) CHECK(p.at(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 12.0).epsilon(1e-9));
        }
    }

    TEST_CASE("tight pairs dominate cross-pair affinity") {
        const auto fm = matrix(2, {0, 0, 0.1, 0, 10, 0, 10.1, 0});
        const auto p = perplexity_affinities(fm, 1.2);
        CHECK(p.at(0, 1) >= 10 * p.at(0, 2));
        CHECK(p.at(2, 3) >= 10 * p.at(1, 3));
    }

    TEST_CASE("invariants on random inputs") {
        Rng rng(1);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 6 + rng.below(30);
            std::vector<double> v(n * 4);
            for (auto& x : v) x = rng.uniform(-3, 3);
            const double perplexity = rng.uniform(1.0, n / 3.0 - 0.01);
            const auto p = perplexity_affinities(matrix(4, v), perplexity);
            double total = 0;
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(p.at(i, i) == 0.0);
                for (std::size_t j = 0; j < n; ++j) {
                    CHECK(p.at(i, j) >= 0.0);
                    CHECK(p.at(i, j) == p.at(j, i));
                    total += p.at(i, j);
                }
            }
            CHECK(std::abs(total - 1.0) <= 1e-9);
        }
    }

    TEST_CASE("perplexity and size limits") {
        Rng rng(2);
        const auto fm = two_blobs(5, rng);
        CHECK_THROWS_AS(perplexity_affinities(fm, 4.0), Error);
        CHECK_THROWS_AS(perplexity_affinities(fm, 0.0), Error);
        CHECK_THROWS_AS(perplexity_affinities(matrix(1, {0, 1, 2}), 0.5), Error);
    }
}

TEST_SUITE("tsne") {
    TEST_CASE("descends and separates two blobs") {
        Rng rng(3);
        const auto fm = two_blobs(10, rng);
        TsneConfig cfg;
        cfg.perplexity = 5;
        cfg.iterations = 500;
        cfg.seed = 9;
        const auto e = tsne(fm, cfg);
        REQUIRE(e.size() == 20);
        CHECK(e.kl_final < e.kl_initial);
        CHECK(e.kl_final >= 0.0);
        double within = 0, cross = 0;
        int nw = 0, nc = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            for (std::size_t j = i + 1; j < 20; ++j) {
                const double d = std::hypot(e.points[2 * i] - e.points[2 * j], e.points[2 * i + 1] - e.points[2 * j + 1]);
                if ((i < 10) == (j < 10)) {
                    within += d;
                    ++nw;
                } else {
                    cross += d;
                    ++nc;
                }
            }
        }
        CHECK(within / nw < cross / nc);
        const auto p = perplexity_affinities(fm, cfg.perplexity);
        CHECK(kl_divergence(p, e.points) == doctest::Approx(e.kl_final).epsilon(1e-9));
    }

    TEST_CASE("same seed gives the same embedding") {
        Rng rng(4);
        const auto fm = two_blobs(8, rng);
        TsneConfig cfg;
        cfg.perplexity = 4;
        cfg.iterations = 200;
        CHECK(tsne(fm, cfg).points == tsne(fm, cfg).points);
    }

    TEST_CASE("descent holds on random non-degenerate inputs") {
        Rng rng(5);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> v(30 * 3);
            for (auto& x : v) x = rng.uniform(-1, 1);
            TsneConfig cfg;
            cfg.perplexity = 6;
            cfg.seed = static_cast<std::uint64_t>(trial);
            const auto e = tsne(matrix(3, v), cfg);
            CHECK(e.kl_final < e.kl_initial);
        }
    }
}

TEST_SUITE("scatter output") {
    TEST_CASE("one csv row and one circle per point") {
        TempDir dir("scatter");
        Rng rng(6);
        const auto fm = two_blobs(6, rng);
        TsneConfig cfg;
        cfg.perplexity = 3;
        cfg.iterations = 100;
        const auto e = tsne(fm, cfg);
        const std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
        const std::vector<std::string> names{"a", "b", "c", "d"};
        emit_scatter(e, fm.sample_ids, labels, names, dir / "t.csv", dir / "t.svg");
        const auto csv = slurp(dir / "t.csv");
        CHECK(count(csv, "\n") == 13);
        CHECK(csv.rfind("sample_id,x,y,label\n", 0) == 0);
        const auto svg = slurp(dir / "t.svg");
        CHECK(count(svg, "<circle") == 12);
        CHECK(count(svg, "class=\"legend\"") == 4);
        CHECK(svg.find("<svg") != std::string::npos);
    }

    TEST_CASE("no labels gives a single legend entry") {
        TempDir dir("scatter");
        Rng rng(7);
        const auto fm = two_blobs(3, rng);
        TsneConfig cfg;
        cfg.perplexity = 1.5;
        cfg.iterations = 50;
        const auto e = tsne(fm, cfg);
        emit_scatter(e, fm.sample_ids, {}, {}, dir / "t.csv", dir / "t.svg");
        const auto svg = slurp(dir / "t.svg");
        CHECK(count(svg, "<circle") == 6);
        CHECK(count(svg, "class=\"legend\"") == 1);
    }

    TEST_CASE("mismatched lengths are rejected") {
        TempDir dir("scatter");
        Embedding2D e;
        e.points = {0, 0, 1, 1};
        const std::vector<std::string> ids{"a"};
        CHECK_THROWS_AS(emit_scatter(e, ids, {}, {}, dir / "t.csv", dir / "t.svg"), Error);
    }
}
