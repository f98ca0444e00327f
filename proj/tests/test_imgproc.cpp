#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "baccae/error.hpp"
#include "baccae/imgproc.hpp"
#include "support.hpp"

using namespace baccae;
using baccae::testing::TempDir;

TEST_SUITE("image io") {
    TEST_CASE("gray png round trip") {
        TempDir dir("io");
        Image img(3, 2, std::vector<std::uint8_t>{0, 10, 20, 200, 250, 255});
        save_png(dir / "a.png", img);
        CHECK(load_grayscale(dir / "a.png") == img);
    }

    TEST_CASE("single black pixel") {
        TempDir dir("io");
        save_png(dir / "b.png", Image(1, 1, 0));
        const auto img = load_grayscale(dir / "b.png");
        CHECK(img.width() == 1);
        CHECK(img.height() == 1);
        CHECK(img.at(0, 0) == 0);
    }

    TEST_CASE("white rgb maps to white") {
        TempDir dir("io");
        save_rgb_png(dir / "w.png", 1, 1, {255, 255, 255});
        CHECK(load_grayscale(dir / "w.png").at(0, 0) == 255);
    }

    TEST_CASE("pure red and green follow luma weights") {
        TempDir dir("io");
        save_rgb_png(dir / "rg.png", 2, 1, {255, 0, 0, 0, 255, 0});
        const auto img = load_grayscale(dir / "rg.png");
        CHECK(img.at(0, 0) == static_cast<int>(std::lround(0.299 * 255)));
        CHECK(img.at(1, 0) == static_cast<int>(std::lround(0.587 * 255)));
        CHECK(img.at(0, 0) == 76);
        CHECK(img.at(1, 0) == 150);
    }

    TEST_CASE("non-png and missing files are load errors") {
        TempDir dir("io");
        {
            std::ofstream f(dir / "x.png");
            f << "not a png";
        }
        CHECK_THROWS_AS(load_grayscale(dir / "x.png"), Error);
        CHECK_THROWS_AS(load_grayscale(dir / "missing.png"), Error);
        try {
            load_grayscale(dir / "x.png");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Load);
        }
    }
}

TEST_SUITE("histogram equalization") {
    TEST_CASE("constant image unchanged") {
        const Image img(7, 5, 128);
        CHECK(imgproc::histogram_equalize(img) == img);
    }

    TEST_CASE("uniform ramp is a fixed point") {
        Image img(256, 1);
        for (int x = 0; x < 256; ++x) img.at(x, 0) = static_cast<std::uint8_t>(x);
        CHECK(imgproc::histogram_equalize(img) == img);
    }

    TEST_CASE("2x2 example against a cdf oracle") {
        const Image img(2, 2, std::vector<std::uint8_t>{52, 52, 154, 200});
        // Oracle: count pixels <= v for each pixel value.
        const auto& px = img.pixels();
        int cdf_min = 4;
        for (auto v : px) {
            int c = 0;
            for (auto u : px) c += u <= v;
            cdf_min = std::min(cdf_min, c);
        }
        const auto out = imgproc::histogram_equalize(img);
        for (std::size_t i = 0; i < px.size(); ++i) {
            int c = 0;
            for (auto u : px) c += u <= px[i];
            const auto expected = std::round(255.0 * (c - cdf_min) / (4.0 - cdf_min));
            CHECK(out.pixels()[i] == static_cast<int>(expected));
        }
        CHECK(out.pixels() == std::vector<std::uint8_t>{0, 0, 128, 255});
    }
}

TEST_SUITE("gaussian blur") {
    TEST_CASE("kernel weights are normalized and symmetric") {
        for (int size : {1, 3, 5, 7, 31}) {
            for (double sigma : {0.3, 1.0, 1.2, 4.0}) {
                const auto k = imgproc::gaussian_kernel(size, sigma);
                REQUIRE(k.size() == static_cast<std::size_t>(size));
                CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) <= 1e-12);
                for (int i = 0; i < size; ++i) CHECK(k[i] == doctest::Approx(k[size - 1 - i]).epsilon(1e-15));
            }
        }
    }

    TEST_CASE("constant image stays constant") {
        const Image img(9, 6, 77);
        CHECK(imgproc::gaussian_blur(img, 1.2, 5) == img);
    }

    TEST_CASE("kernel size 1 is the identity") {
        Rng rng(3);
        const auto img = baccae::testing::random_image(rng);
        CHECK(imgproc::gaussian_blur(img, 0.8, 1) == img);
    }

    TEST_CASE("impulse produces the outer-product stamp") {
        Image img(5, 5, 0);
        img.at(2, 2) = 255;
        const auto out = imgproc::gaussian_blur(img, 1.0, 3);
        const double e = std::exp(-0.5);
        const double w[3] = {e / (1 + 2 * e), 1 / (1 + 2 * e), e / (1 + 2 * e)};
        for (int y = 0; y < 5; ++y) {
            for (int x = 0; x < 5; ++x) {
                const int dx = x - 2, dy = y - 2;
                const double v = (std::abs(dx) <= 1 && std::abs(dy) <= 1) ? 255.0 * w[dx + 1] * w[dy + 1] : 0.0;
                CHECK(out.at(x, y) == static_cast<int>(std::lround(v)));
            }
        }
        CHECK(out.at(2, 2) == 52);
        CHECK(out.at(1, 1) == 19);
    }

    TEST_CASE("invalid parameters") {
        const Image img(4, 4, 0);
        CHECK_THROWS_AS(imgproc::gaussian_blur(img, 1.0, 4), Error);
        CHECK_THROWS_AS(imgproc::gaussian_blur(img, 0.0, 3), Error);
    }
}

TEST_SUITE("adaptive threshold") {
    TEST_CASE("constant image with positive offset becomes white") {
        const auto out = imgproc::adaptive_threshold(Image(6, 6, 90), 3, 5.0);
        for (auto p : out.pixels()) CHECK(p == 255);
    }

    TEST_CASE("constant image with negative offset becomes black") {
        const auto out = imgproc::adaptive_threshold(Image(6, 6, 90), 3, -5.0);
        for (auto p : out.pixels()) CHECK(p == 0);
    }

    TEST_CASE("step image against a brute-force local mean") {
        Image img(8, 6, 0);
        for (int y = 0; y < 6; ++y) {
            for (int x = 4; x < 8; ++x) img.at(x, y) = 255;
        }
        for (int block : {3, 5}) {
            const auto out = imgproc::adaptive_threshold(img, block, 0.0);
            const int r = block / 2;
            for (int y = 0; y < 6; ++y) {
                for (int x = 0; x < 8; ++x) {
                    double sum = 0;
                    for (int j = -r; j <= r; ++j) {
                        for (int i = -r; i <= r; ++i) sum += img.clamped(x + i, y + j);
                    }
                    const int expected = img.at(x, y) > sum / (block * block) ? 255 : 0;
                    CHECK(out.at(x, y) == expected);
                }
            }
            // Interior of each half keeps its side.
            CHECK(out.at(0, 3) == 0);
            CHECK(out.at(7, 3) == 0);
            CHECK(out.at(4, 3) == 255);
        }
    }

    TEST_CASE("invalid block size") {
        CHECK_THROWS_AS(imgproc::adaptive_threshold(Image(4, 4), 4, 0.0), Error);
        CHECK_THROWS_AS(imgproc::adaptive_threshold(Image(4, 4), 1, 0.0), Error);
    }
}

TEST_SUITE("resize and crop") {
    TEST_CASE("checkerboard centre is the four-corner average") {
        const Image board(2, 2, std::vector<std::uint8_t>{0, 255, 255, 0});
        const auto out = imgproc::resize_bilinear(board, 3, 3);
        CHECK(out.at(1, 1) == static_cast<int>(std::lround((0 + 255 + 255 + 0) / 4.0)));
        CHECK(out.at(1, 1) == 128);
        CHECK(out.at(0, 0) == 0);
        CHECK(out.at(2, 0) == 255);
    }

    TEST_CASE("same-size resize is the identity") {
        Rng rng(5);
        const auto img = baccae::testing::random_image(rng, 2, 20);
        CHECK(imgproc::resize_bilinear(img, img.width(), img.height()) == img);
    }

    TEST_CASE("full-frame crop is the identity") {
        Rng rng(11);
        Image img(64, 64);
        for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
        imgproc::RegionManifest m;
        m.add({"a", 4, 0, 0, 1, 1});
        const auto res = imgproc::crop_regions(img, "a", m, {{4, {64, 64}}});
        REQUIRE(res.crops.size() == 1);
        CHECK(res.crops[0].image == img);
        CHECK(res.missing_regions.empty());
    }

    TEST_CASE("quadrant crop is unchanged") {
        Rng rng(12);
        Image img(100, 100);
        for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
        imgproc::RegionManifest m;
        m.add({"a", 1, 0, 0, 0.5, 0.5});
        const auto res = imgproc::crop_regions(img, "a", m, {{1, {50, 50}}});
        REQUIRE(res.crops.size() == 1);
        for (int y = 0; y < 50; ++y) {
            for (int x = 0; x < 50; ++x) CHECK(res.crops[0].image.at(x, y) == img.at(x, y));
        }
    }

    TEST_CASE("missing regions are reported, invalid boxes rejected") {
        const Image img(10, 10, 3);
        imgproc::RegionManifest m;
        m.add({"a", 2, 0.1, 0.1, 0.6, 0.6});
        const auto res = imgproc::crop_regions(img, "a", m, {{2, {4, 4}}, {7, {4, 4}}});
        CHECK(res.crops.size() == 1);
        CHECK(res.missing_regions == std::vector<int>{7});
        CHECK_THROWS_AS(m.add({"a", 3, 0.5, 0.5, 0.5, 0.9}), Error);
        CHECK_THROWS_AS(m.add({"a", 20, 0, 0, 1, 1}), Error);
        CHECK_THROWS_AS(m.add({"a", 3, -0.1, 0, 1, 1}), Error);
    }

    TEST_CASE("manifest csv round trip") {
        TempDir dir("manifest");
        imgproc::RegionManifest m;
        m.add({"s1", 2, 0.1, 0.2, 0.3, 0.4});
        m.add({"s2", 19, 0, 0.45, 1, 1});
        m.save(dir / "m.csv");
        const auto back = imgproc::RegionManifest::load(dir / "m.csv");
        REQUIRE(back.entries().size() == 2);
        CHECK(back.find("s2", 19)->y0 == 0.45);
        CHECK(back.find("s1", 2)->x1 == 0.3);
        CHECK(back.region_ids() == std::vector<int>{2, 19});
    }
}

TEST_SUITE("preprocessing invariants") {
    TEST_CASE("100 random images") {
        Rng rng(2024);
        for (int trial = 0; trial < 100; ++trial) {
            const auto img = baccae::testing::random_image(rng);
            const auto eq = imgproc::histogram_equalize(img);
            const auto eq2 = imgproc::histogram_equalize(eq);
            CHECK(eq.width() == img.width());
            CHECK(eq.height() == img.height());
            for (std::size_t i = 0; i < eq.pixels().size(); ++i) {
                CHECK(std::abs(int(eq.pixels()[i]) - int(eq2.pixels()[i])) <= 1);
            }
            const int size = 1 + 2 * static_cast<int>(rng.below(4));
            const double sigma = rng.uniform(0.2, 3.0);
            const auto k = imgproc::gaussian_kernel(size, sigma);
            CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) <= 1e-12);
            const auto blurred = imgproc::gaussian_blur(img, sigma, size);
            CHECK(blurred.pixels().size() == img.pixels().size());
            const int block = 3 + 2 * static_cast<int>(rng.below(8));
            const auto th = imgproc::adaptive_threshold(img, block, rng.uniform(-20, 20));
            for (auto p : th.pixels()) CHECK((p == 0 || p == 255));
            const auto pre = imgproc::preprocess(img, {});
            for (auto p : pre.pixels()) CHECK((p == 0 || p == 255));
        }
    }
}
