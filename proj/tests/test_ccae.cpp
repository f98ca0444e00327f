#include <doctest.h>

#include "baccae/ccae.hpp"
#include "baccae/error.hpp"
#include "support.hpp"

using namespace baccae;
using namespace baccae::ccae;
using nn::Tensor;
using baccae::testing::TempDir;

namespace {

CCAEConfig tiny_config(double lambda = 0.01) {
    CCAEConfig cfg;
    cfg.region_id = 3;
    cfg.input_h = 8;
    cfg.input_w = 8;
    cfg.encoder = {LayerSpec::conv(3, 2, 2, 1), LayerSpec::relu()};
    cfg.latent_dim = 3;
    cfg.lambda = lambda;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 42;
    return cfg;
}

std::vector<Tensor> random_batch(std::size_t n, std::size_t h, std::size_t w, Rng& rng) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t({1, h, w});
        for (auto& v : t.values()) v = rng.uniform();
        out.push_back(t);
    }
    return out;
}

double sum_sq(const Tensor& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return s;
}

}  // namespace

TEST_SUITE("architecture") {
    TEST_CASE("default 64x64 mirrors back to 64x64") {
        const auto model = build(CCAEConfig::defaults(2, 64, 64));
        Rng rng(1);
        const auto x = random_batch(1, 64, 64, rng)[0];
        const auto y = model.reconstruct(x);
        CHECK(y.shape() == nn::Shape{1, 64, 64});
        CHECK(model.encode(x).size() == 16);
        for (double v : y.values()) CHECK((v >= 0.0 && v <= 1.0));
    }

    TEST_CASE("30x30 kernel on a 128x128 carpal crop") {
        CCAEConfig cfg = CCAEConfig::defaults(19, 128, 128);
        cfg.encoder = {LayerSpec::conv(30, 2, 4, 14), LayerSpec::relu()};
        const auto model = build(cfg);
        Rng rng(2);
        CHECK(model.reconstruct(random_batch(1, 128, 128, rng)[0]).shape() == nn::Shape{1, 128, 128});
    }

    TEST_CASE("odd and non-square sizes mirror exactly") {
        for (auto [h, w] : {std::pair{28, 28}, std::pair{16, 16}, std::pair{15, 22}, std::pair{33, 17}}) {
            const auto model = build(CCAEConfig::defaults(1, h, w));
            Rng rng(3);
            CHECK(model.reconstruct(random_batch(1, h, w, rng)[0]).shape() ==
                  nn::Shape{1, std::size_t(h), std::size_t(w)});
        }
    }

    TEST_CASE("dense-only encoders are allowed") {
        CCAEConfig cfg = tiny_config();
        cfg.encoder = {LayerSpec::dense(10), LayerSpec::relu()};
        const auto model = build(cfg);
        Rng rng(4);
        CHECK(model.reconstruct(random_batch(1, 8, 8, rng)[0]).shape() == nn::Shape{1, 8, 8});
    }

    TEST_CASE("invalid architectures name the layer") {
        CCAEConfig cfg = tiny_config();
        cfg.encoder = {LayerSpec::conv(5, 2, 4, 0), LayerSpec::relu(), LayerSpec::conv(5, 2, 4, 0)};
        try {
            build(cfg);
            FAIL("expected an architecture error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Architecture);
            CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
        }
        cfg.encoder = {LayerSpec::dense(4), LayerSpec::conv(3, 1, 2, 1)};
        CHECK_THROWS_AS(build(cfg), Error);
        cfg.encoder = {};
        cfg.latent_dim = 0;
        CHECK_THROWS_AS(build(cfg), Error);
    }

    TEST_CASE("same seed gives identical initial parameters") {
        CHECK(build(tiny_config()).params() == build(tiny_config()).params());
        auto other = tiny_config();
        other.seed = 43;
        CHECK_FALSE(build(tiny_config()).params() == build(other).params());
    }

    TEST_CASE("wrong input shape is a dimension error") {
        const auto model = build(tiny_config());
        try {
            model.encode(Tensor({1, 9, 8}));
            FAIL("expected a dimension error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Dimension);
        }
    }
}

TEST_SUITE("loss") {
    TEST_CASE("lambda zero equals plain reconstruction mse") {
        Rng rng(5);
        const auto batch = random_batch(3, 8, 8, rng);
        const auto model = build(tiny_config(0.0));
        double mse = 0;
        for (const auto& x : batch) mse += nn::mse_loss(model.reconstruct(x), x);
        CHECK(model.loss(batch) == doctest::Approx(mse / 3).epsilon(1e-14));
        CHECK(model.loss(batch) >= 0.0);
    }

    TEST_CASE("doubling lambda adds lambda times the mean squared latent norm") {
        Rng rng(6);
        const auto batch = random_batch(4, 8, 8, rng);
        const auto a = build(tiny_config(0.05));
        auto b = build(tiny_config(0.10));
        b.load_params(a.params());
        double mean_sq = 0;
        for (const auto& x : batch) mean_sq += sum_sq(a.encode(x));
        mean_sq /= 4;
        CHECK(b.loss(batch) - a.loss(batch) == doctest::Approx(0.05 * mean_sq).epsilon(1e-10));
    }

    TEST_CASE("full model gradient matches finite differences on 8x8") {
        Rng rng(7);
        const auto batch = random_batch(2, 8, 8, rng);
        for (double lambda : {0.0, 0.01, 0.1}) {
            auto model = build(tiny_config(lambda));
            std::vector<Tensor> grads;
            model.loss_and_grad(batch, grads);
            std::vector<nn::GradProbe> probes;
            auto& params = model.params().params();
            for (std::size_t i = 0; i < params.size(); ++i) probes.push_back({params[i].name, &params[i].value, &grads[i]});
            const auto res = nn::gradient_check([&] { return model.loss(batch); }, probes);
            INFO("worst " << res.worst_param << "[" << res.worst_index << "]");
            CHECK(res.max_relative_error <= 1e-5);
        }
    }

    TEST_CASE("dense encoder gradient and the penalty term") {
        Rng rng(8);
        const auto batch = random_batch(3, 8, 8, rng);
        auto cfg = tiny_config(0.1);
        cfg.encoder = {LayerSpec::dense(6), LayerSpec::sigmoid()};
        auto model = build(cfg);
        std::vector<Tensor> grads;
        model.loss_and_grad(batch, grads);
        std::vector<nn::GradProbe> probes;
        auto& params = model.params().params();
        for (std::size_t i = 0; i < params.size(); ++i) probes.push_back({params[i].name, &params[i].value, &grads[i]});
        CHECK(nn::gradient_check([&] { return model.loss(batch); }, probes).max_relative_error <= 1e-5);
    }
}

TEST_SUITE("training") {
    TEST_CASE("zero learning rate leaves parameters unchanged") {
        Rng rng(9);
        const auto data = random_batch(6, 8, 8, rng);
        auto cfg = tiny_config();
        cfg.learning_rate = 0.0;
        auto model = build(cfg);
        const auto before = model.params();
        train(model, data);
        CHECK(model.history().size() == 1);
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(model.params().params()[i].value == before.params()[i].value);
        }
    }

    TEST_CASE("same seed and data give identical history and parameters") {
        Rng rng(10);
        const auto data = random_batch(10, 8, 8, rng);
        auto cfg = tiny_config();
        cfg.epochs = 5;
        auto a = build(cfg);
        auto b = build(cfg);
        train(a, data);
        train(b, data);
        CHECK(a.history() == b.history());
        CHECK(a.params() == b.params());
    }

    TEST_CASE("loss decreases on a learnable set") {
        Rng rng(11);
        std::vector<Tensor> data;
        for (int i = 0; i < 16; ++i) {
            Tensor t({1, 8, 8});
            const double level = (i % 4) / 3.0;
            for (auto& v : t.values()) v = level;
            data.push_back(t);
        }
        auto cfg = tiny_config();
        cfg.epochs = 40;
        cfg.learning_rate = 0.01;
        auto model = build(cfg);
        int calls = 0;
        train(model, data, [&](int, double) { ++calls; });
        CHECK(calls == 40);
        CHECK(model.history().back() < 0.5 * model.history().front());
    }

    TEST_CASE("empty dataset is a usage error") {
        auto model = build(tiny_config());
        try {
            train(model, std::vector<Tensor>{});
            FAIL("expected a usage error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Usage);
        }
    }
}

TEST_SUITE("encoding") {
    TEST_CASE("encode is deterministic") {
        Rng rng(12);
        const auto x = random_batch(1, 8, 8, rng)[0];
        const auto model = build(tiny_config());
        CHECK(encode(model, "a", x).z == encode(model, "a", x).z);
    }

    TEST_CASE("all-zero parameters give a zero latent") {
        auto model = build(tiny_config());
        for (auto& p : model.params().params()) p.value.fill(0.0);
        Rng rng(13);
        const auto z = model.encode(random_batch(1, 8, 8, rng)[0]);
        for (double v : z.values()) CHECK(v == 0.0);
    }

    TEST_CASE("encode_batch keeps order and count") {
        const auto model = build(tiny_config());
        Rng rng(14);
        std::vector<imgproc::RegionCrop> crops;
        for (const char* id : {"c", "a", "b"}) {
            Image img(8, 8);
            for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
            crops.push_back({id, 3, img});
        }
        const auto z = encode_batch(model, crops);
        REQUIRE(z.size() == 3);
        CHECK(z[0].sample_id == "c");
        CHECK(z[2].sample_id == "b");
        CHECK(z[1].z == encode(model, "a", image_to_tensor(crops[1].image)).z);
        CHECK(z[1].region_id == 3);
    }

    TEST_CASE("latent csv round trip is exact") {
        TempDir dir("latents");
        std::vector<LatentVector> v{{"s1", 2, {0.1, -2.5e-17, 3.0}}, {"s2", 2, {1.0 / 3.0, 0.0, -7.25}}};
        save_latents(dir / "l.csv", v);
        const auto back = load_latents(dir / "l.csv");
        REQUIRE(back.size() == 2);
        CHECK(back[0].z == v[0].z);
        CHECK(back[1].z == v[1].z);
        CHECK(back[1].sample_id == "s2");
    }

    TEST_CASE("checkpoint restores an identical encoder") {
        TempDir dir("ccae_ckpt");
        Rng rng(15);
        const auto data = random_batch(4, 8, 8, rng);
        auto model = build(tiny_config());
        train(model, data);
        nn::save_checkpoint(dir / "m.ckpt", model.params());
        auto restored = build(tiny_config());
        restored.load_params(nn::load_checkpoint(dir / "m.ckpt"));
        CHECK(restored.encode(data[0]) == model.encode(data[0]));
        auto wrong = tiny_config();
        wrong.latent_dim = 4;
        auto other = build(wrong);
        CHECK_THROWS_AS(other.load_params(nn::load_checkpoint(dir / "m.ckpt")), Error);
    }
}
