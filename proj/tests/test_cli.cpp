#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "baccae/config.hpp"
#include "baccae/error.hpp"
#include "baccae/pipeline.hpp"
#include "support.hpp"

using namespace baccae;
using baccae::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int status = -1;
    std::string output;
};

Outcome run_cli(const std::string& args) {
    const std::string cmd = std::string(BACCAE_CLI) + " " + args + " 2>&1";
    Outcome out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) out.output += buf.data();
    const int raw = pclose(pipe);
    out.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2);
}

// Relative path -> contents for every regular file under root, skipping run.json.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
        files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return files;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults validate and round trip through json") {
        RunConfig cfg;
        CHECK(cfg.validate().empty());
        const auto back = run_config_from_json(to_json(cfg));
        CHECK(to_json(back) == to_json(cfg));
    }

    TEST_CASE("every problem is reported at once") {
        const json j = {{"bogus", 1}, {"kmeans", {{"k", "many"}}}, {"regions", {2, 40}}, {"seed", -1}};
        try {
            run_config_from_json(j);
            FAIL("expected a config error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(e.kind() == ErrorKind::Config);
            CHECK(msg.find("bogus") != std::string::npos);
            CHECK(msg.find("kmeans.k") != std::string::npos);
            CHECK(msg.find("40") != std::string::npos);
            CHECK(msg.find("seed") != std::string::npos);
            CHECK(msg.find("4 problem(s)") != std::string::npos);
        }
    }

    TEST_CASE("per-region overrides resolve") {
        json j = {{"ccae", {{"overrides", {{"19", {{"input_size", {96, 80}}, {"latent_dim", 8}}}}}}}};
        const auto cfg = run_config_from_json(j);
        const auto r19 = cfg.region_config(19);
        CHECK(r19.input_h == 96);
        CHECK(r19.input_w == 80);
        CHECK(r19.latent_dim == 8);
        const auto r2 = cfg.region_config(2);
        CHECK(r2.input_h == 64);
        CHECK(r2.seed == cfg.seed + 1000 + 2);
        CHECK(r19.seed != r2.seed);
    }

    TEST_CASE("stage seeds derive from the global seed") {
        RunConfig cfg;
        cfg.seed = 10;
        CHECK(cfg.kmeans_config().seed == 2010);
        CHECK(cfg.tsne_config().seed == 3010);
        CHECK(cfg.synth_config().seed == 10);
    }

    TEST_CASE("region list parsing") {
        CHECK(parse_region_list("2,5,8,11,16,17,19") == std::vector<int>{2, 5, 8, 11, 16, 17, 19});
        CHECK_THROWS_AS(parse_region_list("2,x"), Error);
    }

    TEST_CASE("config file paths are relative to the file") {
        TempDir dir("cfg");
        fs::create_directories(dir / "sub");
        write_json(dir.path() / "sub" / "c.json", {{"data", {{"labels", "l.csv"}}}, {"out", "o"}});
        const auto cfg = load_run_config(dir.path() / "sub" / "c.json");
        CHECK(cfg.data.labels == dir.path() / "sub" / "l.csv");
        CHECK(cfg.out == dir.path() / "sub" / "o");
    }

    TEST_CASE("comments are accepted") {
        TempDir dir("cfg");
        {
            std::ofstream f(dir / "c.json");
            f << "{\n  // twelve clusters\n  \"kmeans\": {\"k\": 12}\n}\n";
        }
        CHECK(load_run_config(dir / "c.json").kmeans.k == 12);
    }
}

TEST_SUITE("command line") {
    TEST_CASE("counts mode prints the overall accuracy") {
        TempDir dir("cli");
        const auto r = run_cli("evaluate --counts " + std::string(BACCAE_TEST_DATA) + "/reference_counts.csv --out " + dir.path().string());
        CHECK(r.status == 0);
        CHECK(r.output.find("overall accuracy 76.15%") != std::string::npos);
        const auto report = json::parse(slurp(dir / "report.json"));
        CHECK(report["clusters"].size() == 16);
        CHECK(report["correct"] == 731);
        CHECK(fs::exists(dir / "report.csv"));
        CHECK(fs::exists(dir / "run.json"));
    }

    TEST_CASE("synth twice gives byte-identical trees") {
        TempDir dir("cli");
        REQUIRE(run_cli("synth -q --seed 7 --out " + (dir / "a").string()).status == 0);
        REQUIRE(run_cli("synth -q --seed 7 --out " + (dir / "b").string()).status == 0);
        const auto a = tree(dir / "a");
        CHECK(a.size() == 203);
        CHECK(a == tree(dir / "b"));
        REQUIRE(run_cli("synth -q --seed 8 --out " + (dir / "c").string()).status == 0);
        CHECK(a != tree(dir / "c"));
    }

    TEST_CASE("missing upstream artifacts name the file") {
        TempDir dir("cli");
        const auto r = run_cli("cluster --out " + dir.path().string());
        CHECK(r.status == 4);
        CHECK(r.output.find("latents_r2.csv") != std::string::npos);
        CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);
    }

    TEST_CASE("invalid flags and configs fail with one line") {
        TempDir dir("cli");
        write_json(dir / "bad.json", {{"kmeans", {{"k", 0}}}, {"regions", {0}}, {"threads", 0}});
        const auto r = run_cli("cluster --config " + (dir / "bad.json").string());
        CHECK(r.status == 3);
        CHECK(r.output.find("3 problem(s)") != std::string::npos);
        CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);
        CHECK(run_cli("cluster --regions 2,99 --out " + dir.path().string()).status == 3);
        CHECK(run_cli("").status != 0);
    }

    TEST_CASE("flags override the file") {
        TempDir dir("cli");
        write_json(dir / "c.json", {{"interval", {{"interval_months", 24}, {"num_classes", 4}}}});
        // 24-month intervals with 4 classes: the counts file has 4 columns either way.
        const auto r = run_cli("evaluate --config " + (dir / "c.json").string() + " --interval 48 --counts " +
                               std::string(BACCAE_TEST_DATA) + "/reference_counts.csv --out " + (dir / "o").string());
        REQUIRE(r.status == 0);
        const auto report = json::parse(slurp(dir / "o" / "report.json"));
        CHECK(report["classes"][1] == "72-120");
        const auto run = json::parse(slurp(dir / "o" / "run.json"));
        CHECK(run["config"]["interval"]["interval_months"] == 48);
    }

    TEST_CASE("small pipeline is idempotent and thread-count independent") {
        TempDir dir("cli");
        write_json(dir / "s.json", {{"synth", {{"per_class", 8}}}});
        REQUIRE(run_cli("synth -q --config " + (dir / "s.json").string() + " --out " + (dir / "data").string()).status == 0);
        auto cfg = json::parse(slurp(dir / "data" / "config.json"));
        cfg["ccae"]["epochs"] = 4;
        cfg["kmeans"]["k"] = 4;
        cfg["tsne"]["perplexity"] = 5;
        cfg["tsne"]["iterations"] = 300;
        write_json(dir / "data" / "config.json", cfg);
        const std::string base = "run -q --config " + (dir / "data" / "config.json").string();
        const auto first = run_cli(base + " --out " + (dir / "r1").string());
        INFO(first.output);
        REQUIRE(first.status == 0);
        REQUIRE(run_cli(base + " --out " + (dir / "r2").string()).status == 0);
        REQUIRE(run_cli(base + " --threads 3 --out " + (dir / "r3").string()).status == 0);
        const auto t1 = tree(dir / "r1");
        CHECK(t1 == tree(dir / "r2"));
        CHECK(t1 == tree(dir / "r3"));
        for (const char* name : {"assignment.csv", "report.json", "report.csv", "tsne.csv", "tsne.svg",
                                 "latents_r2.csv", "ccae_r19.ckpt", "2/s00000.png"}) {
            CHECK_MESSAGE(t1.count(name) == 1, name);
        }
        const auto run = json::parse(slurp(dir / "r1" / "run.json"));
        CHECK(run.contains("overall_accuracy"));
        CHECK(run["config"]["kmeans"]["k"] == 4);
        CHECK(run["stages"].size() == 6);
        // Replaying the logged config reproduces the report.
        write_json(dir / "replay.json", run["config"]);
        REQUIRE(run_cli("run -q --config " + (dir / "replay.json").string() + " --out " + (dir / "r4").string()).status == 0);
        CHECK(slurp(dir / "r4" / "report.csv") == slurp(dir / "r1" / "report.csv"));
        // Stages rerun in place leave their outputs unchanged.
        REQUIRE(run_cli("cluster -q --config " + (dir / "data" / "config.json").string() + " --out " + (dir / "r1").string()).status == 0);
        CHECK(tree(dir / "r1") == t1);
        // Sweep over the same latents.
        REQUIRE(run_cli("sweep -q --config " + (dir / "data" / "config.json").string() + " --out " + (dir / "r1").string()).status == 0);
        const auto sweep = json::parse(slurp(dir / "r1" / "sweep.json"));
        CHECK(sweep["single_regions"].size() == 6);
        CHECK(sweep["k_sweep"].size() == 5);  // 64 exceeds the 32 samples
        CHECK(sweep["k_skipped"] == json::array({64}));
        CHECK(fs::exists(dir / "r1" / "sweep_k.csv"));
    }
}
