// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorfields/cli.hpp"
#include "factorfields/io.hpp"

using namespace factorfields;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "factorfields");
    std::vector<const char *> argv;
    for (const auto &a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string &name) {
    const auto dir = fs::temp_directory_path() / "factorfields_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> small_model() {
    return {"--set", "eta=0", "--set", "coef_res=8", "--set", "basis_res=4,5,6,7,8,9",
            "--set", "proj_width=16", "--set", "steps=20", "--set", "batch=256", "--set", "log_every=5"};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<nlohmann::json> read_log(const fs::path &p) {
    std::ifstream in(p);
    std::vector<nlohmann::json> out;
    for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
    return out;
}

std::size_t lines(const std::string &s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("make-synthetic image then fit-image") {
    const auto dir = fresh_dir("fit");
    const auto img = (dir / "img.png").string();
    REQUIRE(run({"make-synthetic", "image", img, "--size", "16", "--seed", "2"}).code == 0);
    CHECK(load_image(img).width == 16);

    const auto r = run(with({"fit-image", img, "--out", (dir / "a").string()}, small_model()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("psnr=") != std::string::npos);
    CHECK(fs::exists(dir / "a" / "img_recon.png"));
    CHECK(fs::exists(dir / "a" / "model.ffld"));
    const auto log = read_log(dir / "a" / "metrics.log");
    REQUIRE(log.size() >= 3);
    CHECK(log.front()["type"] == "run");
    CHECK(log.back()["type"] == "final");
    CHECK(log.back()["steps"] == 20);
    CHECK(log.back().contains("psnr"));
    long long last = 0;
    for (const auto &rec : log)
        if (rec["type"] == "step") {
            CHECK(rec["step"].get<long long>() > last);
            last = rec["step"].get<long long>();
        }
    CHECK(last == 20);

    SUBCASE("same seed gives the same checkpoint") {
        REQUIRE(run(with({"fit-image", img, "--out", (dir / "b").string()}, small_model())).code == 0);
        CHECK(read_file(dir / "a" / "model.ffld") == read_file(dir / "b" / "model.ffld"));
        REQUIRE(run(with({"fit-image", img, "--seed", "9", "--out", (dir / "c").string()}, small_model())).code == 0);
        CHECK(read_file(dir / "a" / "model.ffld") != read_file(dir / "c" / "model.ffld"));
    }
    SUBCASE("eval reproduces the final metric") {
        const auto e = run({"eval", (dir / "a" / "model.ffld").string(), img});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        const double logged = log.back()["psnr"].get<double>();
        const auto pos = e.out.find("psnr=");
        REQUIRE(pos != std::string::npos);
        CHECK(std::stod(e.out.substr(pos + 5)) == doctest::Approx(logged).epsilon(1e-4));
    }
    SUBCASE("render writes an image") {
        const auto out = dir / "render";
        const auto e = run({"render", (dir / "a" / "model.ffld").string(), "--size", "12", "--out", out.string()});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        bool found = false;
        for (const auto &f : fs::directory_iterator(out)) found |= f.path().extension() == ".png";
        CHECK(found);
    }
}

TEST_CASE("info reports parameter counts") {
    const auto r = run({"info", "--set", "task=sdf"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("5093343") != std::string::npos);
    const auto r2 = run({"info", "--set", "preset=dif_grid", "--set", "dims=3", "--set", "eta=0"});
    CHECK(r2.code == 0);
}

TEST_CASE("errors are one line") {
    const auto dir = fresh_dir("errors");
    const auto missing = run({"fit-image", (dir / "nope.png").string()});
    CHECK(missing.code != 0);
    CHECK(lines(missing.err) == 1);
    CHECK(missing.err.rfind("error:", 0) == 0);

    std::ofstream(dir / "bad.cfg") << "steps=10\nfrequncies=1\n";
    const auto typo = run({"info", "--config", (dir / "bad.cfg").string()});
    CHECK(typo.code != 0);
    CHECK(lines(typo.err) == 1);
    CHECK(typo.err.find("line 2") != std::string::npos);

    const auto sub = run({"frobnicate"});
    CHECK(sub.code != 0);
    CHECK(lines(sub.err) == 1);

    const auto kind = run({"make-synthetic", "teapot", (dir / "x").string()});
    CHECK(kind.code != 0);
    CHECK(lines(kind.err) == 1);

    const auto shared = run({"train-shared", (dir / "one.png").string()});
    CHECK(shared.code != 0);
    CHECK(lines(shared.err) == 1);
}

TEST_CASE("help exits cleanly") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("fit-image") != std::string::npos);
}

TEST_CASE("sdf samples round-trip through make-synthetic") {
    const auto dir = fresh_dir("sdf");
    const auto path = (dir / "s.sdf").string();
    REQUIRE(run({"make-synthetic", "sphere-sdf", path, "--count", "1000"}).code == 0);
    CHECK(load_sdf_samples(path).size() == 1000);
    const auto r = run(with({"fit-sdf", path, "--set", "dims=3", "--out", (dir / "fit").string()}, small_model()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("giou=") != std::string::npos);
    CHECK(fs::exists(dir / "fit" / "slice_xy.png"));
}

TEST_CASE("train-shared writes per-signal checkpoints") {
    const auto dir = fresh_dir("shared");
    REQUIRE(run({"make-synthetic", "textures", (dir / "tex").string(), "--count", "2", "--size", "16"}).code == 0);
    const auto r = run(with({"train-shared", (dir / "tex" / "texture_0.png").string(),
                             (dir / "tex" / "texture_1.png").string(), "--out", (dir / "out").string()},
                            small_model()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir / "out" / "shared.ffld"));
    CHECK(fs::exists(dir / "out" / "signal_1.ffld"));
    const auto e = run({"eval", (dir / "out" / "signal_1.ffld").string(), (dir / "tex" / "texture_1.png").string()});
    CHECK_MESSAGE(e.code == 0, e.err);
}

}  // TEST_SUITE
