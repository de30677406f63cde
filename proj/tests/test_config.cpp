#include "mixsa/common.hpp"
#include "mixsa/config.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace mixsa;

TEST_CASE("config documents") {
    const Config c = Config::parse("# defaults\nbackend = mock\nzeta=0.3\n\nzeta = 0.7\n");
    CHECK(c.get("backend") == "mock");
    CHECK(c.get("zeta") == "0.7");
    CHECK_FALSE(c.get("beta").has_value());
    CHECK(c.get_or("beta", "x") == "x");
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), Error);

    Config d = c;
    d.merge(Config::parse("zeta = 0.1\nalpha = 0.6\n"));
    CHECK(d.get("zeta") == "0.1");
    CHECK(d.get("backend") == "mock");
}

TEST_CASE("environment lookup") {
    const auto path = std::filesystem::temp_directory_path() / "mixsa_env.conf";
    std::ofstream(path) << "beta = 0.25\n";
    setenv(kConfigEnv, path.c_str(), 1);
    setenv(kWeightsEnv, "/models/x", 1);
    const Config c = Config::from_environment();
    CHECK(c.get("beta") == "0.25");
    CHECK(c.get("weights") == "/models/x");
    unsetenv(kConfigEnv);
    unsetenv(kWeightsEnv);
    std::filesystem::remove(path);
}

TEST_CASE("apply_params sets every field") {
    SketchJob job;
    apply_params({{"zeta", "0.5"},
                  {"beta", "0.04"},
                  {"alpha", "0.7"},
                  {"method", "canny"},
                  {"steps", "20"},
                  {"guidance", "5"},
                  {"seed", "9"},
                  {"resolution", "256"},
                  {"target_sites", "3,4"},
                  {"binarize_threshold", "200"},
                  {"bilateral", "off"},
                  {"contrast", "0.5"},
                  {"foreground", "alpha"},
                  {"msa", "off"},
                  {"dct", "false"},
                  {"initial_contour", "no"},
                  {"rcd", "on"}},
                 job);
    CHECK(job.mix.zeta == 0.5);
    CHECK(job.mix.beta == 0.04);
    CHECK(job.contour.alpha == 0.7);
    CHECK(job.contour.method == "canny");
    CHECK(job.steps == 20);
    CHECK(job.guidance == 5.0);
    CHECK(job.seed == 9);
    CHECK(job.resolution == 256);
    CHECK(job.mix.target_sites == std::set<int>{3, 4});
    CHECK(job.rcd.binarize_threshold == 200);
    CHECK_FALSE(job.rcd.bilateral.enabled);
    CHECK(job.rcd.contrast.enabled);
    CHECK(job.rcd.contrast.strength == 0.5);
    CHECK(job.foreground.enabled);
    CHECK_FALSE(job.ablation.msa);
    CHECK_FALSE(job.ablation.dct);
    CHECK_FALSE(job.ablation.initial_contour);
    CHECK(job.ablation.rcd);
}

TEST_CASE("echo round trips") {
    SketchJob job;
    job.mix.zeta = 0.1;
    job.ablation.dct = false;
    job.rcd.bilateral.spatial_sigma = 3;
    const auto echo = echo_params(job);
    CHECK(echo.at("zeta") == "0.1");
    CHECK(echo.at("dct") == "off");
    SketchJob back;
    apply_params(echo, back);
    CHECK(echo_params(back) == echo);
}

TEST_CASE("bad parameters") {
    SketchJob job;
    CHECK_THROWS_AS(apply_params({{"zeta", "abc"}}, job), Error);
    CHECK_THROWS_AS(apply_params({{"colour", "1"}}, job), Error);
    CHECK_NOTHROW(apply_params({{"colour", "1"}}, job, true));
    CHECK_THROWS_AS(apply_params({{"steps", "2.5"}}, job), Error);
    CHECK_THROWS_AS(parse_bool("maybe"), Error);
    CHECK(parse_double_list("z", "0, 0.5,1") == std::vector<double>{0, 0.5, 1});
}

TEST_CASE("adapters from config") {
    SketchPipeline pipe(make_backend("mock"));
    register_adapters(Config::parse("detector.teed = cp {input} {output}\nforeground.sal = cp {input} {output}\n"), pipe);
    CHECK(pipe.detectors().has("teed"));
    CHECK(pipe.masks().has("sal"));
}
