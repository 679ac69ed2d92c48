#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "fastslow/config.hpp"
#include "fastslow/report.hpp"

using namespace fastslow;
using nlohmann::json;

TEST_CASE("empty config yields defaults") {
    const ExperimentConfig c = config_from_json(json::object());
    CHECK(c.fixture == "LIN");
    CHECK(c.eps == std::vector<double>{1e-3});
    CHECK(c.N == 1000);
    CHECK(c.srb.N == 4096);
    CHECK(c.slack_c == 1.0);
    CHECK(resolve_theta0(c, 2) == SlowVec::Constant(2, 0.25));
}

TEST_CASE("unknown keys and wrong types are rejected at every level") {
    CHECK_THROWS_AS(config_from_json({{"epsilon", 0.1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"srb", {{"NN", 10}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"tolerances", {{"slack", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"N", "many"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"eps", "small"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"fixture", "NOPE"}}), ConfigError);
}

TEST_CASE("scalar or list eps and nested sections parse") {
    const ExperimentConfig c = config_from_json(
        {{"fixture", "CPL"}, {"eps", {4e-3, 1e-3}}, {"srb", {{"N", 2048}, {"quantum", 2e-3}}},
         {"tolerances", {{"slack_c", 2.0}}}, {"pairs", {{"delta", 0.08}}}, {"theta0", {0.4}}});
    CHECK(c.eps == std::vector<double>{4e-3, 1e-3});
    CHECK(srb_options(c).N == 2048);
    CHECK(limit_options(c).quantum == 2e-3);
    CHECK(c.slack_c == 2.0);
    const auto sys = resolve_system(c);
    CHECK(sys->name() == "CPL");
    CHECK(pair_constants(c, *sys).delta == 0.08);
    CHECK(resolve_theta0(c, 1)[0] == 0.4);
    CHECK(config_from_json({{"eps", 0.01}}).eps == std::vector<double>{0.01});
}

TEST_CASE("inline system takes precedence over the fixture") {
    const json sys = {{"name", "mine"},
                      {"d", 1},
                      {"degree", 4},
                      {"omega", json::array({json::array({{{"c", 0.5}, {"kx", 1}}})})}};
    const ExperimentConfig c = config_from_json({{"fixture", "CPL"}, {"system", sys}});
    CHECK(resolve_system(c)->name() == "mine");
    CHECK(resolve_system(c)->degree() == 4);
}

TEST_CASE("config round trip and hashing") {
    const ExperimentConfig c = config_from_json({{"fixture", "CBD"}, {"N", 123}, {"seed", 9}});
    const json j = config_to_json(c);
    const ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.N == 123);
    CHECK(back.seed == 9);
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("load_config reads files and reports malformed input") {
    const std::string path = "test_config_tmp.json";
    {
        std::ofstream(path) << R"({"fixture": "DRIFT", "T": 0.5})";
    }
    const ExperimentConfig c = load_config(path);
    CHECK(c.fixture == "DRIFT");
    CHECK(c.T == 0.5);
    {
        std::ofstream(path) << "{ not json";
    }
    CHECK_THROWS_AS(load_config(path), ConfigError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_config("does_not_exist.json"), ConfigError);
}

TEST_CASE("floats print with 17 significant digits") {
    CHECK(std::stod(fmt17(0.1)) == 0.1);
    CHECK(fmt17(0.1) == "0.10000000000000001");
}
