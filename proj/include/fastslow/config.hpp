#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastslow/experiments.hpp"

namespace fastslow {

struct SrbConfig {
    int N = 4096;
    int M = 0;
    double tail_tol = 1e-6;
    double fd_h = 1e-3;
    double coboundary_tol = 1e-3;
    double quantum = 1e-3;
    double power_tol = 1e-12;
    int power_max_iter = 10000;
};

struct PairConfig {
    std::optional<double> delta, c1, c2, D;
};

/// Fully resolved run configuration. An inline "system" takes precedence over "fixture".
struct ExperimentConfig {
    std::string fixture = "LIN";
    std::optional<nlohmann::json> system;
    std::vector<double> eps = {1e-3};
    std::size_t N = 1000;
    double T = 1.0;
    std::uint64_t seed = 7;
    unsigned threads = 1;
    int out_points = 33;
    std::vector<double> theta0;  // empty: 0.25 in every coordinate
    SrbConfig srb;
    double integrator_tol = 1e-12;
    PairConfig pairs;
    double slack_c = 1.0;
    int shadow_points = 100;
    double shadow_C = 1.0;
    double c_sharp = 10.0;
    int decompose_pairs = 25;
    int refine = 8;
    std::int64_t max_steps = 10'000'000;
    std::string output = "out";
    bool svg = false;
    bool dump = false;
};

/// Parses a config object; unknown keys at any level and wrong types raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

SystemPtr resolve_system(const ExperimentConfig& c);
SlowVec resolve_theta0(const ExperimentConfig& c, int d);
SrbOptions srb_options(const ExperimentConfig& c);
LimitOptions limit_options(const ExperimentConfig& c);
PairConstants pair_constants(const ExperimentConfig& c, const FastSlowSystem& sys);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& s);

}  // namespace fastslow
