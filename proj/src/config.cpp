#include "fastslow/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fastslow {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj[key];
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (v.is_number_float()) {
                const double d = v.get<double>();
                if (d != std::floor(d)) throw ConfigError("");
                out = static_cast<T>(d);
                return;
            }
            if (!v.is_number_integer()) throw ConfigError("");
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<long long>() < 0) throw ConfigError("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("");
        }
        out = v.get<T>();
    } catch (const ConfigError&) {
        throw ConfigError(where + "." + key + ": wrong type or value");
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type or value");
    }
}

std::vector<double> read_numbers(const json& v, const std::string& where) {
    std::vector<double> out;
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigError(where + ": expected a number or an array of numbers");
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(where + ": expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

void read_opt(const json& obj, const char* key, std::optional<double>& out, const std::string& where) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = obj[key].get<double>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    reject_unknown(j,
                   {"fixture", "system", "eps", "N", "T", "seed", "threads", "out_points", "theta0", "srb",
                    "integrator", "pairs", "tolerances", "shadow", "decompose", "max_steps", "output", "svg", "dump"},
                   "config");
    ExperimentConfig c;
    read(j, "fixture", c.fixture, "config");
    if (j.contains("system")) {
        c.system = j["system"];
        system_from_json(*c.system);  // validates
    } else {
        make_fixture(c.fixture);
    }
    if (j.contains("eps")) c.eps = read_numbers(j["eps"], "config.eps");
    read(j, "N", c.N, "config");
    read(j, "T", c.T, "config");
    read(j, "seed", c.seed, "config");
    read(j, "threads", c.threads, "config");
    read(j, "out_points", c.out_points, "config");
    if (j.contains("theta0")) c.theta0 = read_numbers(j["theta0"], "config.theta0");
    if (j.contains("srb")) {
        const json& s = j["srb"];
        reject_unknown(s, {"N", "M", "tail_tol", "fd_h", "coboundary_tol", "quantum", "power_tol", "power_max_iter"},
                       "config.srb");
        read(s, "N", c.srb.N, "config.srb");
        read(s, "M", c.srb.M, "config.srb");
        read(s, "tail_tol", c.srb.tail_tol, "config.srb");
        read(s, "fd_h", c.srb.fd_h, "config.srb");
        read(s, "coboundary_tol", c.srb.coboundary_tol, "config.srb");
        read(s, "quantum", c.srb.quantum, "config.srb");
        read(s, "power_tol", c.srb.power_tol, "config.srb");
        read(s, "power_max_iter", c.srb.power_max_iter, "config.srb");
    }
    if (j.contains("integrator")) {
        reject_unknown(j["integrator"], {"tol"}, "config.integrator");
        read(j["integrator"], "tol", c.integrator_tol, "config.integrator");
    }
    if (j.contains("pairs")) {
        const json& p = j["pairs"];
        reject_unknown(p, {"delta", "c1", "c2", "D"}, "config.pairs");
        read_opt(p, "delta", c.pairs.delta, "config.pairs");
        read_opt(p, "c1", c.pairs.c1, "config.pairs");
        read_opt(p, "c2", c.pairs.c2, "config.pairs");
        read_opt(p, "D", c.pairs.D, "config.pairs");
    }
    if (j.contains("tolerances")) {
        reject_unknown(j["tolerances"], {"slack_c"}, "config.tolerances");
        read(j["tolerances"], "slack_c", c.slack_c, "config.tolerances");
    }
    if (j.contains("shadow")) {
        const json& s = j["shadow"];
        reject_unknown(s, {"points", "C", "c_sharp"}, "config.shadow");
        read(s, "points", c.shadow_points, "config.shadow");
        read(s, "C", c.shadow_C, "config.shadow");
        read(s, "c_sharp", c.c_sharp, "config.shadow");
    }
    if (j.contains("decompose")) {
        const json& s = j["decompose"];
        reject_unknown(s, {"pairs", "refine"}, "config.decompose");
        read(s, "pairs", c.decompose_pairs, "config.decompose");
        read(s, "refine", c.refine, "config.decompose");
    }
    read(j, "max_steps", c.max_steps, "config");
    read(j, "output", c.output, "config");
    read(j, "svg", c.svg, "config");
    read(j, "dump", c.dump, "config");

    if (c.eps.empty()) throw ConfigError("config.eps: at least one value required");
    for (double e : c.eps)
        if (!(e >= 0.0)) throw ConfigError("config.eps: values must be >= 0");
    if (c.N < 1) throw ConfigError("config.N: must be >= 1");
    if (!(c.T > 0.0)) throw ConfigError("config.T: must be positive");
    if (c.out_points < 2) throw ConfigError("config.out_points: must be >= 2");
    if (c.srb.N < 16) throw ConfigError("config.srb.N: must be >= 16");
    if (!(c.srb.quantum > 0.0)) throw ConfigError("config.srb.quantum: must be positive");
    if (!(c.integrator_tol > 0.0)) throw ConfigError("config.integrator.tol: must be positive");
    if (c.shadow_points < 1 || c.decompose_pairs < 1 || c.refine < 1)
        throw ConfigError("config: shadow.points, decompose.pairs and decompose.refine must be >= 1");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const SlowVec th = resolve_theta0(c, sys->dim());
    json j;
    j["fixture"] = c.fixture;
    j["system"] = sys->to_json();
    j["eps"] = c.eps;
    j["N"] = c.N;
    j["T"] = c.T;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["out_points"] = c.out_points;
    j["theta0"] = std::vector<double>(th.data(), th.data() + th.size());
    j["srb"] = {{"N", c.srb.N},
                {"M", c.srb.M},
                {"tail_tol", c.srb.tail_tol},
                {"fd_h", c.srb.fd_h},
                {"coboundary_tol", c.srb.coboundary_tol},
                {"quantum", c.srb.quantum},
                {"power_tol", c.srb.power_tol},
                {"power_max_iter", c.srb.power_max_iter}};
    j["integrator"] = {{"tol", c.integrator_tol}};
    const PairConstants k = pair_constants(c, *sys);
    j["pairs"] = {{"delta", k.delta}, {"c1", k.c1}, {"c2", k.c2}, {"D", k.D}};
    j["tolerances"] = {{"slack_c", c.slack_c}};
    j["shadow"] = {{"points", c.shadow_points}, {"C", c.shadow_C}, {"c_sharp", c.c_sharp}};
    j["decompose"] = {{"pairs", c.decompose_pairs}, {"refine", c.refine}};
    j["max_steps"] = c.max_steps;
    j["output"] = c.output;
    j["svg"] = c.svg;
    j["dump"] = c.dump;
    return j;
}

SystemPtr resolve_system(const ExperimentConfig& c) {
    if (c.system) return system_from_json(*c.system);
    return make_fixture(c.fixture);
}

SlowVec resolve_theta0(const ExperimentConfig& c, int d) {
    if (c.theta0.empty()) return SlowVec::Constant(d, 0.25);
    if (static_cast<int>(c.theta0.size()) != d) throw ConfigError("config.theta0: length must equal the slow dimension");
    SlowVec t(d);
    for (int j = 0; j < d; ++j) t[j] = c.theta0[j];
    return t;
}

SrbOptions srb_options(const ExperimentConfig& c) {
    SrbOptions o;
    o.N = c.srb.N;
    o.M = c.srb.M;
    o.tail_tol = c.srb.tail_tol;
    o.fd_h = c.srb.fd_h;
    o.coboundary_tol = c.srb.coboundary_tol;
    o.power_tol = c.srb.power_tol;
    o.power_max_iter = c.srb.power_max_iter;
    return o;
}

LimitOptions limit_options(const ExperimentConfig& c) {
    LimitOptions o;
    o.srb = srb_options(c);
    o.quantum = c.srb.quantum;
    o.tol = c.integrator_tol;
    return o;
}

PairConstants pair_constants(const ExperimentConfig& c, const FastSlowSystem& sys) {
    PairConstants k = default_constants(sys);
    if (c.pairs.delta) k.delta = *c.pairs.delta;
    if (c.pairs.c1) k.c1 = *c.pairs.c1;
    if (c.pairs.c2) k.c2 = *c.pairs.c2;
    if (c.pairs.D) k.D = *c.pairs.D;
    return k;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace fastslow
