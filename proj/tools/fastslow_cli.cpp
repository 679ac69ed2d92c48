#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include "fastslow/acceptance.hpp"
#include "fastslow/config.hpp"
#include "fastslow/report.hpp"

using namespace fastslow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Flags {
    std::string config;
    std::optional<std::string> fixture;
    std::vector<double> eps;
    std::optional<std::size_t> n;
    std::optional<double> T;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
    std::optional<int> points;
    std::optional<int> srb_n;
    std::vector<double> theta0;
    bool svg = false;
    bool dump = false;
    std::vector<std::string> criteria;
    double scale = 1.0;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--fixture", f.fixture, "LIN, CBD, CPL or DRIFT");
    sub->add_option("--eps", f.eps, "eps values");
    sub->add_option("--n", f.n, "trajectories");
    sub->add_option("--T", f.T, "horizon");
    sub->add_option("--seed", f.seed, "root seed");
    sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--points", f.points, "output times");
    sub->add_option("--srb-n", f.srb_n, "Ulam cells");
    sub->add_option("--theta0", f.theta0, "initial slow variable");
    sub->add_flag("--svg", f.svg, "write SVG plots");
    sub->add_flag("--dump", f.dump, "write raw ensemble CSV");
}

ExperimentConfig resolve(const Flags& f) {
    ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
    if (f.fixture) {
        make_fixture(*f.fixture);
        c.fixture = *f.fixture;
        c.system.reset();
    }
    if (!f.eps.empty()) c.eps = f.eps;
    if (f.n) c.N = *f.n;
    if (f.T) c.T = *f.T;
    if (f.seed) c.seed = *f.seed;
    if (f.threads) c.threads = *f.threads;
    if (f.out) c.output = *f.out;
    if (f.points) c.out_points = *f.points;
    if (f.srb_n) c.srb.N = *f.srb_n;
    if (!f.theta0.empty()) c.theta0 = f.theta0;
    if (f.svg) c.svg = true;
    if (f.dump) c.dump = true;
    return config_from_json(config_to_json(c));  // revalidates after overrides
}

json inputs(const ExperimentConfig& c, const FastSlowSystem& sys) {
    return {{"system", sys.name()}, {"eps", c.eps}, {"N", c.N}, {"T", c.T}, {"seed", c.seed},
            {"out_points", c.out_points}, {"srb_N", c.srb.N}};
}

std::string path(const ExperimentConfig& c, const std::string& name) { return (fs::path(c.output) / name).string(); }

std::string mat_str(const SlowMat& m) {
    std::ostringstream os;
    os.precision(12);
    if (m.size() == 1) {
        os << m(0, 0);
        return os.str();
    }
    os << '[';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << (i ? "; " : "");
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
    }
    os << ']';
    return os.str();
}

int cmd_srb(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const SlowVec th = resolve_theta0(c, sys->dim());
    const SrbOptions so = srb_options(c);
    const SRBDensity d = srb_density(ulam_operator(*sys, th, so.N), so.power_tol, so.power_max_iter);
    const SlowVec w = average_drift(*sys, d);
    json j = {{"inputs", inputs(c, *sys)}, {"density", to_json(d)}, {"omega_bar", to_json(w)}};
    write_json(path(c, "srb.json"), j);
    write_density_csv(path(c, "density.csv"), d);
    std::cout << text_table({"quantity", "value"},
                            {{"cells", std::to_string(d.N())},
                             {"iterations", std::to_string(d.iterations)},
                             {"residual", fmt17(d.residual)},
                             {"sup |rho - 1|", fmt17((d.rho.array() - 1.0).abs().maxCoeff())},
                             {"omega_bar", mat_str(SlowMat(w))}});
    return 0;
}

int cmd_sigma(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const SlowVec th = resolve_theta0(c, sys->dim());
    const DiffusionContext dc = diffusion_matrix(*sys, th, srb_options(c));
    write_json(path(c, "sigma.json"), {{"inputs", inputs(c, *sys)}, {"diffusion", to_json(dc)}});
    write_autocov_csv(path(c, "autocov.csv"), dc);
    std::cout << "sigma2 = " << mat_str(dc.sigma2) << " (truncation M = " << dc.M << ", tail " << dc.tail_estimate
              << ", coboundary " << (dc.coboundary ? "yes" : "no") << ")\n";
    return 0;
}

void limit_outputs(const ExperimentConfig& c, const LimitModel& lim, const std::vector<double>& times) {
    write_limit_csv(path(c, "limit.csv"), *lim.cov, times);
    if (!c.svg) return;
    const int d = lim.sys->dim();
    std::vector<Series> th, sg;
    for (int j = 0; j < d; ++j) {
        Series a{"theta_bar_" + std::to_string(j), times, {}}, b{"Sigma_" + std::to_string(j) + std::to_string(j), times, {}};
        for (double t : times) {
            const CovarianceState s = lim.cov->at(t);
            a.y.push_back(s.theta_bar[j]);
            b.y.push_back(s.Sigma(j, j));
        }
        th.push_back(a);
        sg.push_back(b);
    }
    write_svg(path(c, "theta_bar.svg"), "averaged trajectory", th);
    write_svg(path(c, "sigma.svg"), "limit covariance", sg);
}

Ensemble make_ensemble(const ExperimentConfig& c, const LimitModel& lim, double eps) {
    EnsembleOptions eo;
    eo.eps = eps;
    eo.N = c.N;
    eo.out_times = uniform_times(c.T, c.out_points);
    eo.seed = c.seed;
    eo.threads = c.threads;
    eo.max_steps = c.max_steps;
    return run_ensemble(lim.sys, StandardFamily::single(default_pair(lim.sys->dim(), eps, &lim.avg->theta0)), *lim.avg,
                        eo);
}

int cmd_average(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const auto times = uniform_times(c.T, c.out_points);
    const LimitModel lim = build_limit(sys, resolve_theta0(c, sys->dim()), c.T, limit_options(c), times);
    std::vector<Ensemble> es;
    for (double eps : c.eps) es.push_back(make_ensemble(c, lim, eps));
    json j = {{"inputs", inputs(c, *sys)}, {"limit", to_json(*lim.cov, times)}};
    std::vector<std::vector<std::string>> rows;
    json per = json::array();
    for (const auto& e : es) {
        const Estimate s = sup_error(e);
        per.push_back({{"eps", e.eps}, {"sup_error", to_json(s)}});
        rows.push_back({fmt17(e.eps), fmt17(s.value), fmt17(s.std_error)});
    }
    j["sup_error"] = per;
    if (es.size() >= 3) {
        std::vector<const Ensemble*> ptr;
        for (const auto& e : es) ptr.push_back(&e);
        const AveragingReport rep = averaging_error(ptr);
        j["averaging"] = to_json(rep);
        std::cout << "fitted exponent " << rep.fit.slope << ", monotone " << (rep.monotone ? "yes" : "no") << '\n';
    }
    write_json(path(c, "average.json"), j);
    limit_outputs(c, lim, times);
    std::cout << text_table({"eps", "E sup |Theta - Theta_bar|", "se"}, rows);
    return 0;
}

int cmd_decompose(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const PairConstants k = pair_constants(c, *sys);
    json rows = json::array();
    std::vector<std::vector<std::string>> text;
    bool ok = true;
    for (double eps : c.eps) {
        const ConstantCheck chk = check_constants(*sys, eps, k);
        const PushforwardStudy st = pushforward_study(*sys, eps, static_cast<std::size_t>(c.decompose_pairs), c.seed, k,
                                                      c.threads, c.refine);
        ok = ok && st.revalidated;
        rows.push_back({{"constants_check",
                         {{"Lambda", chk.Lambda},
                          {"margin_c1", chk.margin_c1},
                          {"margin_D", chk.margin_D},
                          {"margin_c2", chk.margin_c2},
                          {"ok", chk.ok}}},
                        {"study", to_json(st)}});
        text.push_back({fmt17(eps), std::to_string(st.output_pairs), fmt17(st.max_error), st.revalidated ? "yes" : "no"});
    }
    write_json(path(c, "decompose.json"),
               {{"inputs", inputs(c, *sys)},
                {"constants", {{"delta", k.delta}, {"c1", k.c1}, {"c2", k.c2}, {"D", k.D}}},
                {"runs", rows}});
    std::cout << text_table({"eps", "output pairs", "max |identity error|", "revalidated"}, text);
    return ok ? 0 : 3;
}

int cmd_shadow(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    ShadowOptions so;
    so.C = c.shadow_C;
    so.c_sharp = c.c_sharp;
    json rows = json::array();
    std::vector<std::vector<std::string>> text;
    for (double eps : c.eps) {
        const ShadowStudy st = shadow_study(*sys, eps, static_cast<std::size_t>(c.shadow_points), c.seed, so, c.threads);
        rows.push_back(to_json(st));
        text.push_back({fmt17(eps), std::to_string(st.n), fmt17(st.max_terminal_gap), fmt17(st.max_shadow_constant),
                        fmt17(st.max_derivative_exponent), std::to_string(st.failures)});
    }
    write_json(path(c, "shadow.json"), {{"inputs", inputs(c, *sys)}, {"runs", rows}});
    std::cout << text_table({"eps", "n", "terminal gap", "shadow constant", "derivative exponent", "failures"}, text);
    return 0;
}

int cmd_fluctuate(const ExperimentConfig& c) {
    const SystemPtr sys = resolve_system(c);
    const int d = sys->dim();
    const auto times = uniform_times(c.T, c.out_points);
    const LimitModel lim = build_limit(sys, resolve_theta0(c, d), c.T, limit_options(c), times);
    const double eps = c.eps.front();
    const Ensemble e = make_ensemble(c, lim, eps);
    CltTolerances tol;
    tol.slack_c = c.slack_c;
    const CltReport clt = clt_test(e, *lim.cov, tol);
    const MomentReport mom = moment_scaling(e);
    json gen = json::array();
    for (const auto& A : builtin_test_functions(d)) {
        gen.push_back(to_json(generator_residual(e, A, Variant::Averaged, lim, c.slack_c, c.threads)));
        gen.push_back(to_json(generator_residual(e, A, Variant::Fluctuation, lim, c.slack_c, c.threads)));
    }
    json mart = json::array();
    const std::size_t last = e.nt() - 1;
    const std::size_t s_idx = last / 2, i1 = last / 4, i0 = last / 8, i2 = (3 * last) / 8;
    if (i0 >= 1 && s_idx > i2) {
        const std::vector<Conditioning> conds = {
            {"one", {{i1, constant_weight()}}},
            {"bump", {{i1, periodic_bump(e.theta_bar[i1], 20.0)}}},
            {"cosine*bump", {{i0, cosine_weight(e.theta_bar[i0], 0.5)}, {i2, periodic_bump(e.theta_bar[i2], 20.0)}}},
        };
        for (const auto& cd : conds)
            for (const auto& A : {coordinate_fn(d, 0), square_norm_fn(d), cos_fn(SlowVec::Ones(d)),
                                  bump_fn(SlowVec::Zero(d), 2.0)})
                mart.push_back(to_json(martingale_residual(e, A, cd, s_idx, last, lim, c.slack_c)));
    }
    write_json(path(c, "fluctuate.json"), {{"inputs", inputs(c, *sys)},
                                           {"limit", to_json(*lim.cov, times)},
                                           {"clt", to_json(clt)},
                                           {"moments", to_json(mom)},
                                           {"generator_residuals", gen},
                                           {"martingale_residuals", mart}});
    limit_outputs(c, lim, times);
    if (c.dump) write_ensemble_csv(path(c, "ensemble.csv"), e);
    if (c.svg) {
        Series emp{"empirical Var zeta_0", times, {}}, ana{"Sigma_00", times, {}};
        for (const auto& row : clt.rows) {
            emp.y.push_back(row.cov(0, 0));
            ana.y.push_back(row.Sigma(0, 0));
        }
        write_svg(path(c, "variance.svg"), "empirical vs analytic variance", {emp, ana});
    }
    const CltRow& fin = clt.rows.back();
    std::cout << text_table({"t", "empirical cov", "Sigma", "rel error", "skewness", "excess kurtosis"},
                            {{fmt17(fin.t), mat_str(fin.cov), mat_str(fin.Sigma), fmt17(fin.rel_error),
                              fmt17(fin.skewness[0]), fmt17(fin.excess_kurtosis[0])}});
    return 0;
}

int cmd_verify(const ExperimentConfig& c, const Flags& f) {
    AcceptanceOptions o;
    o.threads = c.threads;
    o.seed = c.seed;
    o.scale = f.scale;
    o.slack_c = c.slack_c;
    o.limit = limit_options(c);
    std::vector<std::string> ids = f.criteria;
    if (ids.empty()) ids = f.fixture ? fixture_suite(*f.fixture) : criterion_ids();
    AcceptanceRunner runner(o);
    std::vector<CriterionResult> res;
    json timings = json::array();
    bool ok = true;
    for (const auto& id : ids) {
        const CriterionResult r = runner.run(id);
        const bool pass = r.pass && r.within_budget();
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << r.id << ": " << r.title << " - " << r.summary;
        if (!r.within_budget()) std::cout << " [over budget: " << r.seconds << " s > " << r.budget << " s]";
        std::cout << std::endl;
        timings.push_back({{"id", r.id}, {"seconds", r.seconds}, {"budget", r.budget}, {"within_budget", r.within_budget()}});
        res.push_back(r);
    }
    write_json(path(c, "verify.json"), acceptance_report(res));
    write_json(path(c, "timings.json"), timings);
    return ok ? 0 : 1;
}

std::string status_name(int code) {
    switch (code) {
        case 0: return "ok";
        case 1: return "acceptance_failure";
        case 2: return "config_error";
        case 3: return "numerical_error";
        default: return "error";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for averaging and fluctuations of fast-slow maps"};
    app.require_subcommand(1);
    Flags f;
    std::vector<CLI::App*> subs;
    const std::pair<const char*, const char*> commands[] = {
        {"srb", "invariant density of the frozen map"},
        {"sigma", "averaged drift and Green-Kubo diffusion matrix"},
        {"average", "averaged trajectory and averaging error over eps"},
        {"decompose", "standard-pair pushforward study"},
        {"shadow", "shadowing study"},
        {"fluctuate", "fluctuation ensemble, CLT and martingale checks"},
        {"verify-all", "acceptance checks"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* s = app.add_subcommand(name, help);
        add_common(s, f);
        subs.push_back(s);
    }
    subs.back()->add_option("--criteria", f.criteria, "criterion ids to run");
    subs.back()->add_option("--scale", f.scale, "Monte Carlo sample-size scale");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    std::string command;
    for (CLI::App* s : subs)
        if (s->parsed()) command = s->get_name();

    const auto t0 = std::chrono::steady_clock::now();
    int code = 0;
    std::string message;
    ExperimentConfig cfg;
    if (f.out) cfg.output = *f.out;
    bool have_cfg = false;
    try {
        cfg = resolve(f);
        have_cfg = true;
        fs::create_directories(cfg.output);
        write_json(path(cfg, "config.json"), config_to_json(cfg));
        if (command == "srb") code = cmd_srb(cfg);
        else if (command == "sigma") code = cmd_sigma(cfg);
        else if (command == "average") code = cmd_average(cfg);
        else if (command == "decompose") code = cmd_decompose(cfg);
        else if (command == "shadow") code = cmd_shadow(cfg);
        else if (command == "fluctuate") code = cmd_fluctuate(cfg);
        else code = cmd_verify(cfg, f);
    } catch (const ConfigError& e) {
        code = 2;
        message = e.what();
    } catch (const PreconditionError& e) {
        code = 2;
        message = e.what();
    } catch (const NumericalError& e) {
        code = 3;
        message = e.what();
    } catch (const std::exception& e) {
        code = 3;
        message = e.what();
    }
    if (!message.empty()) std::cerr << "error: " << message << '\n';

    json manifest = {{"command", command},
                     {"version", kVersion},
                     {"compiler", __VERSION__},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"boost", BOOST_LIB_VERSION},
                     {"wall_time_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                     {"exit_code", code},
                     {"status", status_name(code)},
                     {"message", message}};
    json args = json::array();
    for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
    manifest["argv"] = args;
    if (have_cfg) {
        std::ostringstream h;
        h << std::hex << fnv1a(config_to_json(cfg).dump());
        manifest["config_hash"] = h.str();
    }
    try {
        fs::create_directories(cfg.output);
        write_json(path(cfg, "manifest.json"), manifest);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write manifest: " << e.what() << '\n';
    }
    return code;
}
