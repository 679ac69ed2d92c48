#include "fastslow/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "fastslow/config.hpp"
#include "fastslow/report.hpp"

namespace fastslow {

using nlohmann::json;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

const std::map<std::string, std::pair<std::string, double>>& catalogue() {
    static const std::map<std::string, std::pair<std::string, double>> c = {
        {"1", {"SRB exactness (LIN, N=300)", 1.0}},
        {"2", {"Green-Kubo value (LIN)", 5.0}},
        {"3", {"Coboundary degeneracy (CBD)", 5.0}},
        {"4", {"Averaging error scaling (CPL)", 300.0}},
        {"5", {"CLT variance (LIN)", 300.0}},
        {"6", {"CLT covariance with drift coupling (CPL)", 600.0}},
        {"7", {"Moment bounds (LIN)", 0.0}},
        {"8", {"Standard-pair pushforward identity (CPL)", 0.0}},
        {"9", {"Shadowing (CPL)", 0.0}},
        {"10", {"Martingale residuals (CPL)", 600.0}},
        {"11", {"Determinism across thread counts", 0.0}},
        {"cbd-clt", {"CLT variance of the degenerate limit (CBD)", 0.0}},
        {"drift-average", {"Deterministic drift averaging error (DRIFT)", 0.0}},
    };
    return c;
}

}  // namespace

std::vector<std::string> criterion_ids() { return {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11"}; }

std::vector<std::string> fixture_suite(const std::string& fixture) {
    if (fixture == "LIN") return {"1", "2", "5", "7"};
    if (fixture == "CBD") return {"3", "cbd-clt"};
    if (fixture == "CPL") return {"4", "6", "8", "9", "10"};
    if (fixture == "DRIFT") return {"drift-average"};
    throw ConfigError("verify-all: no suite for fixture '" + fixture + "'");
}

AcceptanceRunner::AcceptanceRunner(AcceptanceOptions opt) : opt_(std::move(opt)) {}

std::size_t AcceptanceRunner::scaled(std::size_t N) const {
    return std::max<std::size_t>(100, static_cast<std::size_t>(std::llround(static_cast<double>(N) * opt_.scale)));
}

const LimitModel& AcceptanceRunner::limit(const std::string& fixture) {
    auto it = limits_.find(fixture);
    if (it != limits_.end()) return it->second;
    const SystemPtr sys = make_fixture(fixture);
    const SlowVec th0 = SlowVec::Constant(sys->dim(), 0.25);
    return limits_.emplace(fixture, build_limit(sys, th0, 1.0, opt_.limit, uniform_times(1.0, 33))).first->second;
}

const Ensemble& AcceptanceRunner::ensemble(const std::string& fixture, double eps, std::size_t N, int points) {
    std::ostringstream key;
    key << fixture << '|' << num(eps) << '|' << N << '|' << points;
    auto it = ensembles_.find(key.str());
    if (it != ensembles_.end()) return *it->second;
    const LimitModel& lim = limit(fixture);
    EnsembleOptions eo;
    eo.eps = eps;
    eo.N = N;
    eo.out_times = uniform_times(1.0, points);
    eo.seed = opt_.seed;
    eo.threads = opt_.threads;
    const StandardFamily fam = StandardFamily::single(default_pair(lim.sys->dim(), eps, &lim.avg->theta0));
    auto e = std::make_unique<Ensemble>(run_ensemble(lim.sys, fam, *lim.avg, eo));
    return *ensembles_.emplace(key.str(), std::move(e)).first->second;
}

CriterionResult AcceptanceRunner::run(const std::string& id) {
    const auto& cat = catalogue();
    auto it = cat.find(id);
    if (it == cat.end()) throw ConfigError("unknown acceptance criterion '" + id + "'");
    CriterionResult r;
    r.id = id;
    r.title = it->second.first;
    r.budget = it->second.second;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        evaluate(id, r);
    } catch (const Error& e) {
        r.pass = false;
        r.summary = std::string("error: ") + e.what();
        r.detail = json{{"error", e.what()}};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CriterionResult> AcceptanceRunner::run_all(const std::vector<std::string>& ids) {
    std::vector<CriterionResult> out;
    for (const auto& id : ids) out.push_back(run(id));
    return out;
}

void AcceptanceRunner::evaluate(const std::string& id, CriterionResult& r) {
    const SlowVec th1 = SlowVec::Constant(1, 0.25);
    if (id == "1") {
        const SystemPtr sys = make_fixture("LIN");
        const SRBDensity d = srb_density(ulam_operator(*sys, th1, 300));
        const double err = (d.rho.array() - 1.0).abs().maxCoeff();
        r.pass = err <= 1e-10;
        r.summary = "sup |rho - 1| = " + num(err) + " (limit 1e-10)";
        r.detail = to_json(d);
    } else if (id == "2" || id == "3") {
        const SystemPtr sys = make_fixture(id == "2" ? "LIN" : "CBD");
        SrbOptions so = opt_.limit.srb;
        so.jacobian = false;
        const DiffusionContext dc = diffusion_matrix(*sys, th1, so);
        const double s2 = dc.sigma2(0, 0);
        if (id == "2") {
            r.pass = std::abs(s2 - 0.5) <= 1e-3;
            r.summary = "sigma2 = " + num(s2) + " (target 0.5 +- 1e-3)";
        } else {
            r.pass = s2 <= 1e-3 && dc.coboundary;
            r.summary = "sigma2 = " + num(s2) + " (limit 1e-3), coboundary flag " + (dc.coboundary ? "set" : "not set");
        }
        r.detail = to_json(dc);
    } else if (id == "4") {
        std::vector<const Ensemble*> es;
        for (double eps : {4e-3, 1e-3, 2.5e-4}) es.push_back(&ensemble("CPL", eps, scaled(2000), 33));
        const AveragingReport rep = averaging_error(es, 0.35, 0.65);
        r.pass = rep.pass;
        r.summary = "slope " + num(rep.fit.slope) + " (band [0.35, 0.65]), monotone " + (rep.monotone ? "yes" : "no");
        r.detail = to_json(rep);
    } else if (id == "5" || id == "6" || id == "cbd-clt") {
        const std::string fx = id == "5" ? "LIN" : id == "6" ? "CPL" : "CBD";
        const LimitModel& lim = limit(fx);
        const Ensemble& e = ensemble(fx, 1e-3, scaled(10000), 33);
        CltTolerances tol;
        tol.slack_c = opt_.slack_c;
        if (id == "6") tol.rel_cov = 0.10;
        if (id == "cbd-clt") tol.abs_var = 1e-2;
        const CltReport rep = clt_test(e, *lim.cov, tol);
        const CltRow& fin = rep.rows.back();
        if (id == "5") {
            const double v = fin.cov(0, 0);
            r.pass = rep.cov_ok && rep.skew_ok && rep.kurt_ok;
            r.summary = "Var zeta(1) = " + num(v) + " (rel err " + num(fin.rel_error) + "), skew " +
                        num(fin.skewness[0]) + ", excess kurtosis " + num(fin.excess_kurtosis[0]);
        } else if (id == "6") {
            r.pass = rep.cov_ok && lim.cov->max_route_gap <= 1e-8;
            r.summary = "Sigma(1) = " + num(fin.Sigma(0, 0)) + ", empirical " + num(fin.cov(0, 0)) + ", rel err " +
                        num(fin.rel_error) + " (limit 0.1), route gap " + num(lim.cov->max_route_gap);
        } else {
            r.pass = rep.cov_ok;
            r.summary = "Var zeta(1) = " + num(fin.cov(0, 0)) + " (limit 1e-2)";
        }
        r.detail = {{"clt", to_json(rep)}, {"limit", to_json(*lim.cov, {0.0, 0.5, 1.0})}};
    } else if (id == "7") {
        const Ensemble& e = ensemble("LIN", 1e-3, scaled(10000), 257);
        const MomentReport rep = moment_scaling(e, 16.0, 0.4, 0.6, 1.8);
        r.pass = rep.pass;
        r.summary = "ratio2 in [" + num(rep.ratio2_lo) + ", " + num(rep.ratio2_hi) + "], fourth-moment exponent " +
                    num(rep.fit4.slope);
        r.detail = to_json(rep);
    } else if (id == "8") {
        const SystemPtr sys = make_fixture("CPL");
        const PushforwardStudy st =
            pushforward_study(*sys, 1e-3, 25, opt_.seed, default_constants(*sys), opt_.threads, 8);
        r.pass = st.max_error <= 1e-7 && st.revalidated;
        r.summary = "max error " + num(st.max_error) + " (limit 1e-7), revalidated " + (st.revalidated ? "yes" : "no");
        r.detail = to_json(st);
    } else if (id == "9") {
        const SystemPtr sys = make_fixture("CPL");
        const ShadowStudy a = shadow_study(*sys, 1e-4, 100, opt_.seed, {}, opt_.threads);
        const ShadowStudy b = shadow_study(*sys, 5e-5, 100, opt_.seed, {}, opt_.threads);
        const double ratio = a.max_shadow_constant > 0.0 ? b.max_shadow_constant / a.max_shadow_constant : 0.0;
        const bool exact = a.failures == 0 && b.failures == 0 && a.max_terminal_gap <= 1e-12 &&
                           b.max_terminal_gap <= 1e-12 && a.max_residual <= 1e-12 && b.max_residual <= 1e-12;
        const bool stable = ratio >= 0.5 && ratio <= 2.0;
        r.pass = exact && stable && a.derivative_ok && b.derivative_ok;
        r.summary = "terminal gap " + num(std::max(a.max_terminal_gap, b.max_terminal_gap)) + ", constants " +
                    num(a.max_shadow_constant) + " / " + num(b.max_shadow_constant) + ", derivative exponent " +
                    num(std::max(a.max_derivative_exponent, b.max_derivative_exponent));
        r.detail = {{"eps_1e-4", to_json(a)}, {"eps_5e-5", to_json(b)}, {"constant_ratio", ratio}};
    } else if (id == "10") {
        const LimitModel& lim = limit("CPL");
        const Ensemble& e = ensemble("CPL", 1e-3, scaled(10000), 33);
        const int d = lim.sys->dim();
        std::vector<Conditioning> conds = {
            {"one@0.25", {{8, constant_weight()}}},
            {"bump@0.25", {{8, periodic_bump(e.theta_bar[8], 20.0)}}},
            {"cosine@0.125*bump@0.375",
             {{4, cosine_weight(e.theta_bar[4], 0.5)}, {12, periodic_bump(e.theta_bar[12], 20.0)}}},
        };
        std::vector<TestFn> fns = {coordinate_fn(d, 0), square_norm_fn(d), cos_fn(SlowVec::Ones(d)),
                                   bump_fn(SlowVec::Zero(d), 2.0)};
        json rows = json::array();
        r.pass = true;
        int passed = 0;
        for (const auto& c : conds)
            for (const auto& A : fns) {
                const ResidualReport rep = martingale_residual(e, A, c, 16, 32, lim, opt_.slack_c);
                r.pass = r.pass && rep.pass;
                passed += rep.pass ? 1 : 0;
                rows.push_back(to_json(rep));
            }
        r.summary = std::to_string(passed) + " of " + std::to_string(rows.size()) + " residuals within 3 se + slack";
        r.detail = {{"residuals", rows}};
    } else if (id == "11") {
        AcceptanceOptions o = opt_;
        o.scale = opt_.determinism_scale;
        std::vector<std::string> ids = {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"};
        o.threads = 1;
        const std::string a = acceptance_report(AcceptanceRunner(o).run_all(ids)).dump(2);
        o.threads = 4;
        const std::string b = acceptance_report(AcceptanceRunner(o).run_all(ids)).dump(2);
        r.pass = a == b;
        r.summary = std::string("threads 1 vs 4: ") + (r.pass ? "identical" : "different") + " (" +
                    std::to_string(a.size()) + " bytes)";
        r.detail = {{"identical", r.pass}, {"bytes", a.size()}, {"fnv1a", fnv1a(a)}, {"scale", o.scale}};
    } else if (id == "drift-average") {
        const LimitModel& lim = limit("DRIFT");
        json rows = json::array();
        r.pass = true;
        for (double eps : {1e-2, 1e-3}) {
            const Ensemble& e = ensemble("DRIFT", eps, 100, 33);
            double worst = 0.0;
            for (std::size_t k = 0; k < e.N; ++k)
                for (std::size_t i = 0; i < e.nt(); ++i)
                    worst = std::max(worst, (e.theta_at(k, i) - lim.avg->at(e.times[i])).norm());
            r.pass = r.pass && worst <= eps;
            rows.push_back({{"eps", eps}, {"max_sup_error", worst}});
        }
        r.summary = r.pass ? "sup error <= eps at every output time" : "sup error exceeds eps";
        r.detail = {{"rows", rows}};
    }
}

json acceptance_report(const std::vector<CriterionResult>& results) {
    json arr = json::array();
    bool all = true;
    for (const auto& r : results) {
        arr.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"summary", r.summary}, {"detail", r.detail}});
        all = all && r.pass;
    }
    return {{"criteria", arr}, {"pass", all}};
}

}  // namespace fastslow
