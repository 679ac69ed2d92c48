#include "doctest.h"

#include <cmath>

#include "fastslow/experiments.hpp"
#include "helpers.hpp"

using namespace fastslow;
using fastslow::testing::vec;

namespace {

LimitOptions fast_limit() {
    LimitOptions o;
    o.srb.N = 1024;
    return o;
}

struct Fixture {
    LimitModel lim;
    Ensemble ens;
};

Fixture make_run(const std::string& id, double eps, std::size_t N, int points, unsigned threads = 1,
                 std::uint64_t seed = 5) {
    const auto sys = make_fixture(id);
    const auto times = uniform_times(1.0, points);
    Fixture f{build_limit(sys, vec({0.25}), 1.0, fast_limit(), times), {}};
    EnsembleOptions opt;
    opt.eps = eps;
    opt.N = N;
    opt.out_times = times;
    opt.seed = seed;
    opt.threads = threads;
    f.ens = run_ensemble(sys, StandardFamily::single(default_pair(1, eps)), *f.lim.avg, opt);
    return f;
}

}  // namespace

TEST_CASE("uniform times and default pair") {
    const auto t = uniform_times(2.0, 5);
    CHECK(t == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});
    const StandardPair p = default_pair(2, 1e-3);
    CHECK(p.a == doctest::Approx(0.2));
    CHECK(p.b == doctest::Approx(0.3));
    CHECK(p.G.front() == vec({0.25, 0.25}));
    CHECK(p.constant);
}

TEST_CASE("eps = 0 ensembles keep theta constant") {
    const auto sys = make_fixture("CPL");
    const auto times = uniform_times(1.0, 9);
    const AveragedTrajectory avg =
        solve_averaged([](const SlowVec& t) { return SlowVec(SlowVec::Zero(t.size())); }, vec({0.25}), 1.0);
    EnsembleOptions opt;
    opt.eps = 0.0;
    opt.N = 50;
    opt.out_times = times;
    const Ensemble e = run_ensemble(sys, StandardFamily::single(default_pair(1, 0.0)), avg, opt);
    for (std::size_t k = 0; k < e.N; ++k)
        for (std::size_t i = 0; i < e.nt(); ++i) {
            CHECK(e.theta_at(k, i)[0] == 0.25);
            CHECK(e.zeta_at(k, i)[0] == 0.0);
        }
}

TEST_CASE("ensembles are bit-identical across runs and thread counts") {
    const Fixture a = make_run("CPL", 1e-2, 64, 9, 1);
    const Fixture b = make_run("CPL", 1e-2, 64, 9, 1);
    const Fixture c = make_run("CPL", 1e-2, 64, 9, 3);
    CHECK(a.ens.theta == b.ens.theta);
    CHECK(a.ens.theta == c.ens.theta);
    CHECK(a.ens.zeta == c.ens.zeta);
    const Fixture d = make_run("CPL", 1e-2, 64, 9, 1, 6);
    CHECK(a.ens.theta != d.ens.theta);
}

TEST_CASE("ensemble paths agree with direct polygonalized orbits") {
    const Fixture f = make_run("CPL", 1e-2, 8, 9);
    const PairSampler sampler(StandardFamily::single(default_pair(1, 1e-2)));
    for (std::size_t k = 0; k < f.ens.N; ++k) {
        Stream st(5, k);
        const PairPoint p = sampler.sample(st);
        const auto orb = orbit(*f.ens.sys, 1e-2, wrap01(p.x), p.theta, 101);
        const PathSample ps = polygonalize(orb, 1e-2, 1.0, f.ens.times);
        for (std::size_t i = 0; i < f.ens.nt(); ++i) {
            CHECK(f.ens.theta_at(k, i)[0] == doctest::Approx(ps.lifts[i][0]).epsilon(1e-13));
            const double z = (ps.lifts[i][0] - f.ens.theta_bar[i][0]) / std::sqrt(1e-2);
            CHECK(f.ens.zeta_at(k, i)[0] == doctest::Approx(z).epsilon(1e-10).scale(1));
        }
    }
}

TEST_CASE("standard error halves when N quadruples") {
    const Fixture a = make_run("CPL", 4e-3, 500, 17);
    const Fixture b = make_run("CPL", 4e-3, 2000, 17);
    const double ratio = sup_error(a.ens).std_error / sup_error(b.ens).std_error;
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.5);
}

TEST_CASE("constant drift has no averaging error") {
    for (double eps : {1e-2, 1e-3}) {
        const Fixture f = make_run("DRIFT", eps, 100, 33);
        CHECK(sup_error(f.ens).value <= eps);
        CHECK(f.ens.theta_bar.back()[0] == doctest::Approx(1.25).epsilon(1e-10));
    }
}

TEST_CASE("averaging report requires three eps values") {
    const Fixture a = make_run("CPL", 1e-2, 50, 9);
    const Fixture b = make_run("CPL", 5e-3, 50, 9);
    CHECK_THROWS_AS(averaging_error({&a.ens, &b.ens}), PreconditionError);
}

TEST_CASE("test functions have consistent derivatives") {
    const int d = 2;
    std::vector<TestFn> fns = builtin_test_functions(d);
    fns.push_back(bump_fn(vec({0.2, 0.1}), 1.5));
    fns.push_back(product_fn(d, 0, 1));
    fns.push_back(constant_fn(d, 2.0));
    const SlowVec z = vec({0.3, -0.4});
    const double h = 1e-5;
    for (const auto& A : fns) {
        for (int j = 0; j < d; ++j) {
            SlowVec e = SlowVec::Zero(d);
            e[j] = h;
            const double g = (A.value(z + e) - A.value(z - e)) / (2 * h);
            CHECK(A.grad(z)[j] == doctest::Approx(g).epsilon(1e-6).scale(1));
            const SlowVec hj = (A.grad(z + e) - A.grad(z - e)) / (2 * h);
            for (int i = 0; i < d; ++i) CHECK(A.hess(z)(i, j) == doctest::Approx(hj[i]).epsilon(1e-5).scale(1));
        }
    }
    CHECK(bump_fn(vec({0.0}), 1.0).value(vec({1.0})) == 0.0);
    CHECK(bump_fn(vec({0.0}), 1.0).value(vec({0.0})) == doctest::Approx(1.0));
    CHECK(periodic_bump(vec({0.25}), 20).value(vec({1.25})) == doctest::Approx(1.0));
    CHECK(cosine_weight(vec({0.0}), 0.5).value(vec({0.5})) == doctest::Approx(0.5));
    CHECK(constant_weight().value(vec({0.7})) == 1.0);
}

TEST_CASE("generator residuals vanish for constants and empty windows") {
    const Fixture f = make_run("CPL", 1e-2, 200, 17);
    const ResidualReport c = generator_residual(f.ens, constant_fn(1, 3.0), Variant::Fluctuation, f.lim, 1.0);
    CHECK(c.residual.value == 0.0);
    CHECK(c.pass);
    const ResidualReport ca = generator_residual(f.ens, constant_fn(1, 3.0), Variant::Averaged, f.lim, 1.0);
    CHECK(ca.residual.value == 0.0);
    const Conditioning none{"none", {}};
    const ResidualReport m = martingale_residual(f.ens, square_norm_fn(1), none, 8, 8, f.lim, 1.0);
    CHECK(m.residual.value == 0.0);
    const Conditioning late{"late", {{10, constant_weight()}}};
    CHECK_THROWS_AS(martingale_residual(f.ens, square_norm_fn(1), late, 8, 16, f.lim, 1.0), PreconditionError);
}

TEST_CASE("LIN ensemble: residuals, moments and CLT") {
    const Fixture f = make_run("LIN", 1e-3, 2000, 129);
    for (const auto& A : builtin_test_functions(1)) {
        CHECK(generator_residual(f.ens, A, Variant::Fluctuation, f.lim, 1.0).pass);
        CHECK(generator_residual(f.ens, A, Variant::Averaged, f.lim, 1.0).pass);
    }
    const MomentReport mr = moment_scaling(f.ens);
    // Second-moment ratio is bounded uniformly over all gaps.
    CHECK(mr.max_ratio2 <= 1.0);
    CHECK(mr.ratio_ok);
    CltTolerances tol;
    tol.rel_cov = 0.15;
    tol.skew = 0.2;
    tol.kurt = 0.4;
    const CltReport clt = clt_test(f.ens, *f.lim.cov, tol);
    CHECK(clt.cov_ok);
    CHECK(clt.charfn_ok);
    CHECK(clt.two_time_ok);
    CHECK(clt.rows.back().Sigma(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("CLT test rejects mismatched limits") {
    const Fixture f = make_run("LIN", 1e-2, 50, 9);
    const LimitModel other = build_limit(make_fixture("LIN"), vec({0.3}), 1.0, fast_limit());
    CHECK_THROWS_AS(clt_test(f.ens, *other.cov), PreconditionError);
    const LimitModel shorter = build_limit(make_fixture("LIN"), vec({0.25}), 0.5, fast_limit());
    CHECK_THROWS_AS(clt_test(f.ens, *shorter.cov), PreconditionError);
}

TEST_CASE("null calibration: frozen Birkhoff sums match the Green-Kubo variance") {
    // For LIN, Lebesgue measure is invariant and Gamma_k = 0 for k >= 1, so the frozen
    // normalized Birkhoff sums have variance exactly sigma2 at every n.
    const auto lin = make_fixture("LIN");
    const auto ctx = diffusion_matrix(*lin, vec({0.25}));
    const Estimate v = frozen_birkhoff_variance(*lin, vec({0.25}), ctx.omega_bar[0], 1000, 4000, 3, 2);
    CHECK(std::abs(v.value - ctx.sigma2(0, 0)) <= 3 * v.std_error);
    const Estimate w = frozen_birkhoff_variance(*lin, vec({0.25}), ctx.omega_bar[0], 1000, 4000, 3, 1);
    CHECK(v.value == w.value);
}
