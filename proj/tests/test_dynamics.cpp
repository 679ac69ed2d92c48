#include "doctest.h"

#include <cmath>

#include "fastslow/dynamics.hpp"
#include "fastslow/experiments.hpp"
#include "helpers.hpp"

using namespace fastslow;
using fastslow::testing::random_system;
using fastslow::testing::random_theta;
using fastslow::testing::vec;

TEST_CASE("eps = 0 leaves theta invariant exactly") {
    Stream s(3, 0);
    for (const auto& id : fixture_ids()) {
        const auto sys = make_fixture(id);
        for (int i = 0; i < 1000; ++i) {
            const double x = s.uniform();
            const SlowVec th = random_theta(1, s);
            const StepResult r = step(*sys, 0.0, x, th);
            CHECK(r.theta == th);
            CHECK(r.x == wrap01(sys->f_lift(x, th)));
        }
    }
}

TEST_CASE("orbit lifts accumulate the increments") {
    const auto sys = make_fixture("CPL");
    const double eps = 1e-2;
    const auto orb = orbit(*sys, eps, 0.3, vec({0.6}), 50);
    REQUIRE(orb.size() == 51);
    double x = 0.3, lift = 0.6;
    for (int k = 0; k < 50; ++k) {
        const double th = wrap01(lift);
        const double xn = wrap01(sys->f_lift(x, vec({th})));
        lift += eps * sys->omega(x, vec({th}))[0];
        x = xn;
        CHECK(orb[k + 1].x == doctest::Approx(x).epsilon(1e-12));
        CHECK(orb[k + 1].lift[0] == doctest::Approx(lift).epsilon(1e-12));
        CHECK(orb[k + 1].theta[0] == doctest::Approx(wrap01(orb[k + 1].lift[0])).epsilon(1e-12));
    }
    CHECK_THROWS_AS(orbit(*sys, eps, 0.3, vec({0.6}), 100, 50), PreconditionError);
}

TEST_CASE("path nodes snap to grid times") {
    const double eps = 1e-3;
    for (int k : {0, 1, 7, 250, 1000}) {
        const PathNode n = path_node(eps * k, eps);
        CHECK(n.k == k);
        CHECK(n.frac == 0.0);
    }
    const PathNode mid = path_node(2.5e-3, eps);
    CHECK(mid.k == 2);
    CHECK(mid.frac == doctest::Approx(0.5));
}

TEST_CASE("polygonalization interpolates linearly and is Lipschitz") {
    Stream s(5, 0);
    for (const auto& id : fixture_ids()) {
        const auto sys = make_fixture(id);
        const double eps = 0.01;
        const double T = 1.0;
        const auto orb = orbit(*sys, eps, s.uniform(), random_theta(1, s), 102);
        std::vector<double> times;
        for (int i = 0; i <= 400; ++i) times.push_back(T * i / 400.0);
        const PathSample ps = polygonalize(orb, eps, T, times, true);
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double u = times[i] / eps;
            const auto k = static_cast<std::size_t>(std::floor(u + 1e-9));
            const double w = u - static_cast<double>(k);
            const double expect = (std::abs(w) < 1e-9) ? orb[k].lift[0]
                                                        : (1 - w) * orb[k].lift[0] + w * orb[k + 1].lift[0];
            CHECK(ps.lifts[i][0] == doctest::Approx(expect).epsilon(1e-12));
        }
        // Midpoint between two nodes is the average of the node lifts.
        const PathSample m = polygonalize(orb, eps, T, {0.5 * eps * 3 + 0.5 * eps * 4});
        CHECK(m.lifts[0][0] == doctest::Approx(0.5 * (orb[3].lift[0] + orb[4].lift[0])).epsilon(1e-12));
        CHECK(ps.lipschitz() <= sys->bounds().sup_omega + 1e-9);
    }
}

TEST_CASE("polygonalize agrees bitwise with ensemble path evaluation") {
    const auto sys = make_fixture("CPL");
    const double eps = 1e-3;
    const auto orb = orbit(*sys, eps, 0.41, vec({0.25}), 1002);
    const auto times = uniform_times(1.0, 33);
    const PathSample ps = polygonalize(orb, eps, 1.0, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const PathNode n = path_node(times[i], eps);
        const SlowVec v = path_value(orb[n.k].lift, orb[n.k + 1].lift, n.frac);
        CHECK(v == ps.lifts[i]);
    }
}

TEST_CASE("cone constant is (K+1)/(lambda-2)") {
    const auto cpl = make_fixture("CPL");
    CHECK(cone_constant(*cpl) == doctest::Approx((kTwoPi + 1.0) / (2.1 - 2.0)).epsilon(1e-12));
    const auto lin = make_fixture("LIN");
    CHECK(cone_constant(*lin) == doctest::Approx((kTwoPi + 1.0) / 1.0).epsilon(1e-12));
}

TEST_CASE("cone invariance and expansion bounds on random systems") {
    Stream s(17, 0);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + trial % 3;
        const double lambda = 2.05 + (4.0 - 2.05) * s.uniform_pos();
        const auto sys = random_system(d, lambda, s);
        const double c = cone_constant(*sys);
        const double eps = 1.0 / (2.0 * sys->K() * c);
        const SlowVec th = random_theta(d, s);
        const double x0 = s.uniform();
        const std::int64_t n = 40;
        std::vector<ConeFrame> fr;
        REQUIRE_NOTHROW(fr = cone_frames(*sys, eps, x0, th, n));
        const double a = c * sys->bounds().sup_dtheta_f / sys->lambda();
        for (const auto& F : fr) {
            if (F.n >= 1) CHECK(F.u_vec.norm() <= c * (1 + 1e-12));
            CHECK(F.s.norm() <= sys->K() * (1 + 1e-12));
            // Gamma_n e^{-a eps n} <= v_n <= Gamma_n e^{a eps n}
            CHECK(F.log_v >= F.log_Gamma - a * eps * F.n - 1e-9);
            CHECK(F.log_v <= F.log_Gamma + a * eps * F.n + 1e-9);
        }
        CHECK(std::isfinite(fr.back().b));
    }
}

TEST_CASE("central slope direction leaves x_n unchanged to first order") {
    const auto sys = make_fixture("CPL");
    const double eps = 1e-3;
    const SlowVec th = vec({0.37});
    const double x0 = 0.29;
    const std::int64_t n = 8;
    const auto fr = cone_frames(*sys, eps, x0, th, n);
    const double sn = fr[n].s[0];
    const double h = 1e-7;
    auto xn = [&](double t) {
        const auto o = orbit(*sys, eps, x0 + t * sn, vec({th[0] + t}), n);
        return o.back().x;
    };
    const double dx_central = wrap_signed(xn(h) - xn(-h)) / (2 * h);
    const double dx_x = wrap_signed(orbit(*sys, eps, x0 + h, th, n).back().x -
                                    orbit(*sys, eps, x0 - h, th, n).back().x) /
                        (2 * h);
    CHECK(std::abs(dx_central) < 1e-5 * std::abs(dx_x));
    // v_n is the expansion of x_n along the cone direction u from a flat start.
    CHECK(std::abs(dx_x) == doctest::Approx(fr[n].v()).epsilon(1e-5));
}

TEST_CASE("shadow orbit solves the frozen dynamics and its derivative matches finite differences") {
    const auto sys = make_fixture("CPL");
    const double eps = 1e-3;
    const std::int64_t n = static_cast<std::int64_t>(std::floor(1.0 / std::sqrt(eps)));
    Stream s(23, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const double x0 = s.uniform();
        const SlowVec th = vec({s.uniform()});
        const SlowVec ts = vec({th[0] + eps * (2 * s.uniform() - 1)});
        const ShadowSolution sol = shadow_solve(*sys, eps, x0, th, ts, n);
        REQUIRE(sol.shadow_orbit.size() == static_cast<std::size_t>(n) + 1);
        CHECK(sol.terminal_gap <= 1e-12);
        for (std::int64_t k = 0; k < n; ++k) {
            const double img = wrap01(sys->f_lift(sol.shadow_orbit[k], ts));
            CHECK(torus_distance(img, sol.shadow_orbit[k + 1]) <= 1e-12);
        }
        double worst = 0.0;
        for (std::int64_t k = 1; k <= n; ++k)
            worst = std::max(worst, torus_distance(sol.true_orbit[k], sol.shadow_orbit[k]) / (eps * k));
        CHECK(worst >= sol.shadow_constant - 1e-12);
        CHECK(sol.derivative_bound_ok);
        // Finite differences need Gamma_m h << 1 to stay on one branch sequence.
        const std::int64_t m = 10;
        const double h = 1e-9;
        const double yp = wrap_signed(shadow_solve(*sys, eps, x0 + h, th, ts, m).Y -
                                      shadow_solve(*sys, eps, x0 - h, th, ts, m).Y) /
                          (2 * h);
        CHECK(yp == doctest::Approx(shadow_solve(*sys, eps, x0, th, ts, m).Y_prime).epsilon(1e-5));
    }
}

TEST_CASE("shadow preconditions") {
    const auto sys = make_fixture("CPL");
    CHECK_THROWS_AS(shadow_solve(*sys, 1e-3, 0.1, vec({0.2}), vec({0.25}), 10), PreconditionError);
    CHECK_THROWS_AS(shadow_solve(*sys, 1e-4, 0.1, vec({0.2}), vec({0.2}), 200), PreconditionError);
}

TEST_CASE("shadow study is uniformly bounded across eps") {
    const auto sys = make_fixture("CPL");
    const ShadowStudy a = shadow_study(*sys, 1e-3, 50, 3);
    const ShadowStudy b = shadow_study(*sys, 5e-4, 50, 3);
    CHECK(a.failures == 0);
    CHECK(b.failures == 0);
    CHECK(a.max_residual <= 1e-12);
    CHECK(a.derivative_ok);
    CHECK(b.derivative_ok);
    const double ratio = a.max_shadow_constant / b.max_shadow_constant;
    CHECK(ratio >= 0.5);
    CHECK(ratio <= 2.0);
}
