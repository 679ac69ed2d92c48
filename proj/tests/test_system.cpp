#include "doctest.h"

#include <cmath>

#include "fastslow/system.hpp"
#include "helpers.hpp"

using namespace fastslow;
using fastslow::testing::vec;

TEST_CASE("fixtures evaluate to their closed forms") {
    const double pi = kTwoPi / 2;
    const auto lin = make_fixture("LIN");
    const auto cbd = make_fixture("CBD");
    const auto cpl = make_fixture("CPL");
    const auto drift = make_fixture("DRIFT");
    for (double x : {0.0, 0.13, 0.5, 0.77}) {
        for (double th : {0.0, 0.31, 0.9}) {
            const SlowVec t = vec({th});
            CHECK(lin->f_lift(x, t) == doctest::Approx(3 * x).epsilon(1e-15));
            CHECK(lin->omega(x, t)[0] == doctest::Approx(std::cos(2 * pi * x)).epsilon(1e-14));
            CHECK(cbd->omega(x, t)[0] ==
                  doctest::Approx(std::cos(2 * pi * x) - std::cos(6 * pi * x)).epsilon(1e-14));
            const double fc = 3 * x + 0.9 / (2 * pi) * std::sin(2 * pi * th) * std::sin(2 * pi * x);
            CHECK(cpl->f_lift(x, t) == doctest::Approx(fc).epsilon(1e-14));
            CHECK(cpl->dfdx(x, t) ==
                  doctest::Approx(3 + 0.9 * std::sin(2 * pi * th) * std::cos(2 * pi * x)).epsilon(1e-14));
            CHECK(cpl->dfdtheta(x, t)[0] ==
                  doctest::Approx(0.9 * std::cos(2 * pi * th) * std::sin(2 * pi * x)).epsilon(1e-13));
            CHECK(cpl->omega(x, t)[0] ==
                  doctest::Approx(std::sin(2 * pi * th) + std::cos(2 * pi * x)).epsilon(1e-14));
            CHECK(drift->omega(x, t)[0] == 1.0);
            CHECK(cpl->f(x, t) >= 0.0);
            CHECK(cpl->f(x, t) < 1.0);
        }
    }
    CHECK(cpl->lambda() == doctest::Approx(2.1));
    CHECK(cpl->K() == doctest::Approx(kTwoPi));
    CHECK(lin->lambda() == 3.0);
    CHECK(drift->theta_independent_f());
    CHECK_FALSE(cpl->theta_independent_f());
}

TEST_CASE("fixtures pass validation") {
    for (const auto& id : fixture_ids()) {
        const auto sys = make_fixture(id);
        const auto rep = validate_system(*sys);
        CHECK(rep.min_dx_f >= sys->lambda() - 1e-12);
        CHECK(rep.max_fd_rel_error < 1e-6);
        CHECK(rep.max_sup_norm <= sys->K() + 1e-12);
    }
}

TEST_CASE("analytic derivatives match finite differences on random systems") {
    Stream s(11, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 1 + trial % 3;
        const auto sys = fastslow::testing::random_system(d, 2.1 + 1.8 * s.uniform(), s);
        const double h = 1e-6;
        const double x = s.uniform();
        const SlowVec th = fastslow::testing::random_theta(d, s);
        const double fd_x = (sys->f_lift(x + h, th) - sys->f_lift(x - h, th)) / (2 * h);
        CHECK(sys->dfdx(x, th) == doctest::Approx(fd_x).epsilon(1e-7));
        const double fd_xx = (sys->dfdx(x + h, th) - sys->dfdx(x - h, th)) / (2 * h);
        CHECK(sys->d2fdx2(x, th) == doctest::Approx(fd_xx).epsilon(1e-6).scale(1));
        const SlowVec ox = (sys->omega(x + h, th) - sys->omega(x - h, th)) / (2 * h);
        CHECK((sys->domega_dx(x, th) - ox).norm() < 1e-6);
        for (int j = 0; j < d; ++j) {
            SlowVec e = SlowVec::Zero(d);
            e[j] = h;
            const double fdt = (sys->f_lift(x, th + e) - sys->f_lift(x, th - e)) / (2 * h);
            CHECK(sys->dfdtheta(x, th)[j] == doctest::Approx(fdt).epsilon(1e-7).scale(1));
            const SlowVec odt = (sys->omega(x, th + e) - sys->omega(x, th - e)) / (2 * h);
            CHECK((sys->domega_dtheta(x, th).col(j) - odt).norm() < 1e-6);
            const SlowVec fxt = (sys->dfdtheta(x + h, th) - sys->dfdtheta(x - h, th)) / (2 * h);
            CHECK(sys->d2fdxdtheta(x, th)[j] == doctest::Approx(fxt[j]).epsilon(1e-6).scale(1));
        }
        const MapValue mv = sys->eval(x, th);
        CHECK(mv.f_lift == sys->f_lift(x, th));
        CHECK(mv.omega == sys->omega(x, th));
        CHECK_NOTHROW(validate_system(*sys, 32, 4));
    }
}

TEST_CASE("json round trip preserves the system") {
    const auto cpl = make_fixture("CPL");
    const auto back = system_from_json(cpl->to_json());
    CHECK(back->to_json() == cpl->to_json());
    for (double x : {0.1, 0.6})
        CHECK(back->f_lift(x, vec({0.3})) == cpl->f_lift(x, vec({0.3})));
}

TEST_CASE("inline system schema errors") {
    using nlohmann::json;
    const json ok = {{"d", 1}, {"degree", 3}, {"omega", json::array({json::array({{{"c", 1.0}, {"kx", 1}}})})}};
    CHECK_NOTHROW(system_from_json(ok));
    json bad = ok;
    bad["extra"] = 1;
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    bad = ok;
    bad["degree"] = 2;
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    bad = ok;
    bad["omega"][0][0]["x"] = "tan";
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    bad = ok;
    bad["lambda"] = 3.5;
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    bad = ok;
    bad["K"] = 1.0;
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    bad = ok;
    bad["d"] = 5;
    CHECK_THROWS_AS(system_from_json(bad), ConfigError);
    CHECK_THROWS_AS(make_fixture("NOPE"), ConfigError);
}

TEST_CASE("declared constants can only weaken the certificate") {
    auto sys = std::make_shared<FastSlowSystem>(*make_fixture("CPL"));
    CHECK_NOTHROW(sys->set_declared_constants(2.05, 7.0));
    CHECK(sys->lambda() == 2.05);
    CHECK(sys->K() == 7.0);
    CHECK_THROWS_AS(sys->set_declared_constants(2.5, 7.0), PreconditionError);
    CHECK_THROWS_AS(sys->set_declared_constants(2.05, 6.0), PreconditionError);
}

TEST_CASE("torus helpers") {
    CHECK(wrap01(-0.25) == 0.75);
    CHECK(wrap01(1.0) == 0.0);
    CHECK(wrap01(-1e-20) < 1.0);
    CHECK(wrap_signed(0.75) == -0.25);
    CHECK(torus_distance(0.95, 0.05) == doctest::Approx(0.1));
}
