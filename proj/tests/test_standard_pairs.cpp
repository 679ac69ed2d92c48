#include "doctest.h"

#include <cmath>

#include "fastslow/experiments.hpp"
#include "fastslow/standard_pairs.hpp"
#include "helpers.hpp"

using namespace fastslow;
using fastslow::testing::vec;

namespace {

const double kPi = kTwoPi / 2;

// Closed forms of the CPL map.
double cpl_f(double x, double th) { return 3 * x + 0.9 / (2 * kPi) * std::sin(2 * kPi * th) * std::sin(2 * kPi * x); }
double cpl_omega(double x, double th) { return std::sin(2 * kPi * th) + std::cos(2 * kPi * x); }

double fine_simpson(const std::function<double(double)>& h, double a, double b, int n = 8192) {
    const double dx = (b - a) / n;
    double s = h(a) + h(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * h(a + i * dx);
    return s * dx / 3;
}

struct AnalyticPair {
    double a, b;
    std::function<double(double)> G, rho;
};

AnalyticPair analytic_pair(double eps, const PairConstants& k, Stream& s) {
    AnalyticPair p;
    p.a = s.uniform();
    const double L = k.delta * (0.5 + 0.5 * s.uniform());
    p.b = p.a + L;
    const double th0 = s.uniform();
    const double alpha = eps * k.c1 / 4 * (2 * s.uniform() - 1);
    const double beta = std::min(eps * k.D * k.c1 / 8, eps * k.c1 / (8 * L)) * (2 * s.uniform() - 1);
    const double kappa = std::min(2.0, k.c2 / 4) * (2 * s.uniform() - 1);
    const double a = p.a;
    p.G = [=](double x) { return th0 + alpha * (x - a) + beta * (x - a) * (x - a); };
    p.rho = [=](double x) { return std::exp(kappa * (x - a)); };
    return p;
}

std::vector<TestFunction> oracle_functions() {
    return {
        [](double x, const SlowVec& t) { return t[0] * std::cos(2 * kPi * x); },
        [](double, const SlowVec& t) { return t[0] * t[0]; },
        [](double x, const SlowVec& t) { return std::cos(2 * kPi * (2 * x - t[0])); },
        [](double x, const SlowVec&) { return std::exp(std::sin(2 * kPi * x)); },
        [](double, const SlowVec&) { return 1.0; },
    };
}

SystemPtr weak_system() {
    TrigTerm f;
    f.c = 0.02 / kTwoPi;
    f.kx = 1;
    f.tx = Trig::Sin;
    f.m[0] = 1;
    TrigTerm w1;
    w1.c = 0.2;
    w1.kx = 1;
    TrigTerm w2;
    w2.c = 0.1;
    w2.m[0] = 1;
    w2.tth = Trig::Sin;
    return std::make_shared<FastSlowSystem>("weak", 1, 3, std::vector<TrigTerm>{f},
                                            std::vector<std::vector<TrigTerm>>{{w1, w2}});
}

}  // namespace

TEST_CASE("Simpson's rule is exact on cubics") {
    const int n = 9;
    const double h = 0.25;
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) {
        const double x = i * h;
        v[i] = 2 * x * x * x - x + 1;
    }
    // int_0^2 (2x^3 - x + 1) dx = 8 - 2 + 2
    CHECK(simpson(v, h) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK_THROWS_AS(simpson({1.0, 2.0}, 0.1), PreconditionError);
}

TEST_CASE("default constants satisfy the invariance inequalities for CPL") {
    const auto sys = make_fixture("CPL");
    const PairConstants k = default_constants(*sys);
    CHECK(k.delta == 0.1);
    CHECK(k.c1 == doctest::Approx(4 * (kTwoPi + 1) / 0.1));
    const ConstantCheck c = check_constants(*sys, 1e-3, k);
    CHECK(c.ok);
    CHECK(c.margin_c1 >= 0);
    CHECK(c.margin_D >= 0);
    CHECK(c.margin_c2 >= 0);
    CHECK_FALSE(check_constants(*sys, 1e-1, k).ok);
}

TEST_CASE("pushforward identity on analytic pairs against a fine-grid oracle") {
    const auto sys = make_fixture("CPL");
    const double eps = 1e-3;
    const PairConstants k = default_constants(*sys);
    Stream s(41, 0);
    const auto fns = oracle_functions();
    for (int trial = 0; trial < 25; ++trial) {
        const AnalyticPair ap = analytic_pair(eps, k, s);
        const StandardPair p =
            make_pair(ap.a, ap.b, [&](double x) { return vec({ap.G(x)}); }, ap.rho, eps);
        REQUIRE(validate_pair(p, k).ok);
        DecomposeOptions opt;
        opt.constants = k;
        StandardFamily out;
        REQUIRE_NOTHROW(out = pushforward_decompose(StandardFamily::single(p), *sys, eps, opt));
        CHECK(out.total_weight() == doctest::Approx(1.0).epsilon(1e-12));
        for (const auto& q : out.pairs) CHECK(validate_pair(q, k).ok);
        const double Z = fine_simpson(ap.rho, ap.a, ap.b);
        for (const auto& g : fns) {
            const double oracle = fine_simpson(
                [&](double x) {
                    const double th = ap.G(x);
                    const double x1 = wrap01(cpl_f(wrap01(x), th));
                    const double th1 = th + eps * cpl_omega(wrap01(x), th);
                    return g(x1, vec({th1})) * ap.rho(x) / Z;
                },
                ap.a, ap.b);
            CHECK(std::abs(integrate(out, g) - oracle) <= 1e-7);
            CHECK(std::abs(integrate_pushed(p, *sys, eps, g, 8) - oracle) <= 1e-7);
        }
    }
}

TEST_CASE("library pushforward study on random pairs") {
    const auto sys = make_fixture("CPL");
    const PairConstants k = default_constants(*sys);
    const PushforwardStudy st = pushforward_study(*sys, 1e-3, 25, 13, k);
    CHECK(st.pairs == 25);
    CHECK(st.functions == 5);
    CHECK(st.max_error <= 1e-7);
    CHECK(st.revalidated);
    Stream s(13, 99);
    for (int i = 0; i < 25; ++i) CHECK(validate_pair(random_pair(1, 1e-3, k, s), k).ok);
}

TEST_CASE("iterated decomposition keeps unit mass") {
    const auto sys = weak_system();
    const double eps = 1.0 / 49;
    const PairConstants k = default_constants(*sys);
    REQUIRE(check_constants(*sys, eps, k).ok);
    const int n = static_cast<int>(std::ceil(1.0 / std::sqrt(eps)));
    StandardFamily fam = StandardFamily::single(make_constant_pair(0.2, 0.3, vec({0.25}), eps));
    DecomposeOptions opt;
    opt.constants = k;
    const TestFunction one = [](double, const SlowVec&) { return 1.0; };
    const TestFunction g = [](double x, const SlowVec& t) { return std::cos(kTwoPi * x) + t[0]; };
    // Push a cloud of sample points alongside as an oracle for the family's law.
    Stream s(51, 0);
    std::vector<PairPoint> pts;
    for (int i = 0; i < 20000; ++i) pts.push_back(sample(fam.pairs[0], s));
    for (int it = 0; it < n; ++it) {
        DecomposeStats st;
        fam = pushforward_decompose(fam, *sys, eps, opt, &st);
        CHECK(st.pruned_mass <= 1e-9);
        CHECK(st.min_dfG > 1.5);
        CHECK(std::abs(fam.total_weight() - 1.0) <= 1e-9);
        CHECK(std::abs(integrate(fam, one) - 1.0) <= 1e-9);
        CHECK(fam.pairs.size() < 100000);
        for (auto& p : pts) {
            const StepResult r = step(*sys, eps, p.x, p.theta);
            p.theta = p.theta + r.increment;
            p.x = r.x;
        }
    }
    double m = 0, m2 = 0;
    for (const auto& p : pts) {
        const double v = g(p.x, p.theta);
        m += v;
        m2 += v * v;
    }
    m /= pts.size();
    const double se = std::sqrt((m2 / pts.size() - m * m) / pts.size());
    CHECK(std::abs(integrate(fam, g) - m) <= 4 * se);
}

TEST_CASE("slow mean of a pair matches the sample mean") {
    const auto sys = make_fixture("CPL");
    const PairConstants k = default_constants(*sys);
    Stream s(61, 0);
    const StandardPair p = random_pair(1, 1e-2, k, s);
    const double mean = integrate(p, [](double, const SlowVec& t) { return t[0]; });
    const double mx = integrate(p, [](double x, const SlowVec&) { return x; });
    PairSampler sampler(StandardFamily::single(p));
    const int n = 100000;
    double sm = 0, sm2 = 0, sx = 0, sx2 = 0;
    for (int i = 0; i < n; ++i) {
        const PairPoint q = sampler.sample(s);
        sm += q.theta[0];
        sm2 += q.theta[0] * q.theta[0];
        const double x = q.x < p.a ? q.x + 1.0 : q.x;
        sx += x;
        sx2 += x * x;
    }
    sm /= n;
    sx /= n;
    CHECK(std::abs(sm - mean) <= 4 * std::sqrt((sm2 / n - sm * sm) / n) + 1e-12);
    const double mx_lift = mx < p.a ? mx + 1.0 : mx;
    if (p.b <= 1.0) CHECK(std::abs(sx - mx_lift) <= 4 * std::sqrt((sx2 / n - sx * sx) / n));
}

TEST_CASE("signed split reconstructs psi") {
    const StandardPair base = make_constant_pair(0.1, 0.2, vec({0.5}), 1e-3);
    std::vector<double> psi(base.rho.size());
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = std::sin(kTwoPi * base.node(static_cast<int>(i)) * 5);
    const SignedSplit sp = split_signed(base, psi, 100.0);
    for (std::size_t i = 0; i < psi.size(); ++i)
        CHECK(sp.alpha_plus * sp.plus.rho[i] - sp.alpha_minus * sp.minus.rho[i] ==
              doctest::Approx(psi[i]).epsilon(1e-12).scale(1));
    CHECK(*std::min_element(sp.plus.rho.begin(), sp.plus.rho.end()) > 0);
    CHECK(*std::min_element(sp.minus.rho.begin(), sp.minus.rho.end()) > 0);
}

TEST_CASE("family json round trip") {
    const auto sys = make_fixture("CPL");
    Stream s(71, 0);
    StandardFamily fam;
    for (int i = 0; i < 3; ++i) {
        fam.pairs.push_back(random_pair(1, 1e-3, default_constants(*sys), s));
        fam.weights.push_back(1.0 / 3);
    }
    const StandardFamily back = family_from_json(family_to_json(fam));
    REQUIRE(back.pairs.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back.pairs[i].a == fam.pairs[i].a);
        CHECK(back.pairs[i].b == fam.pairs[i].b);
        CHECK(back.pairs[i].rho == fam.pairs[i].rho);
        CHECK(back.weights[i] == fam.weights[i]);
    }
}
