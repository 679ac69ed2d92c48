#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "fastslow/experiments.hpp"
#include "fastslow/srb.hpp"
#include "helpers.hpp"

using namespace fastslow;
using fastslow::testing::vec;

namespace {

/// Monte Carlo oracle: sample mean of omega and (1/n) Var of Birkhoff sums for the
/// frozen map, with std::mt19937_64 initial points.
struct BirkhoffOracle {
    double mean, mean_se, var, var_se;
};

BirkhoffOracle birkhoff_oracle(const FastSlowSystem& sys, double theta, int n, int samples, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const SlowVec th = vec({theta});
    std::vector<double> sums(samples);
    // Discard a burn-in so that x_0 is distributed close to the invariant density.
    for (int s = 0; s < samples; ++s) {
        double x = U(gen);
        for (int k = 0; k < 30; ++k) x = wrap01(sys.f_lift(x, th));
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            acc += sys.omega(x, th)[0];
            x = wrap01(sys.f_lift(x, th));
        }
        sums[s] = acc;
    }
    double m = 0.0;
    for (double v : sums) m += v;
    m /= samples;
    double v2 = 0.0, v4 = 0.0;
    for (double v : sums) {
        v2 += (v - m) * (v - m);
        v4 += std::pow(v - m, 4);
    }
    v2 /= (samples - 1);
    v4 /= samples;
    const double var = v2 / n;
    const double var_se = std::sqrt(std::max(0.0, v4 - v2 * v2) / samples) / n;
    return {m / n, std::sqrt(v2 / samples) / n, var, var_se};
}

SystemPtr drift_sin_system() {
    TrigTerm a;
    a.c = 1.0;
    a.kx = 0;
    a.m[0] = 1;
    a.tth = Trig::Sin;
    TrigTerm b;
    b.c = 1.0;
    b.kx = 1;
    return std::make_shared<FastSlowSystem>("sin-drift", 1, 3, std::vector<TrigTerm>{},
                                            std::vector<std::vector<TrigTerm>>{{a, b}});
}

}  // namespace

TEST_CASE("Ulam matrices are column stochastic") {
    Stream s(2, 0);
    for (const auto& id : fixture_ids()) {
        const auto sys = make_fixture(id);
        for (int N : {300, 1024}) {
            const auto op = ulam_operator(*sys, vec({s.uniform()}), N);
            CHECK(op.max_column_defect() <= 1e-12);
            const SRBDensity rho = srb_density(op);
            CHECK(rho.residual <= 1e-12);
            CHECK(rho.rho.mean() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(rho.rho.minCoeff() > 0.0);
        }
    }
}

TEST_CASE("LIN has uniform invariant density") {
    const auto sys = make_fixture("LIN");
    const auto rho = srb_density(ulam_operator(*sys, vec({0.25}), 300));
    CHECK((rho.rho.array() - 1.0).abs().maxCoeff() <= 1e-10);
    const auto mids = cell_midpoints(4);
    CHECK(mids[0] == 0.125);
    CHECK(mids[3] == 0.875);
}

TEST_CASE("LIN Green-Kubo value is one half") {
    // Gamma_0 = int cos^2(2 pi x) dx = 1/2; Gamma_k = int cos(2 pi 3^k x) cos(2 pi x) dx = 0.
    const auto sys = make_fixture("LIN");
    const auto ctx = diffusion_matrix(*sys, vec({0.4}));
    CHECK(ctx.sigma2(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(ctx.Gamma[0](0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    for (std::size_t k = 1; k < ctx.Gamma.size(); ++k) CHECK(std::abs(ctx.Gamma[k](0, 0)) <= 1e-10);
    CHECK(std::abs(ctx.omega_bar[0]) <= 1e-12);
    CHECK(ctx.sigma(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-10));
    CHECK_FALSE(ctx.coboundary);
    CHECK(ctx.M == default_truncation(*sys, 1e-6));
    CHECK(ctx.M == static_cast<int>(std::ceil(10 * std::log(1e6) / std::log(3.0))));
}

TEST_CASE("coboundary detection") {
    const auto cbd = diffusion_matrix(*make_fixture("CBD"), vec({0.1}));
    CHECK(cbd.sigma2(0, 0) <= 1e-3);
    CHECK(cbd.coboundary);
    // Gamma_0 = 1, Gamma_1 = -1/2: the series telescopes to zero. Cell averaging of
    // cos(18 pi x) costs O(N^-2) in Gamma_1.
    CHECK(cbd.Gamma[0](0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cbd.Gamma[1](0, 0) == doctest::Approx(-0.5).epsilon(1e-5));
    CHECK(std::abs(cbd.Gamma[2](0, 0)) <= 1e-12);
    CHECK_FALSE(diffusion_matrix(*make_fixture("CPL"), vec({0.1})).coboundary);
    CHECK(diffusion_matrix(*make_fixture("DRIFT"), vec({0.1})).coboundary);
}

TEST_CASE("sigma2 is symmetric PSD on random theta") {
    Stream s(29, 0);
    std::vector<SystemPtr> systems;
    for (const auto& id : fixture_ids()) systems.push_back(make_fixture(id));
    systems.push_back(fastslow::testing::random_system(2, 2.6, s, 0.3));
    SrbOptions opt;
    opt.N = 1024;
    opt.jacobian = false;
    for (const auto& sys : systems) {
        for (int i = 0; i < 20; ++i) {
            const auto ctx = diffusion_matrix(*sys, fastslow::testing::random_theta(sys->dim(), s), opt);
            CHECK((ctx.sigma2 - ctx.sigma2.transpose()).norm() <= 1e-14);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(ctx.sigma2));
            CHECK(es.eigenvalues().minCoeff() >= -1e-12);
            CHECK((ctx.sigma * ctx.sigma - ctx.sigma2).norm() <= 1e-10);
        }
    }
}

TEST_CASE("PSD square root clamps tiny negative eigenvalues and rejects large ones") {
    SlowMat A(2, 2);
    A << 2.0, 1.0, 1.0, 2.0;
    const SlowMat R = psd_sqrt(A);
    CHECK((R * R - A).norm() <= 1e-13);
    SlowMat tiny(2, 2);
    tiny << 1.0, 0.0, 0.0, -1e-12;
    double min_eig = 0.0;
    const SlowMat Rt = psd_sqrt(tiny, 1e-9, &min_eig);
    CHECK(min_eig == doctest::Approx(-1e-12));
    CHECK(Rt(1, 1) == 0.0);
    SlowMat neg(1, 1);
    neg << -1e-3;
    CHECK_THROWS_AS(psd_sqrt(neg), NegativeDiffusion);
}

TEST_CASE("CPL averaged drift and variance growth match frozen Birkhoff sums") {
    const auto sys = make_fixture("CPL");
    const double theta = 0.3;
    const auto ctx = diffusion_matrix(*sys, vec({theta}));
    for (int n : {1000, 10000}) {
        const int samples = n == 1000 ? 4000 : 800;
        const auto o = birkhoff_oracle(*sys, theta, n, samples, 99 + n);
        CHECK(std::abs(o.mean - ctx.omega_bar[0]) <= 4 * o.mean_se + 1e-12);
        // Finite-n bias of (1/n) Var is O(1/n).
        CHECK(std::abs(o.var - ctx.sigma2(0, 0)) <= 4 * o.var_se + 20.0 / n);
    }
    // The library estimator agrees with the same oracle.
    const Estimate lib = frozen_birkhoff_variance(*sys, vec({theta}), ctx.omega_bar[0], 1000, 2000, 5);
    CHECK(std::abs(lib.value - ctx.sigma2(0, 0)) <= 4 * lib.std_error + 0.02);
}

TEST_CASE("drift Jacobian central differences Richardson-agree") {
    // f independent of theta gives rho = 1 and omega_bar = sin(2 pi theta).
    const auto sys = drift_sin_system();
    const double th = 0.1;
    const double exact = kTwoPi * std::cos(kTwoPi * th);
    CHECK(average_drift_at(*sys, vec({th}), 512)[0] == doctest::Approx(std::sin(kTwoPi * th)).epsilon(1e-12));
    const double h = 0.01;
    const double e1 = drift_jacobian(*sys, vec({th}), 512, h)(0, 0) - exact;
    const double e2 = drift_jacobian(*sys, vec({th}), 512, h / 2)(0, 0) - exact;
    const double ratio = e1 / e2;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("cached drift field reproduces node solves") {
    const auto sys = make_fixture("CPL");
    SrbOptions opt;
    opt.N = 1024;
    auto cache = std::make_shared<SrbCache>(sys, opt, 1e-3);
    DriftField field(cache);
    const SlowVec node = vec({0.25});
    const SlowVec direct = average_drift_at(*sys, node, 1024);
    CHECK(field.omega_bar(node)[0] == doctest::Approx(direct[0]).epsilon(1e-12));
    const double mid = 0.2505;
    const SlowVec a = average_drift_at(*sys, vec({0.250}), 1024);
    const SlowVec b = average_drift_at(*sys, vec({0.251}), 1024);
    CHECK(field.omega_bar(vec({mid}))[0] == doctest::Approx(0.5 * (a[0] + b[0])).epsilon(1e-12));
    const double jac = field.jacobian(node)(0, 0);
    const double fd = (average_drift_at(*sys, vec({0.251}), 1024)[0] - average_drift_at(*sys, vec({0.249}), 1024)[0]) / 0.002;
    CHECK(jac == doctest::Approx(fd).epsilon(1e-9));
    CHECK(field.sigma2(node)(0, 0) == doctest::Approx(diffusion_matrix(*sys, node, opt).sigma2(0, 0)).epsilon(1e-10));
}
