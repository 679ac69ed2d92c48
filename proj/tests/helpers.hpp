#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "fastslow/rng.hpp"
#include "fastslow/system.hpp"

namespace fastslow::testing {

inline SlowVec vec(std::initializer_list<double> v) {
    SlowVec r(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) r[i++] = x;
    return r;
}

inline SlowVec constant_vec(int d, double v) { return SlowVec::Constant(d, v); }

inline SlowVec random_theta(int d, Stream& s) {
    SlowVec t(d);
    for (int j = 0; j < d; ++j) t[j] = s.uniform();
    return t;
}

/// Random trigonometric system with certified expansion exactly `lambda`.
inline SystemPtr random_system(int d, double lambda, Stream& s, double omega_scale = 0.5) {
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(s.uniform() * (hi - lo + 1)); };
    auto trig = [&] { return s.uniform() < 0.5 ? Trig::Cos : Trig::Sin; };
    const int degree = lambda <= 3.0 ? 3 : 4;
    std::vector<TrigTerm> f;
    TrigTerm t;
    t.c = (degree - lambda) / kTwoPi;
    t.kx = 1;
    t.tx = trig();
    t.tth = trig();
    for (int j = 0; j < d; ++j) t.m[j] = pick(-1, 2);
    f.push_back(t);
    std::vector<std::vector<TrigTerm>> om(d);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < 2; ++k) {
            TrigTerm w;
            w.c = omega_scale * (2.0 * s.uniform() - 1.0);
            w.kx = pick(0, 2);
            w.tx = trig();
            w.tth = trig();
            for (int j = 0; j < d; ++j) w.m[j] = pick(-1, 1);
            om[i].push_back(w);
        }
    }
    return std::make_shared<FastSlowSystem>("random", d, degree, f, om);
}

}  // namespace fastslow::testing
