#include "fastslow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fastslow {

std::vector<double> uniform_times(double T, int n) {
    if (n < 2) throw PreconditionError("uniform_times: need at least 2 points");
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[i] = T * i / (n - 1);
    t.back() = T;
    return t;
}

StandardPair default_pair(int d, double eps, const SlowVec* theta0) {
    const SlowVec th = theta0 ? *theta0 : SlowVec(SlowVec::Constant(d, 0.25));
    return make_constant_pair(0.2, 0.3, th, eps);
}

LimitModel build_limit(SystemPtr sys, const SlowVec& theta0, double T, const LimitOptions& opt,
                       const std::vector<double>& out_times) {
    LimitModel m;
    m.sys = sys;
    m.cache = std::make_shared<SrbCache>(sys, opt.srb, opt.quantum);
    m.field = std::make_shared<DriftField>(m.cache);
    auto field = m.field;
    const VecField drift = [field](const SlowVec& th) { return field->omega_bar(th); };
    const MatField s2 = [field](const SlowVec& th) { return field->sigma2(th); };
    const MatField jac = [field](const SlowVec& th) { return field->jacobian(th); };
    m.avg = std::make_shared<const AveragedTrajectory>(solve_averaged(drift, theta0, T, opt.tol));
    m.cov = std::make_shared<const CovarianceTrajectory>(covariance_evolve(m.avg, s2, jac, T, opt.tol, out_times));
    return m;
}

// ---------------------------------------------------------------------------

SlowVec Ensemble::theta_at(std::size_t k, std::size_t i) const {
    return Eigen::Map<const Eigen::VectorXd>(&theta[(k * nt() + i) * d], d);
}

SlowVec Ensemble::zeta_at(std::size_t k, std::size_t i) const {
    return Eigen::Map<const Eigen::VectorXd>(&zeta[(k * nt() + i) * d], d);
}

Ensemble run_ensemble(SystemPtr sys, const StandardFamily& init, const AveragedTrajectory& avg,
                      const EnsembleOptions& opt) {
    if (opt.N < 1) throw PreconditionError("run_ensemble: N must be >= 1");
    if (opt.out_times.empty()) throw PreconditionError("run_ensemble: no output times");
    if (!(opt.eps >= 0.0)) throw PreconditionError("run_ensemble: eps must be >= 0");
    for (std::size_t i = 0; i < opt.out_times.size(); ++i) {
        if (opt.out_times[i] < 0.0 || (i > 0 && opt.out_times[i] < opt.out_times[i - 1]))
            throw PreconditionError("run_ensemble: output times must be sorted and non-negative");
    }
    const std::size_t nt = opt.out_times.size();
    std::vector<PathNode> nodes(nt);
    std::vector<std::int64_t> need(nt, 0);
    for (std::size_t i = 0; i < nt; ++i) {
        nodes[i] = path_node(opt.out_times[i], opt.eps);
        need[i] = nodes[i].k + (nodes[i].frac > 0.0 ? 1 : 0);
    }
    if (need.back() > opt.max_steps) {
        std::ostringstream os;
        os << "run_ensemble: step budget exceeded (" << need.back() << " > " << opt.max_steps << ")";
        throw PreconditionError(os.str());
    }

    Ensemble e;
    e.sys = sys;
    e.eps = opt.eps;
    e.N = opt.N;
    e.seed = opt.seed;
    e.d = sys->dim();
    e.times = opt.out_times;
    e.theta_bar0 = avg.theta0;
    for (double t : e.times) e.theta_bar.push_back(avg.at(t));
    e.theta.assign(e.N * nt * e.d, 0.0);
    e.zeta.assign(e.N * nt * e.d, 0.0);

    const PairSampler sampler(init);
    const FastSlowSystem& s = *sys;
    const double eps = opt.eps;
    const double inv_sqrt = eps > 0.0 ? 1.0 / std::sqrt(eps) : 0.0;
    const int d = e.d;
    parallel_for(e.N, opt.threads, [&](std::size_t k) {
        Stream st(opt.seed, k);
        const PairPoint p = sampler.sample(st);
        double x = wrap01(p.x);
        SlowVec th = wrap01(p.theta);
        SlowVec lift = p.theta, prev = lift;
        auto emit = [&](std::size_t i, const SlowVec& v) {
            double* tp = &e.theta[(k * nt + i) * d];
            double* zp = &e.zeta[(k * nt + i) * d];
            for (int j = 0; j < d; ++j) {
                tp[j] = v[j];
                zp[j] = eps > 0.0 ? (v[j] - e.theta_bar[i][j]) * inv_sqrt : 0.0;
            }
        };
        std::size_t i = 0;
        std::int64_t j = 0;
        while (true) {
            while (i < nt && need[i] == j) {
                emit(i, nodes[i].frac == 0.0 ? lift : path_value(prev, lift, nodes[i].frac));
                ++i;
            }
            if (i >= nt) break;
            const StepResult r = step(s, eps, x, th);
            prev = lift;
            x = r.x;
            th = r.theta;
            lift = SlowVec(prev + r.increment);
            ++j;
        }
    });
    return e;
}

// ---------------------------------------------------------------------------

TestFn coordinate_fn(int d, int j) {
    return {"coord" + std::to_string(j), [j](const SlowVec& z) { return z[j]; },
            [d, j](const SlowVec&) {
                SlowVec g = SlowVec::Zero(d);
                g[j] = 1.0;
                return g;
            },
            [d](const SlowVec&) { return SlowMat(SlowMat::Zero(d, d)); }};
}

TestFn product_fn(int d, int i, int j) {
    return {"prod" + std::to_string(i) + std::to_string(j), [i, j](const SlowVec& z) { return z[i] * z[j]; },
            [d, i, j](const SlowVec& z) {
                SlowVec g = SlowVec::Zero(d);
                g[i] += z[j];
                g[j] += z[i];
                return g;
            },
            [d, i, j](const SlowVec&) {
                SlowMat h = SlowMat::Zero(d, d);
                h(i, j) += 1.0;
                h(j, i) += 1.0;
                return h;
            }};
}

TestFn square_norm_fn(int d) {
    return {"sqnorm", [](const SlowVec& z) { return z.squaredNorm(); }, [](const SlowVec& z) { return SlowVec(2.0 * z); },
            [d](const SlowVec&) { return SlowMat(2.0 * SlowMat::Identity(d, d)); }};
}

TestFn bump_fn(const SlowVec& center, double width) {
    // b(q) = exp(1 - 1/(1 - q)) with q = |z - c|^2 / w^2.
    const double w2 = width * width;
    const int d = static_cast<int>(center.size());
    auto q_of = [center, w2](const SlowVec& z) { return (z - center).squaredNorm() / w2; };
    return {"bump",
            [q_of](const SlowVec& z) {
                const double q = q_of(z);
                return q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
            },
            [q_of, center, w2, d](const SlowVec& z) {
                const double q = q_of(z);
                if (q >= 1.0) return SlowVec(SlowVec::Zero(d));
                const double b = std::exp(1.0 - 1.0 / (1.0 - q));
                const double bq = -b / ((1.0 - q) * (1.0 - q));
                return SlowVec(bq * 2.0 * (z - center) / w2);
            },
            [q_of, center, w2, d](const SlowVec& z) {
                const double q = q_of(z);
                if (q >= 1.0) return SlowMat(SlowMat::Zero(d, d));
                const double b = std::exp(1.0 - 1.0 / (1.0 - q));
                const double u = 1.0 - q;
                const double bq = -b / (u * u);
                const double bqq = b / (u * u * u * u) - 2.0 * b / (u * u * u);
                const SlowVec dq = 2.0 * (z - center) / w2;
                return SlowMat(bqq * dq * dq.transpose() + bq * (2.0 / w2) * SlowMat::Identity(d, d));
            }};
}

TestFn cos_fn(const SlowVec& lam) {
    return {"cos", [lam](const SlowVec& z) { return std::cos(lam.dot(z)); },
            [lam](const SlowVec& z) { return SlowVec(-std::sin(lam.dot(z)) * lam); },
            [lam](const SlowVec& z) { return SlowMat(-std::cos(lam.dot(z)) * lam * lam.transpose()); }};
}

TestFn sin_fn(const SlowVec& lam) {
    return {"sin", [lam](const SlowVec& z) { return std::sin(lam.dot(z)); },
            [lam](const SlowVec& z) { return SlowVec(std::cos(lam.dot(z)) * lam); },
            [lam](const SlowVec& z) { return SlowMat(-std::sin(lam.dot(z)) * lam * lam.transpose()); }};
}

TestFn constant_fn(int d, double c) {
    return {"const", [c](const SlowVec&) { return c; }, [d](const SlowVec&) { return SlowVec(SlowVec::Zero(d)); },
            [d](const SlowVec&) { return SlowMat(SlowMat::Zero(d, d)); }};
}

std::vector<TestFn> builtin_test_functions(int d) {
    std::vector<TestFn> v;
    for (int j = 0; j < d; ++j) v.push_back(coordinate_fn(d, j));
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) v.push_back(product_fn(d, i, j));
    v.push_back(square_norm_fn(d));
    v.push_back(bump_fn(SlowVec::Zero(d), 2.0));
    const SlowVec lam = SlowVec::Ones(d);
    v.push_back(cos_fn(lam));
    v.push_back(sin_fn(lam));
    v.push_back(constant_fn(d, 1.0));
    return v;
}

Weight constant_weight() {
    return {"one", [](const SlowVec&) { return 1.0; }};
}

Weight periodic_bump(const SlowVec& center, double kappa) {
    return {"bump", [center, kappa](const SlowVec& th) {
                double w = 1.0;
                for (Eigen::Index j = 0; j < th.size(); ++j)
                    w *= std::exp(kappa * (std::cos(kTwoPi * (th[j] - center[j])) - 1.0));
                return w;
            }};
}

Weight cosine_weight(const SlowVec& center, double amp) {
    return {"cosine", [center, amp](const SlowVec& th) {
                double w = 1.0;
                for (Eigen::Index j = 0; j < th.size(); ++j) w *= 1.0 + amp * std::cos(kTwoPi * (th[j] - center[j]));
                return w;
            }};
}

// ---------------------------------------------------------------------------

Estimate sup_error(const Ensemble& e) {
    std::vector<double> v(e.N, 0.0);
    for (std::size_t k = 0; k < e.N; ++k)
        for (std::size_t i = 0; i < e.nt(); ++i) v[k] = std::max(v[k], (e.theta_at(k, i) - e.theta_bar[i]).norm());
    return mean_se(v);
}

namespace {

LineFit log_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) return {};
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    if (lx.size() < 2) return {};
    return fit_line(lx, ly);
}

}  // namespace

AveragingReport averaging_error(const std::vector<const Ensemble*>& ensembles, double slope_lo, double slope_hi) {
    std::vector<const Ensemble*> es = ensembles;
    std::stable_sort(es.begin(), es.end(), [](const Ensemble* a, const Ensemble* b) { return a->eps > b->eps; });
    for (std::size_t i = 1; i < es.size(); ++i)
        if (!(es[i]->eps < es[i - 1]->eps)) throw PreconditionError("averaging_error: eps values must be distinct");
    if (es.size() < 3) throw PreconditionError("averaging_error: need at least 3 values of eps");
    AveragingReport r;
    r.slope_lo = slope_lo;
    r.slope_hi = slope_hi;
    std::vector<double> x, y;
    for (const Ensemble* e : es) {
        r.rows.push_back({e->eps, e->N, sup_error(*e)});
        x.push_back(e->eps);
        y.push_back(r.rows.back().sup_error.value);
    }
    r.monotone = true;
    for (std::size_t i = 1; i < r.rows.size(); ++i)
        r.monotone = r.monotone && r.rows[i].sup_error.value < r.rows[i - 1].sup_error.value;
    r.fit = log_fit(x, y);
    r.slope_ok = r.fit.slope >= slope_lo && r.fit.slope <= slope_hi;
    r.pass = r.monotone && r.slope_ok;
    return r;
}

MomentReport moment_scaling(const Ensemble& ens, double min_gap_in_eps, double band_lo, double band_hi,
                            double exponent4_min) {
    const std::size_t nt = ens.nt();
    if (nt < 2) throw PreconditionError("moment_scaling: need at least 2 output times");
    const double t0 = ens.times.front();
    const double T = ens.times.back() - t0;
    const double dt = ens.times[1] - t0;
    for (std::size_t i = 0; i < nt; ++i)
        if (std::abs(ens.times[i] - t0 - dt * i) > 1e-9 * std::max(1.0, T))
            throw PreconditionError("moment_scaling: output times must be equally spaced");

    MomentReport r;
    r.eps = ens.eps;
    r.min_gap = min_gap_in_eps * ens.eps;
    r.band_lo = band_lo;
    r.band_hi = band_hi;
    r.exponent4_min = exponent4_min;
    for (int j = 0;; ++j) {
        const double gap = T / std::ldexp(1.0, j);
        const double mf = gap / dt;
        const auto m = static_cast<std::size_t>(std::llround(mf));
        if (m < 1 || std::abs(mf - m) > 1e-6) break;
        const std::size_t windows = nt - m;
        std::vector<double> a2(ens.N), a4(ens.N);
        for (std::size_t k = 0; k < ens.N; ++k) {
            std::vector<double> s2(windows), s4(windows);
            for (std::size_t i = 0; i < windows; ++i) {
                const double q = (ens.zeta_at(k, i + m) - ens.zeta_at(k, i)).squaredNorm();
                s2[i] = q;
                s4[i] = q * q;
            }
            a2[k] = pairwise_sum(s2) / static_cast<double>(windows);
            a4[k] = pairwise_sum(s4) / static_cast<double>(windows);
        }
        MomentRow row;
        row.gap = gap;
        row.windows = windows;
        row.m2 = mean_se(a2);
        row.m4 = mean_se(a4);
        row.ratio2 = row.m2.value / gap;
        row.ratio4 = row.m4.value / (gap * gap);
        r.rows.push_back(row);
        if (m == 1) break;
    }
    std::reverse(r.rows.begin(), r.rows.end());

    std::vector<double> g, m2, m4;
    r.ratio2_lo = std::numeric_limits<double>::infinity();
    r.ratio2_hi = -std::numeric_limits<double>::infinity();
    for (const MomentRow& row : r.rows) {
        r.max_ratio2 = std::max(r.max_ratio2, row.ratio2);
        r.max_ratio4 = std::max(r.max_ratio4, row.ratio4);
        if (row.gap < r.min_gap) continue;
        r.ratio2_lo = std::min(r.ratio2_lo, row.ratio2);
        r.ratio2_hi = std::max(r.ratio2_hi, row.ratio2);
        g.push_back(row.gap);
        m2.push_back(row.m2.value);
        m4.push_back(row.m4.value);
    }
    if (g.empty()) {
        r.ratio2_lo = r.ratio2_hi = 0.0;
        return r;
    }
    r.fit2 = log_fit(g, m2);
    r.fit4 = log_fit(g, m4);
    r.ratio_ok = r.ratio2_lo >= band_lo && r.ratio2_hi <= band_hi;
    r.exponent_ok = g.size() >= 2 && r.fit4.slope >= exponent4_min;
    r.pass = r.ratio_ok && r.exponent_ok;
    return r;
}

// ---------------------------------------------------------------------------

namespace {

struct Coefficients {
    std::vector<SlowMat> B, S2;
};

Coefficients coefficients(const Ensemble& ens, const CovarianceTrajectory& cov, std::size_t upto) {
    Coefficients c;
    for (std::size_t i = 0; i <= upto; ++i) {
        c.B.push_back(cov.B(ens.times[i]));
        c.S2.push_back(cov.sigma2_at(ens.times[i]));
    }
    return c;
}

// A(X(t)) - A(X(s)) - trapezoid of the generator over [t_s, t_t] for trajectory k.
double increment_residual(const Ensemble& ens, std::size_t k, const TestFn& A, Variant variant,
                          const LimitModel& lim, const Coefficients& c, std::size_t si, std::size_t ti) {
    if (si == ti) return 0.0;
    std::vector<double> L(ti - si + 1);
    for (std::size_t i = si; i <= ti; ++i) {
        if (variant == Variant::Fluctuation) {
            const SlowVec z = ens.zeta_at(k, i);
            L[i - si] = A.grad(z).dot(c.B[i] * z) + 0.5 * c.S2[i].cwiseProduct(A.hess(z)).sum();
        } else {
            const SlowVec th = ens.theta_at(k, i);
            L[i - si] = A.grad(th).dot(lim.field->omega_bar(th));
        }
    }
    double integral = 0.0;
    for (std::size_t i = si; i < ti; ++i)
        integral += 0.5 * (ens.times[i + 1] - ens.times[i]) * (L[i - si] + L[i + 1 - si]);
    const SlowVec a = variant == Variant::Fluctuation ? ens.zeta_at(k, ti) : ens.theta_at(k, ti);
    const SlowVec b = variant == Variant::Fluctuation ? ens.zeta_at(k, si) : ens.theta_at(k, si);
    return A.value(a) - A.value(b) - integral;
}

}  // namespace

ResidualReport generator_residual(const Ensemble& ens, const TestFn& A, Variant variant, const LimitModel& lim,
                                  double slack_c, unsigned threads, std::size_t t_index) {
    const std::size_t ti = t_index == SIZE_MAX ? ens.nt() - 1 : t_index;
    if (ti >= ens.nt()) throw PreconditionError("generator_residual: time index out of range");
    Coefficients c;
    if (variant == Variant::Fluctuation) c = coefficients(ens, *lim.cov, ti);
    std::vector<double> r(ens.N);
    parallel_for(ens.N, threads, [&](std::size_t k) { r[k] = increment_residual(ens, k, A, variant, lim, c, 0, ti); });
    ResidualReport rep;
    rep.test_fn = A.name;
    rep.variant = variant == Variant::Fluctuation ? "fluctuation" : "averaged";
    rep.conditioning = "none";
    rep.s = ens.times.front();
    rep.t = ens.times[ti];
    rep.eps = ens.eps;
    rep.residual = mean_se(r);
    rep.slack = slack_c * std::sqrt(ens.eps);
    rep.pass = std::abs(rep.residual.value) <= 3.0 * rep.residual.std_error + rep.slack;
    return rep;
}

ResidualReport martingale_residual(const Ensemble& ens, const TestFn& A, const Conditioning& cond,
                                   std::size_t s_index, std::size_t t_index, const LimitModel& lim, double slack_c) {
    if (!(s_index <= t_index && t_index < ens.nt()))
        throw PreconditionError("martingale_residual: need s <= t within the output times");
    for (const auto& f : cond.factors)
        if (f.first >= s_index) throw PreconditionError("martingale_residual: conditioning times must precede s");
    const Coefficients c = coefficients(ens, *lim.cov, t_index);
    std::vector<double> r(ens.N);
    for (std::size_t k = 0; k < ens.N; ++k) {
        double w = 1.0;
        for (const auto& [i, B] : cond.factors) w *= B.value(ens.theta_at(k, i));
        r[k] = w * increment_residual(ens, k, A, Variant::Fluctuation, lim, c, s_index, t_index);
    }
    ResidualReport rep;
    rep.test_fn = A.name;
    rep.variant = "fluctuation";
    rep.conditioning = cond.name.empty() ? "none" : cond.name;
    rep.s = ens.times[s_index];
    rep.t = ens.times[t_index];
    rep.eps = ens.eps;
    rep.residual = mean_se(r);
    rep.slack = slack_c * std::sqrt(ens.eps);
    rep.pass = std::abs(rep.residual.value) <= 3.0 * rep.residual.std_error + rep.slack;
    return rep;
}

// ---------------------------------------------------------------------------

CltReport clt_test(const Ensemble& ens, const CovarianceTrajectory& cov, const CltTolerances& tol) {
    const SlowVec& th0 = cov.averaged().theta0;
    if (th0.size() != ens.theta_bar0.size() || (th0 - ens.theta_bar0).norm() != 0.0)
        throw PreconditionError("clt_test: ensemble and covariance start from different theta0");
    if (ens.times.back() > cov.T() * (1.0 + 1e-12))
        throw PreconditionError("clt_test: ensemble horizon exceeds the covariance horizon");
    const int d = ens.d;
    const std::size_t N = ens.N;
    const double slack = tol.slack_c * std::sqrt(ens.eps);
    CltReport rep;
    rep.eps = ens.eps;
    rep.N = N;
    rep.tol = tol;

    std::vector<double> buf(N);
    auto coord = [&](std::size_t i, int a) {
        std::vector<double> v(N);
        for (std::size_t k = 0; k < N; ++k) v[k] = ens.zeta[(k * ens.nt() + i) * d + a];
        return v;
    };

    for (std::size_t i = 0; i < ens.nt(); ++i) {
        CltRow row;
        row.t = ens.times[i];
        std::vector<std::vector<double>> c(d);
        for (int a = 0; a < d; ++a) {
            c[a] = coord(i, a);
            row.mean.push_back(mean_se(c[a]));
            for (std::size_t k = 0; k < N; ++k) c[a][k] -= row.mean[a].value;
        }
        row.cov.resize(d, d);
        row.cov_se.resize(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                for (std::size_t k = 0; k < N; ++k) buf[k] = c[a][k] * c[b][k];
                const Estimate e = mean_se(buf);
                row.cov(a, b) = e.value;
                row.cov_se(a, b) = e.std_error;
            }
        row.Sigma = cov.Sigma(row.t);
        row.abs_error = (row.cov - row.Sigma).norm();
        const double sn = row.Sigma.norm();
        row.rel_error = sn > 0.0 ? row.abs_error / sn : 0.0;
        row.rel_error_se = sn > 0.0 ? row.cov_se.norm() / sn : 0.0;
        for (int a = 0; a < d; ++a) {
            std::vector<double> p3(N), p4(N);
            for (std::size_t k = 0; k < N; ++k) {
                const double q = c[a][k] * c[a][k];
                buf[k] = q;
                p3[k] = q * c[a][k];
                p4[k] = q * q;
            }
            const double m2 = pairwise_sum(buf) / N, m3 = pairwise_sum(p3) / N, m4 = pairwise_sum(p4) / N;
            row.skewness.push_back(m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0);
            row.excess_kurtosis.push_back(m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0);
        }
        rep.rows.push_back(std::move(row));
    }

    const std::size_t last = ens.nt() - 1;
    const CltRow& fin = rep.rows.back();
    const SlowVec zero = SlowVec::Zero(d);
    const SlowVec dir = SlowVec::Ones(d) / std::sqrt(static_cast<double>(d));
    std::vector<double> re(N), im(N);
    rep.charfn_ok = true;
    for (double c : {0.5, 1.0, 1.5, 2.0, 3.0}) {
        CharFnRow row;
        row.t = fin.t;
        row.lambda = c * dir;
        for (std::size_t k = 0; k < N; ++k) {
            const double ph = row.lambda.dot(ens.zeta_at(k, last));
            re[k] = std::cos(ph);
            im[k] = std::sin(ph);
        }
        row.emp_re = mean_se(re);
        row.emp_im = mean_se(im);
        const CharValue cv = gaussian_charfn(cov, row.lambda, 0.0, row.t, zero);
        row.re = std::exp(cv.log_magnitude) * std::cos(cv.phase);
        row.im = std::exp(cv.log_magnitude) * std::sin(cv.phase);
        row.within = std::abs(row.emp_re.value - row.re) <= 3.0 * row.emp_re.std_error + slack &&
                     std::abs(row.emp_im.value - row.im) <= 3.0 * row.emp_im.std_error + slack;
        rep.charfn_ok = rep.charfn_ok && row.within;
        rep.charfn.push_back(row);
    }

    rep.two_time_ok = true;
    if (ens.nt() >= 3) {
        for (std::size_t si : {ens.nt() / 4, ens.nt() / 2, (3 * ens.nt()) / 4}) {
            if (si == 0 || si >= last) continue;
            TwoTimeRow row;
            row.s = ens.times[si];
            row.t = ens.times[last];
            row.empirical.resize(d, d);
            row.empirical_se.resize(d, d);
            row.predicted = cov.two_time_covariance(row.s, row.t);
            row.within = true;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    const double ma = rep.rows[si].mean[a].value, mb = fin.mean[b].value;
                    for (std::size_t k = 0; k < N; ++k)
                        buf[k] = (ens.zeta[(k * ens.nt() + si) * d + a] - ma) * (ens.zeta[(k * ens.nt() + last) * d + b] - mb);
                    const Estimate e = mean_se(buf);
                    row.empirical(a, b) = e.value;
                    row.empirical_se(a, b) = e.std_error;
                    row.within = row.within && std::abs(e.value - row.predicted(a, b)) <= 3.0 * e.std_error + slack;
                }
            rep.two_time_ok = rep.two_time_ok && row.within;
            rep.two_time.push_back(row);
        }
    }

    if (tol.abs_var >= 0.0) {
        // Degenerate limit: only the size of the covariance is meaningful.
        rep.cov_ok = fin.cov.trace() <= tol.abs_var;
        rep.skew_ok = rep.kurt_ok = true;
    } else {
        rep.cov_ok = fin.rel_error <= tol.rel_cov;
        rep.skew_ok = std::all_of(fin.skewness.begin(), fin.skewness.end(), [&](double s) { return std::abs(s) <= tol.skew; });
        rep.kurt_ok = std::all_of(fin.excess_kurtosis.begin(), fin.excess_kurtosis.end(),
                                  [&](double s) { return std::abs(s) <= tol.kurt; });
    }
    rep.pass = rep.cov_ok && rep.skew_ok && rep.kurt_ok && rep.charfn_ok && rep.two_time_ok;
    return rep;
}

Estimate frozen_birkhoff_variance(const FastSlowSystem& sys, const SlowVec& theta0, double omega_bar,
                                  std::int64_t n, std::size_t samples, std::uint64_t seed, unsigned threads) {
    if (n < 1 || samples < 2) throw PreconditionError("frozen_birkhoff_variance: need n >= 1 and samples >= 2");
    std::vector<double> S(samples);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    parallel_for(samples, threads, [&](std::size_t k) {
        Stream st(seed, k);
        double x = st.uniform();
        double acc = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const MapValue mv = sys.eval(x, theta0);
            acc += mv.omega[0] - omega_bar;
            x = wrap01(mv.f_lift);
        }
        S[k] = acc * norm;
    });
    const double mean = pairwise_sum(S) / static_cast<double>(samples);
    for (double& v : S) v = (v - mean) * (v - mean);
    Estimate e = mean_se(S);
    e.value *= static_cast<double>(samples) / static_cast<double>(samples - 1);
    return e;
}

// ---------------------------------------------------------------------------

ShadowStudy shadow_study(const FastSlowSystem& sys, double eps, std::size_t points, std::uint64_t seed,
                         const ShadowOptions& opt, unsigned threads) {
    if (!(eps > 0.0)) throw PreconditionError("shadow_study: eps must be positive");
    const int d = sys.dim();
    ShadowStudy st;
    st.eps = eps;
    st.points = points;
    st.n = static_cast<std::int64_t>(std::floor(1.0 / std::sqrt(eps) + 1e-9));
    std::vector<ShadowSolution> sols(points);
    std::vector<std::string> errs(points);
    parallel_for(points, threads, [&](std::size_t p) {
        Stream s(seed, p);
        const double x0 = s.uniform();
        SlowVec th0(d), ths(d);
        for (int j = 0; j < d; ++j) th0[j] = s.uniform();
        for (int j = 0; j < d; ++j) ths[j] = th0[j] + eps * (2.0 * s.uniform() - 1.0) / std::sqrt(static_cast<double>(d));
        try {
            sols[p] = shadow_solve(sys, eps, x0, th0, ths, st.n, opt);
        } catch (const NumericalError& e) {
            errs[p] = e.what();
        }
    });
    for (std::size_t p = 0; p < points; ++p) {
        if (!errs[p].empty()) {
            if (st.failures++ == 0) st.first_failure = errs[p];
            continue;
        }
        const ShadowSolution& s = sols[p];
        st.max_residual = std::max(st.max_residual, s.residual);
        st.max_terminal_gap = std::max(st.max_terminal_gap, s.terminal_gap);
        st.max_shadow_constant = std::max(st.max_shadow_constant, s.shadow_constant);
        st.max_derivative_exponent = std::max(st.max_derivative_exponent, s.derivative_exponent);
        st.derivative_ok = st.derivative_ok && s.derivative_bound_ok;
    }
    return st;
}

StandardPair random_pair(int d, double eps, const PairConstants& k, Stream& s) {
    const double a = s.uniform();
    const double L = k.delta * (0.5 + 0.5 * s.uniform());
    SlowVec th0(d), amp(d), ph(d), q(d);
    const double rd = std::sqrt(static_cast<double>(d));
    for (int j = 0; j < d; ++j) {
        th0[j] = s.uniform();
        q[j] = kTwoPi * (1.0 + std::floor(2.0 * s.uniform())) / L;
        ph[j] = kTwoPi * s.uniform();
        const double cap = std::min(eps * k.c1 / (2.0 * rd * q[j]), eps * k.D * k.c1 / (2.0 * rd * q[j] * q[j]));
        amp[j] = cap * (0.2 + 0.8 * s.uniform());
    }
    const double q2 = kTwoPi / L;
    const double beta = std::min(5.0, 0.5 * k.c2) / q2 * s.uniform();
    const double ph2 = kTwoPi * s.uniform();
    return make_pair(
        a, a + L,
        [=](double x) {
            SlowVec g(d);
            for (int j = 0; j < d; ++j) g[j] = th0[j] + amp[j] * std::sin(q[j] * (x - a) + ph[j]);
            return g;
        },
        [=](double x) { return std::exp(beta * std::sin(q2 * (x - a) + ph2)); }, eps);
}

std::vector<std::pair<std::string, TestFunction>> pushforward_test_functions(int) {
    auto sum = [](const SlowVec& th) { return th.sum(); };
    return {
        {"cos(2pi(x+s))", [=](double x, const SlowVec& th) { return std::cos(kTwoPi * (x + sum(th))); }},
        {"sin(2pi x) s", [=](double x, const SlowVec& th) { return std::sin(kTwoPi * x) * sum(th); }},
        {"exp(cos 2pi x)", [](double x, const SlowVec&) { return std::exp(std::cos(kTwoPi * x)); }},
        {"s^2", [=](double, const SlowVec& th) { return sum(th) * sum(th); }},
        {"cos(4pi x) sin(2pi s)",
         [=](double x, const SlowVec& th) { return std::cos(2.0 * kTwoPi * x) * std::sin(kTwoPi * sum(th)); }},
    };
}

PushforwardStudy pushforward_study(const FastSlowSystem& sys, double eps, std::size_t pairs, std::uint64_t seed,
                                   const PairConstants& k, unsigned threads, int refine) {
    const auto fns = pushforward_test_functions(sys.dim());
    PushforwardStudy st;
    st.eps = eps;
    st.pairs = pairs;
    st.functions = fns.size();
    st.refine = refine;
    std::vector<double> err(pairs, 0.0);
    std::vector<std::size_t> outs(pairs, 0);
    std::vector<std::string> fail(pairs);
    DecomposeOptions opt;
    opt.constants = k;
    parallel_for(pairs, threads, [&](std::size_t i) {
        Stream s(seed, i);
        const StandardPair p = random_pair(sys.dim(), eps, k, s);
        StandardFamily out;
        try {
            out = pushforward_decompose(StandardFamily::single(p), sys, eps, opt);
        } catch (const NumericalError& e) {
            fail[i] = e.what();
            return;
        }
        outs[i] = out.pairs.size();
        for (const StandardPair& q : out.pairs) {
            const PairValidation v = validate_pair(q, k);
            if (!v.ok && fail[i].empty()) fail[i] = "revalidation: " + v.failure;
        }
        for (const auto& [name, g] : fns)
            err[i] = std::max(err[i], std::abs(integrate(out, g) - integrate_pushed(p, sys, eps, g, refine)));
    });
    for (std::size_t i = 0; i < pairs; ++i) {
        st.max_error = std::max(st.max_error, err[i]);
        st.output_pairs += outs[i];
        if (!fail[i].empty() && st.revalidated) {
            st.revalidated = false;
            st.failure = fail[i];
        }
    }
    return st;
}

}  // namespace fastslow
