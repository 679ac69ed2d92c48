#include "fastslow/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

namespace fastslow {

StepResult step(const FastSlowSystem& sys, double eps, double x, const SlowVec& theta) {
    const MapValue mv = sys.eval(x, theta);
    StepResult r;
    r.x = wrap01(mv.f_lift);
    if (eps == 0.0) {
        r.theta = theta;
        r.increment = SlowVec::Zero(theta.size());
    } else {
        r.increment = eps * mv.omega;
        r.theta = wrap01(SlowVec(theta + r.increment));
    }
    return r;
}

std::vector<OrbitPoint> orbit(const FastSlowSystem& sys, double eps, double x0, const SlowVec& theta0,
                              std::int64_t n, std::int64_t max_length) {
    if (n < 0) throw PreconditionError("orbit: n must be >= 0");
    if (n + 1 > max_length) throw PreconditionError("orbit: requested length exceeds the configured maximum");
    std::vector<OrbitPoint> out;
    out.reserve(static_cast<std::size_t>(n + 1));
    out.push_back({x0, theta0, theta0});
    for (std::int64_t k = 0; k < n; ++k) {
        const OrbitPoint& p = out.back();
        const StepResult s = step(sys, eps, p.x, p.theta);
        out.push_back({s.x, s.theta, SlowVec(p.lift + s.increment)});
    }
    return out;
}

PathNode path_node(double t, double eps) {
    if (eps == 0.0 || t <= 0.0) return {0, 0.0};
    const double s = t / eps;
    const double r = std::nearbyint(s);
    if (std::abs(s - r) <= 1e-10 * std::max(1.0, s)) return {static_cast<std::int64_t>(r), 0.0};
    const double k = std::floor(s);
    return {static_cast<std::int64_t>(k), s - k};
}

double PathSample::lipschitz() const {
    double L = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double dt = times[i] - times[i - 1];
        if (dt <= 0.0) continue;
        L = std::max(L, (lifts[i] - lifts[i - 1]).norm() / dt);
    }
    return L;
}

PathSample polygonalize(const std::vector<OrbitPoint>& orb, double eps, double T,
                        const std::vector<double>& times, bool with_fast) {
    if (eps <= 0.0) throw PreconditionError("polygonalize: eps must be > 0");
    const auto need = static_cast<std::size_t>(std::floor(T / eps)) + 2;
    if (orb.size() < need) {
        std::ostringstream os;
        os << "polygonalize: orbit has " << orb.size() << " points, need " << need;
        throw PreconditionError(os.str());
    }
    PathSample ps;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        if (t < 0.0 || t > T * (1.0 + 1e-12)) throw PreconditionError("polygonalize: time outside [0, T]");
        if (i > 0 && t < times[i - 1]) throw PreconditionError("polygonalize: times must be sorted");
        const PathNode nd = path_node(t, eps);
        const auto k = static_cast<std::size_t>(nd.k);
        if (k + 1 >= orb.size()) throw PreconditionError("polygonalize: orbit too short");
        const SlowVec lift = path_value(orb[k].lift, orb[k + 1].lift, nd.frac);
        ps.times.push_back(t);
        ps.lifts.push_back(lift);
        ps.values.push_back(wrap01(lift));
        if (with_fast) ps.fast_values.push_back(orb[k].x);
    }
    return ps;
}

// ---------------------------------------------------------------------------

namespace {

struct Jet {
    double fx;
    SlowVec ft;
    SlowVec wx;
    SlowMat wt;
};

std::vector<Jet> jets_along(const FastSlowSystem& sys, const std::vector<OrbitPoint>& orb, std::int64_t n) {
    std::vector<Jet> j(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        const auto& p = orb[static_cast<std::size_t>(k)];
        j[k] = {sys.dfdx(p.x, p.theta), sys.dfdtheta(p.x, p.theta), sys.domega_dx(p.x, p.theta),
                sys.domega_dtheta(p.x, p.theta)};
    }
    return j;
}

/// Central slope at step `from` for horizon m, and log r accumulated over [from, m).
struct Central {
    SlowVec s;
    double log_r;
    double max_step_log = 0.0;  // largest |log det| of a single step factor
};

Central central_slope(const std::vector<Jet>& jets, double eps, std::int64_t m, int d) {
    // Backward pass for the slopes, then a forward pass for the vertical factors.
    std::vector<SlowVec> sig(static_cast<std::size_t>(m) + 1);
    sig[m] = SlowVec::Zero(d);
    const SlowMat I = SlowMat::Identity(d, d);
    for (std::int64_t k = m - 1; k >= 0; --k) {
        const Jet& J = jets[k];
        const SlowVec& nx = sig[k + 1];
        const double den = J.fx - eps * nx.dot(J.wx);
        sig[k] = (SlowVec((nx.transpose() * (I + eps * J.wt)).transpose()) - J.ft) / den;
    }
    Central c{sig[0], 0.0};
    for (std::int64_t k = 0; k < m; ++k) {
        const Jet& J = jets[k];
        const SlowMat M = I + eps * J.wt + eps * J.wx * sig[k].transpose();
        const double lf = std::log(std::abs(M.determinant()));
        c.log_r += lf;
        c.max_step_log = std::max(c.max_step_log, std::abs(lf));
    }
    return c;
}

}  // namespace

double cone_constant(const FastSlowSystem& sys) { return (sys.K() + 1.0) / (sys.lambda() - 2.0); }

std::vector<ConeFrame> cone_frames(const FastSlowSystem& sys, double eps, double x0, const SlowVec& theta0,
                                   std::int64_t n) {
    const int d = sys.dim();
    const double c = cone_constant(sys);
    if (eps < 0.0) throw PreconditionError("cone_frames: eps must be >= 0");
    if (eps * sys.K() * c > 1.0) throw PreconditionError("cone_frames: requires eps*K*c <= 1");
    const auto orb = orbit(sys, eps, x0, theta0, n);
    const auto jets = jets_along(sys, orb, n);
    const double a = c * sys.bounds().sup_dtheta_f / sys.lambda();
    const SlowMat I = SlowMat::Identity(d, d);

    std::vector<ConeFrame> fr(static_cast<std::size_t>(n) + 1);
    SlowVec u = SlowVec::Zero(d);
    double log_v = 0.0, log_G = 0.0, b = 0.0;
    for (std::int64_t m = 0; m <= n; ++m) {
        if (m > 0) {
            const Jet& J = jets[m - 1];
            const double den = J.fx + eps * J.ft.dot(u);
            if (!(den > 0.0)) throw ConeViolation(m, "cone_frames: expansion factor not positive");
            log_v += std::log(den);
            log_G += std::log(J.fx);
            u = (J.wx + (I + eps * J.wt) * u) / den;
        }
        ConeFrame& F = fr[m];
        F.n = m;
        F.u_vec = u;
        F.u = u[0];
        F.log_v = log_v;
        F.log_Gamma = log_G;
        F.c = c;
        F.a = a;
        if (u.norm() > c * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "cone_frames: |u| = " << u.norm() << " exceeds c = " << c << " at step " << m;
            throw ConeViolation(m, os.str());
        }
        const double slack = a * eps * static_cast<double>(m) + 1e-12 * (1.0 + static_cast<double>(m));
        if (std::abs(log_v - log_G) > slack) {
            std::ostringstream os;
            os << "cone_frames: v outside Gamma*exp(+-a eps n) at step " << m;
            throw ConeViolation(m, os.str());
        }
        if (m == 0) {
            F.s = SlowVec::Zero(d);
            F.log_r = 0.0;
        } else {
            const Central cs = central_slope(jets, eps, m, d);
            F.s = cs.s;
            F.log_r = cs.log_r;
            if (cs.s.norm() > sys.K() * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "cone_frames: |s| = " << cs.s.norm() << " exceeds K at step " << m;
                throw ConeViolation(m, os.str());
            }
            if (eps > 0.0) {
                b = std::max(b, cs.max_step_log / eps);
                b = std::max(b, std::abs(F.log_r - fr[m - 1].log_r) / eps);
            }
        }
    }
    for (auto& F : fr) F.b = b;
    return fr;
}

// ---------------------------------------------------------------------------

namespace {

/// Preimage of `target` (mod 1) under x -> f(x, theta) on the branch nearest `guess`.
double preimage_near(const FastSlowSystem& sys, const SlowVec& theta, double target, double guess) {
    const double Fg = sys.f_lift(guess, theta);
    const double mismatch = wrap_signed(Fg - target);
    if (std::abs(mismatch) > 0.25) {
        std::ostringstream os;
        os << "shadow_solve: branch ambiguity (image mismatch " << mismatch << ")";
        throw ShadowingFailure(os.str());
    }
    if (mismatch == 0.0) return guess;
    const double T = Fg - mismatch;
    const double w = 0.5 / sys.lambda() + 1e-12;
    double lo = guess - w, hi = guess + w;
    double y = guess;
    for (int it = 0; it < 200; ++it) {
        const double r = sys.f_lift(y, theta) - T;
        if (r == 0.0) return y;
        if (r > 0.0)
            hi = std::min(hi, y);
        else
            lo = std::max(lo, y);
        double yn = y - r / sys.dfdx(y, theta);
        if (!(yn > lo && yn < hi)) yn = 0.5 * (lo + hi);
        if (std::abs(yn - y) <= 1e-17 * std::max(1.0, std::abs(y)) || hi - lo <= 1e-17) return yn;
        y = yn;
    }
    throw ShadowingFailure("shadow_solve: inverse-branch Newton did not converge");
}

}  // namespace

ShadowSolution shadow_solve(const FastSlowSystem& sys, double eps, double x0, const SlowVec& theta0,
                            const SlowVec& theta_star, std::int64_t n, const ShadowOptions& opt,
                            const SlowVec* g_prime) {
    const int d = sys.dim();
    if (n < 0) throw PreconditionError("shadow_solve: n must be >= 0");
    if (torus_distance(theta_star, theta0) > eps * (1.0 + 1e-12) + 1e-15)
        throw PreconditionError("shadow_solve: requires |theta_star - theta0| <= eps");
    if (eps > 0.0 && static_cast<double>(n) > opt.C / std::sqrt(eps) * (1.0 + 1e-12))
        throw PreconditionError("shadow_solve: n exceeds C eps^{-1/2}");

    const auto orb = orbit(sys, eps, x0, theta0, n);
    ShadowSolution sol;
    sol.n = n;
    sol.theta_star = theta_star;
    sol.true_orbit.resize(static_cast<std::size_t>(n) + 1);
    for (std::int64_t k = 0; k <= n; ++k) sol.true_orbit[k] = orb[k].x;

    std::vector<double>& xs = sol.shadow_orbit;
    xs.assign(static_cast<std::size_t>(n) + 1, 0.0);
    xs[n] = orb[n].x;
    for (std::int64_t k = n - 1; k >= 0; --k)
        xs[k] = wrap01(preimage_near(sys, theta_star, xs[k + 1], orb[k].x));
    sol.Y = xs[0];

    double log_fstar = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
        sol.residual = std::max(sol.residual, std::abs(wrap_signed(sys.f_lift(xs[k], theta_star) - xs[k + 1])));
        log_fstar += std::log(sys.dfdx(xs[k], theta_star));
        if (k >= 1 && eps > 0.0)
            sol.shadow_constant = std::max(sol.shadow_constant,
                                           torus_distance(orb[k].x, xs[k]) / (eps * static_cast<double>(k)));
    }
    if (sol.residual > opt.tol) {
        std::ostringstream os;
        os << "shadow_solve: residual " << sol.residual << " above tolerance";
        throw ShadowingFailure(os.str());
    }
    sol.terminal_gap = torus_distance(xs[n], orb[n].x);

    // Y' = (1 - G' s_n) v_n / (f_*^n)'(Y).
    const auto jets = jets_along(sys, orb, n);
    const SlowMat I = SlowMat::Identity(d, d);
    SlowVec u = SlowVec::Zero(d);
    double log_v = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
        const Jet& J = jets[k];
        const double den = J.fx + eps * J.ft.dot(u);
        log_v += std::log(den);
        u = (J.wx + (I + eps * J.wt) * u) / den;
    }
    double geo = 1.0;
    if (g_prime != nullptr && n > 0) {
        const Central cs = central_slope(jets, eps, n, d);
        geo = 1.0 - g_prime->dot(cs.s);
    }
    sol.log_abs_Y_prime = std::log(std::abs(geo)) + log_v - log_fstar;
    sol.Y_prime = (geo < 0 ? -1.0 : 1.0) * std::exp(sol.log_abs_Y_prime);
    if (n > 0 && eps > 0.0) {
        const double en2 = eps * static_cast<double>(n) * static_cast<double>(n);
        sol.derivative_exponent = std::abs(sol.log_abs_Y_prime) / en2;
        sol.derivative_bound_ok = std::abs(sol.log_abs_Y_prime) <= opt.c_sharp * en2 + 1e-12;
    } else {
        sol.derivative_bound_ok = std::abs(sol.log_abs_Y_prime) <= 1e-12;
    }
    return sol;
}

}  // namespace fastslow
