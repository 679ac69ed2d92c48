#include "fastslow/limits.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/numeric/odeint.hpp>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "fastslow/srb.hpp"

namespace fastslow {

namespace ode = boost::numeric::odeint;

DenseSolution integrate_dense(const OdeRhs& rhs, std::vector<double> x0, double t0, double t1, double tol,
                              std::size_t max_steps) {
    if (!(t1 >= t0)) throw PreconditionError("integrate_dense: need t1 >= t0");
    if (!(tol > 0.0)) throw PreconditionError("integrate_dense: tolerance must be positive");
    using state = std::vector<double>;
    DenseSolution out;
    const std::size_t n = x0.size();
    out.n_ = n;
    state f0(n);
    rhs(x0, f0, t0);
    out.t_.push_back(t0);
    out.x_.insert(out.x_.end(), x0.begin(), x0.end());
    out.f_.insert(out.f_.end(), f0.begin(), f0.end());
    if (t1 == t0) return out;

    auto sys = [&rhs](const state& x, state& dx, double t) { rhs(x, dx, t); };
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<state>());
    const double span = t1 - t0;
    stepper.initialize(x0, t0, std::min(1e-3, span / 16));
    state mid(n), f1(n);
    try {
        while (stepper.current_time() < t1) {
            if (out.t_.size() > max_steps) throw StepSizeCollapse("integrate_dense: step budget exhausted");
            const auto [ta, tb] = stepper.do_step(sys);
            if (!(tb - ta > 1e-14 * span)) {
                std::ostringstream os;
                os << "integrate_dense: step size collapsed to " << (tb - ta) << " at t = " << ta;
                throw StepSizeCollapse(os.str());
            }
            stepper.calc_state(0.5 * (ta + tb), mid);
            const state& x1 = stepper.current_state();
            rhs(x1, f1, tb);
            out.t_.push_back(tb);
            out.x_.insert(out.x_.end(), x1.begin(), x1.end());
            out.f_.insert(out.f_.end(), f1.begin(), f1.end());
            out.mid_.insert(out.mid_.end(), mid.begin(), mid.end());
        }
    } catch (const ode::step_adjustment_error& e) {
        throw StepSizeCollapse(std::string("integrate_dense: ") + e.what());
    } catch (const ode::no_progress_error& e) {
        throw StepSizeCollapse(std::string("integrate_dense: ") + e.what());
    }
    return out;
}

std::vector<double> DenseSolution::at(double t) const {
    std::vector<double> v(n_);
    if (t_.size() == 1 || t <= t_.front()) {
        std::copy_n(x_.begin(), n_, v.begin());
        return v;
    }
    std::size_t i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin());
    if (i >= t_.size()) i = t_.size() - 1;
    const std::size_t k = i - 1;
    const double ta = t_[k], tb = t_[i], h = tb - ta;
    if (t == tb) {
        std::copy_n(x_.begin() + static_cast<std::ptrdiff_t>(i * n_), n_, v.begin());
        return v;
    }
    const double s = (t - ta) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const double bump = 16.0 * s2 * (1 - s) * (1 - s);
    for (std::size_t j = 0; j < n_; ++j) {
        const double x0 = x_[k * n_ + j], x1 = x_[i * n_ + j];
        const double f0 = f_[k * n_ + j], f1 = f_[i * n_ + j];
        const double hm = 0.5 * (x0 + x1) + h * (f0 - f1) / 8.0;
        v[j] = h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1 + bump * (mid_[k * n_ + j] - hm);
    }
    return v;
}

// ---------------------------------------------------------------------------

SlowVec AveragedTrajectory::at(double t) const {
    const auto v = sol.at(t);
    SlowVec r(static_cast<Eigen::Index>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) r[j] = v[j];
    return r;
}

AveragedTrajectory solve_averaged(const VecField& drift, const SlowVec& theta0, double T, double tol) {
    if (!(T >= 0.0)) throw PreconditionError("solve_averaged: T must be >= 0");
    const auto d = static_cast<std::size_t>(theta0.size());
    AveragedTrajectory tr;
    tr.theta0 = theta0;
    tr.T = T;
    tr.tol = tol;
    tr.drift = drift;
    const OdeRhs rhs = [&](const std::vector<double>& x, std::vector<double>& dx, double) {
        SlowVec th(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) th[j] = x[j];
        const SlowVec w = drift(th);
        for (std::size_t j = 0; j < d; ++j) dx[j] = w[j];
    };
    tr.sol = integrate_dense(rhs, std::vector<double>(theta0.data(), theta0.data() + d), 0.0, T, tol);

    // Lipschitz estimate from central differences at probe points along the path.
    const double h = 1e-4;
    for (int i = 0; i <= 32; ++i) {
        const SlowVec th = tr.at(T * i / 32.0);
        SlowMat J(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) {
            SlowVec p = th, m = th;
            p[j] += h;
            m[j] -= h;
            J.col(j) = (drift(p) - drift(m)) / (2 * h);
        }
        tr.lipschitz = std::max(tr.lipschitz, J.norm());
    }
    return tr;
}

// ---------------------------------------------------------------------------

SlowMat CovarianceState::Sigma_conjugated() const {
    const SlowMat Si = S.inverse();
    return Si * J * Si.transpose();
}

CovarianceState CovarianceTrajectory::unpack(const std::vector<double>& v) const {
    const int d = d_;
    CovarianceState s;
    s.theta_bar.resize(d);
    std::size_t o = 0;
    for (int j = 0; j < d; ++j) s.theta_bar[j] = v[o++];
    auto mat = [&](SlowMat& m) {
        m.resize(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = v[o++];
    };
    mat(s.Sigma);
    mat(s.S);
    mat(s.J);
    mat(s.Phi);
    s.det = v[o];
    return s;
}

CovarianceState CovarianceTrajectory::at(double t) const { return unpack(sol_.at(t)); }

SlowMat CovarianceTrajectory::flow(double s, double t) const { return at(t).Phi * at(s).Phi.inverse(); }

SlowMat CovarianceTrajectory::two_time_covariance(double s, double t) const {
    return at(s).Sigma * flow(s, t).transpose();
}

SlowMat CovarianceTrajectory::B(double t) const { return jac_(at(t).theta_bar); }
SlowMat CovarianceTrajectory::sigma2_at(double t) const { return sigma2_(at(t).theta_bar); }

CovarianceTrajectory covariance_evolve(std::shared_ptr<const AveragedTrajectory> avg, MatField sigma2,
                                       MatField jac, double T, double tol, const std::vector<double>& out_times) {
    if (!avg) throw PreconditionError("covariance_evolve: missing averaged trajectory");
    CovarianceTrajectory ct;
    const int d = static_cast<int>(avg->theta0.size());
    ct.d_ = d;
    ct.T_ = T;
    ct.avg_ = avg;
    ct.sigma2_ = sigma2;
    ct.jac_ = jac;
    const std::size_t dd = static_cast<std::size_t>(d * d);
    const std::size_t n = static_cast<std::size_t>(d) + 4 * dd + 1;

    std::vector<double> x0(n, 0.0);
    for (int j = 0; j < d; ++j) x0[j] = avg->theta0[j];
    for (int i = 0; i < d; ++i) {
        x0[d + dd + i * d + i] = 1.0;          // S
        x0[d + 3 * dd + i * d + i] = 1.0;      // Phi
    }
    x0[n - 1] = 1.0;

    const VecField& drift = avg->drift;
    const OdeRhs rhs = [&](const std::vector<double>& x, std::vector<double>& dx, double) {
        SlowVec th(d);
        for (int j = 0; j < d; ++j) th[j] = x[j];
        std::size_t o = d;
        auto read = [&](std::size_t off) {
            SlowMat m(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) m(i, j) = x[off + i * d + j];
            return m;
        };
        const SlowMat Sig = read(o), S = read(o + dd), Phi = read(o + 3 * dd);
        const SlowMat B = jac(th);
        const SlowMat s2 = sigma2(th);
        const SlowVec w = drift(th);
        const SlowMat dSig = B * Sig + Sig * B.transpose() + s2;
        const SlowMat dS = -S * B;
        const SlowMat dJ = S * s2 * S.transpose();
        const SlowMat dPhi = B * Phi;
        for (int j = 0; j < d; ++j) dx[j] = w[j];
        auto write = [&](std::size_t off, const SlowMat& m) {
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) dx[off + i * d + j] = m(i, j);
        };
        write(o, dSig);
        write(o + dd, dS);
        write(o + 2 * dd, dJ);
        write(o + 3 * dd, dPhi);
        dx[n - 1] = -B.trace() * x[n - 1];
    };
    ct.sol_ = integrate_dense(rhs, x0, 0.0, T, tol);

    std::vector<double> check = out_times;
    if (check.empty())
        for (int i = 0; i <= 32; ++i) check.push_back(T * i / 32.0);
    ct.min_eigenvalue = std::numeric_limits<double>::infinity();
    const SlowMat I = SlowMat::Identity(d, d);
    for (double t : check) {
        const CovarianceState st = ct.at(t);
        const double scale = std::max(1.0, st.Sigma.norm());
        ct.max_route_gap = std::max(ct.max_route_gap, (st.Sigma - st.Sigma_conjugated()).norm() / scale);
        ct.max_inverse_gap = std::max(ct.max_inverse_gap, (st.S * st.Phi - I).norm());
        ct.max_liouville_gap =
            std::max(ct.max_liouville_gap, std::abs(st.S.determinant() - st.det) / std::max(1.0, std::abs(st.det)));
        Eigen::SelfAdjointEigenSolver<SlowMat> es(SlowMat(0.5 * (st.Sigma + st.Sigma.transpose())));
        ct.min_eigenvalue = std::min(ct.min_eigenvalue, es.eigenvalues().minCoeff());
        ct.times.push_back(t);
        ct.states.push_back(st);
        if (!(st.det > 0.0)) throw RouteDisagreement("covariance_evolve: det S(t) is not positive");
    }
    if (ct.max_route_gap > 1e-8 || ct.max_inverse_gap > 1e-8 || ct.max_liouville_gap > 1e-8) {
        std::ostringstream os;
        os << "covariance_evolve: routes disagree (Lyapunov vs conjugation " << ct.max_route_gap << ", S Phi - I "
           << ct.max_inverse_gap << ", Liouville " << ct.max_liouville_gap << ")";
        throw RouteDisagreement(os.str());
    }
    return ct;
}

CharValue gaussian_charfn(const CovarianceTrajectory& cov, const SlowVec& lam, double s, double t,
                          const SlowVec& zeta_s) {
    if (s > t) throw PreconditionError("gaussian_charfn: need s <= t");
    const CovarianceState a = cov.at(s), b = cov.at(t);
    const SlowMat Sti = b.S.inverse();
    const SlowVec mean = Sti * a.S * zeta_s;
    const SlowMat C = Sti * (b.J - a.J) * Sti.transpose();
    CharValue v;
    v.log_magnitude = s == t ? 0.0 : -0.5 * lam.dot(C * lam);
    v.phase = lam.dot(s == t ? zeta_s : mean);
    return v;
}

SdeGrid sde_grid(const CovarianceTrajectory& cov, double dt, double T) {
    if (!(dt > 0.0 && dt <= 1e-2)) throw PreconditionError("sde_sample: dt must be in (0, 1e-2]");
    const auto n = static_cast<std::size_t>(std::llround(T / dt));
    SdeGrid g;
    g.dt = dt;
    g.B.reserve(n);
    g.sigma.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        g.B.push_back(cov.B(t));
        g.sigma.push_back(psd_sqrt(cov.sigma2_at(t)));
    }
    return g;
}

std::vector<SlowVec> sde_sample(const SdeGrid& g, Stream& rng) {
    const std::size_t n = g.B.size();
    const int d = n ? static_cast<int>(g.B.front().rows()) : 1;
    std::vector<SlowVec> z;
    z.reserve(n + 1);
    z.push_back(SlowVec::Zero(d));
    const double sq = std::sqrt(g.dt);
    SlowVec xi(d);
    for (std::size_t k = 0; k < n; ++k) {
        for (int j = 0; j < d; ++j) xi[j] = rng.normal();
        const SlowVec& zk = z.back();
        z.push_back(zk + g.B[k] * zk * g.dt + g.sigma[k] * xi * sq);
    }
    return z;
}

std::vector<SlowVec> sde_sample(const CovarianceTrajectory& cov, Stream& rng, double dt, double T) {
    return sde_sample(sde_grid(cov, dt, T), rng);
}

}  // namespace fastslow
