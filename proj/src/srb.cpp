#include "fastslow/srb.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fastslow/parallel.hpp"

namespace fastslow {

double UlamOperator::max_column_defect() const {
    double worst = 0.0;
    for (int j = 0; j < P.outerSize(); ++j) {
        double s = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(P, j); it; ++it) s += it.value();
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

namespace {

double snap(double v) {
    const double r = std::nearbyint(v);
    return std::abs(v - r) <= 1e-10 * std::max(1.0, std::abs(v)) ? r : v;
}

/// Solves N * F(z0 + t / N) = target for t in [0, 1]; F is increasing on the cell.
double invert_in_cell(const FastSlowSystem& sys, const SlowVec& theta, int N, double z0, double target) {
    double lo = 0.0, hi = 1.0;
    double t = 0.5;
    for (int it = 0; it < 200; ++it) {
        const double z = z0 + t / N;
        const double g = N * sys.f_lift(z, theta) - target;
        if (g == 0.0) return t;
        if (g > 0.0)
            hi = t;
        else
            lo = t;
        double tn = t - g / sys.dfdx(z, theta);
        if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
        if (std::abs(tn - t) <= 4e-16 || hi - lo <= 4e-16) return tn;
        t = tn;
    }
    throw BranchInversionFailure("ulam_operator: branch inversion did not converge");
}

}  // namespace

UlamOperator ulam_operator(const FastSlowSystem& sys, const SlowVec& theta, int N) {
    if (N < 16) throw PreconditionError("ulam_operator: N must be >= 16");
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * (sys.degree() + 3));
    for (int j = 0; j < N; ++j) {
        const double z0 = static_cast<double>(j) / N;
        const double z1 = static_cast<double>(j + 1) / N;
        const double zm = (j + 0.5) / N;
        if (!(sys.dfdx(z0, theta) > 0.0 && sys.dfdx(zm, theta) > 0.0 && sys.dfdx(z1, theta) > 0.0)) {
            std::ostringstream os;
            os << "ulam_operator: f is not monotone on cell " << j;
            throw BranchInversionFailure(os.str());
        }
        const double a = snap(N * sys.f_lift(z0, theta));
        const double b = snap(N * sys.f_lift(z1, theta));
        if (!(b > a)) throw BranchInversionFailure("ulam_operator: cell image has non-positive length");
        auto cell = static_cast<long>(std::floor(a));
        double t_prev = 0.0;
        for (long m = cell + 1; static_cast<double>(m) < b; ++m) {
            const double t = invert_in_cell(sys, theta, N, z0, static_cast<double>(m));
            if (t > t_prev) trip.emplace_back(static_cast<int>(((cell % N) + N) % N), j, t - t_prev);
            t_prev = t;
            cell = m;
        }
        if (1.0 > t_prev) trip.emplace_back(static_cast<int>(((cell % N) + N) % N), j, 1.0 - t_prev);
    }
    UlamOperator op;
    op.theta = theta;
    op.N = N;
    op.P.resize(N, N);
    op.P.setFromTriplets(trip.begin(), trip.end());
    op.P.makeCompressed();
    return op;
}

SRBDensity srb_density(const UlamOperator& op, double tol, int max_iter) {
    const int N = op.N;
    SRBDensity d;
    d.theta = op.theta;
    Eigen::VectorXd rho = Eigen::VectorXd::Ones(N);
    double prev_res = std::numeric_limits<double>::infinity();
    double res = prev_res;
    int it = 0;
    for (; it < max_iter; ++it) {
        Eigen::VectorXd next = op.P * rho;
        next *= N / next.sum();
        prev_res = res;
        res = (next - rho).cwiseAbs().mean();
        rho.swap(next);
        if (res <= tol) break;
    }
    if (res > tol) {
        std::ostringstream os;
        os << "srb_density: no convergence in " << max_iter << " iterations (residual " << res << ")";
        throw ConvergenceFailure(os.str(), res / prev_res);
    }
    d.rho = std::move(rho);
    d.iterations = it + 1;
    d.residual = (op.P * d.rho - d.rho).cwiseAbs().mean();
    return d;
}

Eigen::VectorXd cell_midpoints(int N) {
    Eigen::VectorXd x(N);
    for (int i = 0; i < N; ++i) x[i] = (i + 0.5) / N;
    return x;
}

namespace {

/// omega_hat at midpoints, N x d, centred with the discrete omega_bar.
Eigen::MatrixXd omega_table(const FastSlowSystem& sys, const SlowVec& theta, int N) {
    const int d = sys.dim();
    Eigen::MatrixXd W(N, d);
    for (int i = 0; i < N; ++i) W.row(i) = sys.omega((i + 0.5) / N, theta).transpose();
    return W;
}

}  // namespace

SlowVec average_drift(const FastSlowSystem& sys, const SRBDensity& density) {
    const int N = density.N();
    const Eigen::MatrixXd W = omega_table(sys, density.theta, N);
    return SlowVec((W.transpose() * density.rho) / N);
}

SlowVec average_drift_at(const FastSlowSystem& sys, const SlowVec& theta, int N) {
    return average_drift(sys, srb_density(ulam_operator(sys, theta, N)));
}

SlowMat drift_jacobian(const FastSlowSystem& sys, const SlowVec& theta, int N, double h) {
    if (!(h >= 1e-6 && h <= 1e-2)) throw PreconditionError("drift_jacobian: h must lie in [1e-6, 1e-2]");
    const int d = sys.dim();
    SlowMat J(d, d);
    for (int j = 0; j < d; ++j) {
        SlowVec tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        J.col(j) = (average_drift_at(sys, tp, N) - average_drift_at(sys, tm, N)) / (2 * h);
    }
    return J;
}

std::vector<SlowMat> autocovariances(const FastSlowSystem& sys, const UlamOperator& op,
                                     const SRBDensity& density, int M) {
    if (M < 0) throw PreconditionError("autocovariances: M must be >= 0");
    const int N = op.N, d = sys.dim();
    Eigen::MatrixXd W = omega_table(sys, op.theta, N);
    const Eigen::VectorXd wbar = (W.transpose() * density.rho) / N;
    W.rowwise() -= wbar.transpose();
    std::vector<SlowMat> G(static_cast<std::size_t>(M) + 1, SlowMat::Zero(d, d));
    for (int b = 0; b < d; ++b) {
        Eigen::VectorXd g = W.col(b).cwiseProduct(density.rho);
        for (int k = 0; k <= M; ++k) {
            if (k > 0) g = op.P * g;
            for (int a = 0; a < d; ++a) G[k](a, b) = W.col(a).dot(g) / N;
        }
    }
    return G;
}

int default_truncation(const FastSlowSystem& sys, double tail_tol) {
    return static_cast<int>(std::ceil(10.0 * std::log(1.0 / tail_tol) / std::log(sys.lambda())));
}

SlowMat psd_sqrt(const SlowMat& A, double clamp, double* min_eig) {
    Eigen::SelfAdjointEigenSolver<SlowMat> es(A);
    SlowVec ev = es.eigenvalues();
    if (min_eig) *min_eig = ev.size() ? ev.minCoeff() : 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -clamp) {
            std::ostringstream os;
            os << "diffusion matrix has eigenvalue " << ev[i] << " below -" << clamp;
            throw NegativeDiffusion(os.str());
        }
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    const SlowMat V = es.eigenvectors();
    SlowMat R = V * ev.asDiagonal() * V.transpose();
    return SlowMat(0.5 * (R + R.transpose()));
}

DiffusionContext diffusion_matrix(const FastSlowSystem& sys, const SlowVec& theta, const SrbOptions& opt) {
    DiffusionContext ctx;
    ctx.theta = theta;
    ctx.N = opt.N;
    ctx.M = opt.M > 0 ? opt.M : default_truncation(sys, opt.tail_tol);
    const UlamOperator op = ulam_operator(sys, theta, opt.N);
    const SRBDensity dens = srb_density(op, opt.power_tol, opt.power_max_iter);
    ctx.power_iterations = dens.iterations;
    ctx.fixed_point_residual = dens.residual;
    ctx.omega_bar = average_drift(sys, dens);
    ctx.Gamma = autocovariances(sys, op, dens, ctx.M);

    SlowMat s2 = ctx.Gamma[0];
    for (int m = 1; m <= ctx.M; ++m) s2 += ctx.Gamma[m] + ctx.Gamma[m].transpose();
    ctx.sigma2 = 0.5 * (s2 + s2.transpose());

    for (int k = (ctx.M + 1) / 2; k <= ctx.M; ++k) ctx.tail_estimate = std::max(ctx.tail_estimate, ctx.Gamma[k].norm());
    if (ctx.tail_estimate > opt.tail_tol) {
        std::ostringstream os;
        os << "diffusion_matrix: tail max |Gamma_k| = " << ctx.tail_estimate << " exceeds " << opt.tail_tol
           << " (M = " << ctx.M << ")";
        throw TruncationFailure(os.str());
    }

    ctx.sigma = psd_sqrt(ctx.sigma2, 1e-9, &ctx.min_eigenvalue_raw);

    const double g0 = ctx.Gamma[0].norm();
    std::vector<double> ks, logs;
    for (int k = 1; k <= ctx.M; ++k) {
        const double g = ctx.Gamma[k].norm();
        if (!(g > 1e-13 * std::max(g0, 1e-300))) break;
        ks.push_back(k);
        logs.push_back(std::log(g));
    }
    if (ks.size() >= 3) ctx.decay_rate = -fit_line(ks, logs).slope;

    Eigen::SelfAdjointEigenSolver<SlowMat> e0(ctx.Gamma[0]);
    Eigen::SelfAdjointEigenSolver<SlowMat> es(ctx.sigma2);
    ctx.coboundary = es.eigenvalues().minCoeff() <= opt.coboundary_tol * e0.eigenvalues().maxCoeff();

    if (opt.jacobian) ctx.D_omega_bar = drift_jacobian(sys, theta, opt.N, opt.fd_h);
    return ctx;
}

// ---------------------------------------------------------------------------

SrbCache::SrbCache(SystemPtr sys, SrbOptions opt, double quantum)
    : sys_(std::move(sys)), opt_(opt), quantum_(quantum) {
    if (!(quantum > 0.0 && quantum <= 0.5)) throw PreconditionError("SrbCache: quantum must be in (0, 0.5]");
    const double pu = 1.0 / quantum;
    per_unit_ = std::lround(pu);
    if (std::abs(pu - static_cast<double>(per_unit_)) > 1e-9 * pu)
        throw PreconditionError("SrbCache: 1/quantum must be an integer");
    opt_.jacobian = false;
}

std::shared_ptr<const DiffusionContext> SrbCache::node(const std::vector<long>& index) {
    Key key(index.size());
    for (std::size_t j = 0; j < index.size(); ++j) key[j] = ((index[j] % per_unit_) + per_unit_) % per_unit_;
    {
        std::shared_lock lock(mu_);
        auto it = map_.find(key);
        if (it != map_.end()) return it->second;
    }
    SlowVec theta(static_cast<Eigen::Index>(key.size()));
    for (std::size_t j = 0; j < key.size(); ++j) theta[j] = static_cast<double>(key[j]) / per_unit_;
    auto ctx = std::make_shared<const DiffusionContext>(diffusion_matrix(*sys_, theta, opt_));
    std::unique_lock lock(mu_);
    auto [it, inserted] = map_.emplace(key, ctx);
    return it->second;
}

void SrbCache::prefetch(const std::vector<std::vector<long>>& indices, unsigned threads) {
    std::vector<std::vector<long>> missing;
    {
        std::shared_lock lock(mu_);
        std::map<Key, bool> seen;
        for (const auto& idx : indices) {
            Key key(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) key[j] = ((idx[j] % per_unit_) + per_unit_) % per_unit_;
            if (!map_.count(key) && !seen.count(key)) {
                seen[key] = true;
                missing.push_back(key);
            }
        }
    }
    parallel_for(missing.size(), threads, [&](std::size_t i) { node(missing[i]); });
}

std::size_t SrbCache::size() const {
    std::shared_lock lock(mu_);
    return map_.size();
}

// ---------------------------------------------------------------------------

DriftField::DriftField(std::shared_ptr<SrbCache> cache)
    : cache_(std::move(cache)), d_(cache_->system().dim()) {
    fd_nodes_ = std::max(1L, std::lround(cache_->options().fd_h / cache_->quantum()));
}

template <class F>
SlowMat DriftField::interpolate(const SlowVec& theta, F&& node_value, int rows, int cols) const {
    const double pu = static_cast<double>(cache_->nodes_per_unit());
    std::vector<long> base(d_);
    std::vector<double> w(d_);
    for (int j = 0; j < d_; ++j) {
        const double s = theta[j] * pu;
        const double fl = std::floor(s);
        base[j] = static_cast<long>(fl);
        w[j] = s - fl;
    }
    SlowMat acc = SlowMat::Zero(rows, cols);
    std::vector<long> idx(d_);
    for (int corner = 0; corner < (1 << d_); ++corner) {
        double weight = 1.0;
        for (int j = 0; j < d_; ++j) {
            const bool up = (corner >> j) & 1;
            idx[j] = base[j] + (up ? 1 : 0);
            weight *= up ? w[j] : 1.0 - w[j];
        }
        if (weight == 0.0) continue;
        acc += weight * node_value(idx);
    }
    return acc;
}

SlowVec DriftField::omega_bar(const SlowVec& theta) const {
    const SlowMat m = interpolate(theta, [&](const std::vector<long>& i) { return SlowMat(cache_->node(i)->omega_bar); }, d_, 1);
    return m.col(0);
}

SlowMat DriftField::node_jacobian(const std::vector<long>& idx) const {
    SlowMat J(d_, d_);
    const double h = static_cast<double>(fd_nodes_) / static_cast<double>(cache_->nodes_per_unit());
    for (int j = 0; j < d_; ++j) {
        std::vector<long> ip = idx, im = idx;
        ip[j] += fd_nodes_;
        im[j] -= fd_nodes_;
        J.col(j) = (cache_->node(ip)->omega_bar - cache_->node(im)->omega_bar) / (2 * h);
    }
    return J;
}

SlowMat DriftField::jacobian(const SlowVec& theta) const {
    return interpolate(theta, [&](const std::vector<long>& i) { return node_jacobian(i); }, d_, d_);
}

SlowMat DriftField::sigma2(const SlowVec& theta) const {
    return interpolate(theta, [&](const std::vector<long>& i) { return cache_->node(i)->sigma2; }, d_, d_);
}

std::vector<std::vector<long>> DriftField::stencil(const std::vector<SlowVec>& thetas) const {
    std::vector<std::vector<long>> out;
    const double pu = static_cast<double>(cache_->nodes_per_unit());
    for (const auto& th : thetas) {
        std::vector<long> base(d_);
        for (int j = 0; j < d_; ++j) base[j] = static_cast<long>(std::floor(th[j] * pu));
        for (int corner = 0; corner < (1 << d_); ++corner) {
            std::vector<long> idx(d_);
            for (int j = 0; j < d_; ++j) idx[j] = base[j] + ((corner >> j) & 1);
            out.push_back(idx);
            for (int j = 0; j < d_; ++j) {
                auto ip = idx, im = idx;
                ip[j] += fd_nodes_;
                im[j] -= fd_nodes_;
                out.push_back(ip);
                out.push_back(im);
            }
        }
    }
    return out;
}

}  // namespace fastslow
