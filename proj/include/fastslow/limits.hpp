#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fastslow/rng.hpp"
#include "fastslow/types.hpp"

namespace fastslow {

class StepSizeCollapse : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class RouteDisagreement : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

using VecField = std::function<SlowVec(const SlowVec&)>;
using MatField = std::function<SlowMat(const SlowVec&)>;
using OdeRhs = std::function<void(const std::vector<double>&, std::vector<double>&, double)>;

/// Accepted steps of an adaptive Dormand-Prince 5(4) run, kept for evaluation anywhere in
/// [t0, t_end]. Each step is interpolated by the quartic through both end values, both end
/// derivatives and the stepper's dense-output midpoint.
class DenseSolution {
  public:
    std::vector<double> at(double t) const;
    double t0() const { return t_.front(); }
    double t_end() const { return t_.back(); }
    std::size_t steps() const { return t_.size() - 1; }
    std::size_t dim() const { return n_; }

  private:
    friend DenseSolution integrate_dense(const OdeRhs&, std::vector<double>, double, double, double, std::size_t);
    std::size_t n_ = 0;
    std::vector<double> t_;
    std::vector<double> x_, f_;  // values and derivatives at step ends, row-major
    std::vector<double> mid_;    // midpoint values per step
};

/// Integrates x' = rhs(x, t) from t0 to t1 with absolute and relative tolerance tol.
/// Throws StepSizeCollapse if the step size falls below 1e-14 (t1 - t0) or the step
/// budget is exhausted.
DenseSolution integrate_dense(const OdeRhs& rhs, std::vector<double> x0, double t0, double t1, double tol,
                              std::size_t max_steps = 10'000'000);

/// Solution of theta' = omega_bar(theta), theta(0) = theta0, as an R^d lift.
struct AveragedTrajectory {
    SlowVec theta0;
    double T = 0.0;
    double tol = 0.0;
    VecField drift;
    DenseSolution sol;
    double lipschitz = 0.0;  // finite-difference estimate of Lip(omega_bar) along the path

    SlowVec at(double t) const;
};

AveragedTrajectory solve_averaged(const VecField& drift, const SlowVec& theta0, double T, double tol = 1e-12);

/// Joint state of the linearized flow at one time.
struct CovarianceState {
    SlowVec theta_bar;
    SlowMat Sigma;  // Lyapunov route
    SlowMat S;      // S' = -S B, the inverse of the forward flow
    SlowMat J;      // int S sigma2 S^T
    SlowMat Phi;    // Phi' = B Phi, forward flow
    double det = 1.0;  // Liouville: det' = -tr(B) det

    SlowMat Sigma_conjugated() const;  // S^{-1} J S^{-T}
};

class CovarianceTrajectory {
  public:
    CovarianceState at(double t) const;
    SlowMat Sigma(double t) const { return at(t).Sigma; }
    /// Forward flow of B from s to t: Phi(t) Phi(s)^{-1}.
    SlowMat flow(double s, double t) const;
    /// Cov(zeta(s), zeta(t)) = Sigma(s) flow(s, t)^T for s <= t.
    SlowMat two_time_covariance(double s, double t) const;

    const AveragedTrajectory& averaged() const { return *avg_; }
    SlowMat B(double t) const;
    SlowMat sigma2_at(double t) const;
    int dim() const { return d_; }
    double T() const { return T_; }

    std::vector<double> times;
    std::vector<CovarianceState> states;
    double max_route_gap = 0.0;
    double max_inverse_gap = 0.0;
    double max_liouville_gap = 0.0;
    double min_eigenvalue = 0.0;

  private:
    friend CovarianceTrajectory covariance_evolve(std::shared_ptr<const AveragedTrajectory>, MatField, MatField,
                                                  double, double, const std::vector<double>&);
    CovarianceState unpack(const std::vector<double>& v) const;
    std::shared_ptr<const AveragedTrajectory> avg_;
    MatField sigma2_, jac_;
    DenseSolution sol_;
    int d_ = 1;
    double T_ = 0.0;
};

/// Lyapunov and S-conjugation routes integrated together; throws RouteDisagreement if
/// they differ by more than 1e-8 (relative to max(1, |Sigma|)) at any output time, or if
/// S Phi = I or the Liouville identity fail at that level.
CovarianceTrajectory covariance_evolve(std::shared_ptr<const AveragedTrajectory> avg, MatField sigma2,
                                       MatField jac, double T, double tol = 1e-12,
                                       const std::vector<double>& out_times = {});

/// log E[exp(i <lam, zeta(t)>) | zeta(s) = zeta_s] = log_magnitude + i phase.
struct CharValue {
    double log_magnitude = 0.0;
    double phase = 0.0;
};
CharValue gaussian_charfn(const CovarianceTrajectory& cov, const SlowVec& lam, double s, double t,
                          const SlowVec& zeta_s);

/// Coefficients B(t_k) and sigma(theta_bar(t_k)) on the Euler-Maruyama grid.
struct SdeGrid {
    double dt = 0.0;
    std::vector<SlowMat> B;
    std::vector<SlowMat> sigma;
};
SdeGrid sde_grid(const CovarianceTrajectory& cov, double dt, double T);

/// Euler-Maruyama path zeta_0 = 0, ..., zeta_n with n = round(T / dt).
std::vector<SlowVec> sde_sample(const SdeGrid& grid, Stream& rng);
std::vector<SlowVec> sde_sample(const CovarianceTrajectory& cov, Stream& rng, double dt, double T);

}  // namespace fastslow
