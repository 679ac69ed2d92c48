#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fastslow/dynamics.hpp"
#include "fastslow/limits.hpp"
#include "fastslow/parallel.hpp"
#include "fastslow/srb.hpp"
#include "fastslow/standard_pairs.hpp"

namespace fastslow {

/// Equally spaced times 0, T/(n-1), ..., T.
std::vector<double> uniform_times(double T, int n);

/// Interval [0.2, 0.3] with uniform density and G = theta0 (0.25 in every coordinate by default).
StandardPair default_pair(int d, double eps, const SlowVec* theta0 = nullptr);

// ---------------------------------------------------------------------------
// Limit objects shared by the statistical checks.

struct LimitOptions {
    SrbOptions srb;
    double quantum = 1e-3;
    double tol = 1e-12;
};

struct LimitModel {
    SystemPtr sys;
    std::shared_ptr<SrbCache> cache;
    std::shared_ptr<DriftField> field;
    std::shared_ptr<const AveragedTrajectory> avg;
    std::shared_ptr<const CovarianceTrajectory> cov;
};

/// Averaged trajectory and covariance from theta0 on [0, T], with omega_bar, D omega_bar and
/// sigma2 read from a shared cached grid.
LimitModel build_limit(SystemPtr sys, const SlowVec& theta0, double T, const LimitOptions& opt = {},
                       const std::vector<double>& out_times = {});

// ---------------------------------------------------------------------------
// Ensembles.

struct EnsembleOptions {
    double eps = 1e-3;
    std::size_t N = 1000;
    std::vector<double> out_times;  // sorted, within [0, T]; last entry is T
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::int64_t max_steps = 10'000'000;
};

/// Theta lifts and zeta values of N trajectories at the output times, row-major in
/// (trajectory, time, coordinate).
struct Ensemble {
    SystemPtr sys;
    double eps = 0.0;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    int d = 1;
    std::vector<double> times;
    SlowVec theta_bar0;
    std::vector<SlowVec> theta_bar;  // at the output times
    std::vector<double> theta;
    std::vector<double> zeta;

    std::size_t nt() const { return times.size(); }
    SlowVec theta_at(std::size_t k, std::size_t i) const;
    SlowVec zeta_at(std::size_t k, std::size_t i) const;
};

/// Stream k draws the initial point of trajectory k. Throws PreconditionError when
/// T / eps exceeds max_steps.
Ensemble run_ensemble(SystemPtr sys, const StandardFamily& init, const AveragedTrajectory& avg,
                      const EnsembleOptions& opt);

// ---------------------------------------------------------------------------
// Test functions on R^d and conditioning weights.

struct TestFn {
    std::string name;
    std::function<double(const SlowVec&)> value;
    std::function<SlowVec(const SlowVec&)> grad;
    std::function<SlowMat(const SlowVec&)> hess;
};

TestFn coordinate_fn(int d, int j);
TestFn product_fn(int d, int i, int j);
TestFn square_norm_fn(int d);
/// exp(1 - 1/(1 - r^2)) for r = |z - c| / w < 1, zero outside.
TestFn bump_fn(const SlowVec& center, double width);
TestFn cos_fn(const SlowVec& lam);
TestFn sin_fn(const SlowVec& lam);
TestFn constant_fn(int d, double c);
std::vector<TestFn> builtin_test_functions(int d);

struct Weight {
    std::string name;
    std::function<double(const SlowVec&)> value;
};
Weight constant_weight();
/// prod_j exp(kappa (cos 2 pi (theta_j - c_j) - 1)).
Weight periodic_bump(const SlowVec& center, double kappa);
/// prod_j (1 + amp cos 2 pi (theta_j - c_j)).
Weight cosine_weight(const SlowVec& center, double amp);

/// Weight factors B_i evaluated at Theta(t_i), with t_i given as output-time indices.
struct Conditioning {
    std::string name;
    std::vector<std::pair<std::size_t, Weight>> factors;
};

// ---------------------------------------------------------------------------
// Reports.

struct AveragingRow {
    double eps = 0.0;
    std::size_t N = 0;
    Estimate sup_error;
};

struct AveragingReport {
    std::vector<AveragingRow> rows;
    LineFit fit;  // log error against log eps
    bool monotone = false;
    double slope_lo = 0.35;
    double slope_hi = 0.65;
    bool slope_ok = false;
    bool pass = false;
};

/// E sup_i |Theta(t_i) - Theta_bar(t_i)| over the trajectories of one ensemble.
Estimate sup_error(const Ensemble& e);

/// sup_error per ensemble; ensembles sorted by decreasing eps.
AveragingReport averaging_error(const std::vector<const Ensemble*>& ensembles, double slope_lo = 0.35,
                                double slope_hi = 0.65);

struct MomentRow {
    double gap = 0.0;
    std::size_t windows = 0;
    Estimate m2;
    Estimate m4;
    double ratio2 = 0.0;  // m2 / gap
    double ratio4 = 0.0;  // m4 / gap^2
};

struct MomentReport {
    double eps = 0.0;
    double min_gap = 0.0;  // gaps below are excluded from the bands and fits
    std::vector<MomentRow> rows;
    double max_ratio2 = 0.0;  // over all gaps
    double max_ratio4 = 0.0;
    double ratio2_lo = 0.0;   // over gaps >= min_gap
    double ratio2_hi = 0.0;
    LineFit fit2;
    LineFit fit4;
    double band_lo = 0.4;
    double band_hi = 0.6;
    double exponent4_min = 1.8;
    bool ratio_ok = false;
    bool exponent_ok = false;
    bool pass = false;
};

/// Increments over dyadic gaps T 2^-j that are whole multiples of the output spacing,
/// averaged over all overlapping windows within each trajectory.
MomentReport moment_scaling(const Ensemble& ens, double min_gap_in_eps = 16.0, double band_lo = 0.4,
                            double band_hi = 0.6, double exponent4_min = 1.8);

enum class Variant { Averaged, Fluctuation };

struct ResidualReport {
    std::string test_fn;
    std::string variant;
    std::string conditioning;
    double s = 0.0;
    double t = 0.0;
    double eps = 0.0;
    Estimate residual;
    double slack = 0.0;
    bool pass = false;
};

/// Mean over trajectories of A(X(t)) - A(X(0)) - int_0^t (generator A)(X) d tau with the
/// trapezoid rule on the output times up to index t_index (default: last). X is Theta for
/// the averaged variant and zeta for the fluctuation variant.
ResidualReport generator_residual(const Ensemble& ens, const TestFn& A, Variant variant, const LimitModel& lim,
                                  double slack_c, unsigned threads = 1, std::size_t t_index = SIZE_MAX);

/// Conditioned increment over [t_s, t_t] for the fluctuation generator; passes when
/// |mean| <= 3 se + slack_c sqrt(eps).
ResidualReport martingale_residual(const Ensemble& ens, const TestFn& A, const Conditioning& cond,
                                   std::size_t s_index, std::size_t t_index, const LimitModel& lim, double slack_c);

struct CltRow {
    double t = 0.0;
    std::vector<Estimate> mean;
    SlowMat cov;
    SlowMat cov_se;
    SlowMat Sigma;
    double abs_error = 0.0;  // |cov - Sigma|_F
    double rel_error = 0.0;  // abs_error / |Sigma|_F, 0 when Sigma = 0
    double rel_error_se = 0.0;
    std::vector<double> skewness;
    std::vector<double> excess_kurtosis;
};

struct CharFnRow {
    double t = 0.0;
    SlowVec lambda;
    Estimate emp_re;
    Estimate emp_im;
    double re = 0.0;
    double im = 0.0;
    bool within = false;  // both parts within 3 se + slack
};

struct TwoTimeRow {
    double s = 0.0;
    double t = 0.0;
    SlowMat empirical;
    SlowMat empirical_se;
    SlowMat predicted;
    bool within = false;  // every entry within 3 se + slack
};

struct CltTolerances {
    double rel_cov = 0.05;
    double skew = 0.08;
    double kurt = 0.15;
    double abs_var = -1.0;  // if >= 0, checks trace of the final covariance instead of rel_cov
    double slack_c = 1.0;
};

struct CltReport {
    double eps = 0.0;
    std::size_t N = 0;
    CltTolerances tol;
    std::vector<CltRow> rows;
    std::vector<CharFnRow> charfn;
    std::vector<TwoTimeRow> two_time;
    bool cov_ok = false;
    bool skew_ok = false;
    bool kurt_ok = false;
    bool charfn_ok = false;
    bool two_time_ok = false;
    bool pass = false;
};

/// Throws PreconditionError if the ensemble and covariance start from different theta0 or
/// the ensemble horizon exceeds the covariance horizon.
CltReport clt_test(const Ensemble& ens, const CovarianceTrajectory& cov, const CltTolerances& tol = {});

/// Variance of n^{-1/2} sum_{k<n} (omega(x_k, theta0) - omega_bar) for the frozen map with
/// x_0 uniform, one stream per sample. Returns the first coordinate's estimate.
Estimate frozen_birkhoff_variance(const FastSlowSystem& sys, const SlowVec& theta0, double omega_bar,
                                  std::int64_t n, std::size_t samples, std::uint64_t seed, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Shadowing and pushforward studies.

struct ShadowStudy {
    double eps = 0.0;
    std::int64_t n = 0;
    std::size_t points = 0;
    double max_residual = 0.0;
    double max_terminal_gap = 0.0;
    double max_shadow_constant = 0.0;
    double max_derivative_exponent = 0.0;
    bool derivative_ok = true;
    std::size_t failures = 0;
    std::string first_failure;
};

/// Shadows `points` random true orbits of length floor(eps^{-1/2}) with theta_star drawn
/// within eps of theta0.
ShadowStudy shadow_study(const FastSlowSystem& sys, double eps, std::size_t points, std::uint64_t seed,
                         const ShadowOptions& opt = {}, unsigned threads = 1);

/// Random standard pair with |G'| <= eps c1 / 2, |G''| <= eps D c1 / 2 and log-density slope
/// at most min(5, c2 / 2).
StandardPair random_pair(int d, double eps, const PairConstants& k, Stream& s);

/// Five smooth test functions on T x R^d used for the pushforward identity.
std::vector<std::pair<std::string, TestFunction>> pushforward_test_functions(int d);

struct PushforwardStudy {
    double eps = 0.0;
    std::size_t pairs = 0;
    std::size_t functions = 0;
    std::size_t output_pairs = 0;
    double max_error = 0.0;
    bool revalidated = true;
    std::string failure;
    int refine = 8;
};

PushforwardStudy pushforward_study(const FastSlowSystem& sys, double eps, std::size_t pairs, std::uint64_t seed,
                                   const PairConstants& k, unsigned threads = 1, int refine = 8);

}  // namespace fastslow
