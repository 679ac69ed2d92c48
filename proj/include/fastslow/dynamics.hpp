#pragma once

#include <cstdint>
#include <vector>

#include "fastslow/system.hpp"

namespace fastslow {

/// Error subclasses specific to the shadowing solver.
class ShadowingFailure : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

struct StepResult {
    double x;
    SlowVec theta;      // reduced to [0,1)^d
    SlowVec increment;  // eps * omega, unreduced
};

StepResult step(const FastSlowSystem& sys, double eps, double x, const SlowVec& theta);

struct OrbitPoint {
    double x;
    SlowVec theta;
    SlowVec lift;
};

inline constexpr std::int64_t kDefaultMaxOrbit = 200'000'000;

/// n+1 points; lift accumulates the unreduced increments starting from theta0.
std::vector<OrbitPoint> orbit(const FastSlowSystem& sys, double eps, double x0, const SlowVec& theta0,
                              std::int64_t n, std::int64_t max_length = kDefaultMaxOrbit);

/// Position of time t on the eps-grid: t / eps = k + frac with frac in [0,1).
/// Times within rounding of a node snap to it so that t = eps*k yields frac = 0.
struct PathNode {
    std::int64_t k;
    double frac;
};
PathNode path_node(double t, double eps);

/// Interpolated path value from the lifts at nodes k and k+1.
inline SlowVec path_value(const SlowVec& lift_k, const SlowVec& lift_k1, double frac) {
    if (frac == 0.0) return lift_k;
    return lift_k + frac * (lift_k1 - lift_k);
}

struct PathSample {
    std::vector<double> times;
    std::vector<SlowVec> values;  // reduced to the torus
    std::vector<SlowVec> lifts;
    std::vector<double> fast_values;  // x at the node floor(t/eps); empty if not requested

    /// Largest ratio |lift(t_i+1) - lift(t_i)| / (t_i+1 - t_i) over consecutive samples.
    double lipschitz() const;
};

/// Piecewise-linear path through (eps k, theta_k). `times` must be sorted in [0, T].
PathSample polygonalize(const std::vector<OrbitPoint>& orb, double eps, double T,
                        const std::vector<double>& times, bool with_fast = false);

// ---------------------------------------------------------------------------
// Tangent cones.

struct ConeFrame {
    std::int64_t n = 0;
    double log_v = 0.0;      // log of the expansion factor v_n
    double u = 0.0;          // unstable slope (first component for d > 1)
    SlowVec u_vec;
    SlowVec s;               // central slope at p0 for horizon n
    double log_r = 0.0;
    double log_Gamma = 0.0;  // sum of log d_x f along the orbit
    double c = 0.0;
    double a = 0.0;
    double b = 0.0;          // measured rate, common to all frames of a run

    double v() const { return std::exp(log_v); }
    double r() const { return std::exp(log_r); }
    double Gamma() const { return std::exp(log_Gamma); }
};

/// Cone constant (K+1)/(lambda-2).
double cone_constant(const FastSlowSystem& sys);

/// Frames 0..n along the orbit of p0. Requires eps*K*c <= 1. Throws ConeViolation when
/// |u_k| > c or |s_k| > K. Costs O(n^2) for the central slopes.
std::vector<ConeFrame> cone_frames(const FastSlowSystem& sys, double eps, double x0,
                                   const SlowVec& theta0, std::int64_t n);

// ---------------------------------------------------------------------------
// Shadowing.

struct ShadowOptions {
    double C = 1.0;         // n <= C eps^{-1/2}
    double c_sharp = 10.0;  // |log Y'| <= c_sharp eps n^2
    double tol = 1e-12;
};

struct ShadowSolution {
    std::int64_t n = 0;
    SlowVec theta_star;
    double Y = 0.0;
    std::vector<double> shadow_orbit;  // x*_k, k = 0..n
    std::vector<double> true_orbit;    // x_k
    double log_abs_Y_prime = 0.0;
    double Y_prime = 0.0;
    double residual = 0.0;      // max_k |f_*(x*_k) - x*_{k+1}|
    double terminal_gap = 0.0;  // |x*_n - x_n|
    double shadow_constant = 0.0;  // max_k |x_k - x*_k| / (eps k)
    double derivative_exponent = 0.0;  // |log Y'| / (eps n^2)
    bool derivative_bound_ok = true;
};

/// Frozen map f_* = f(., theta_star) pulled back along the true orbit of (x0, theta0).
/// g_prime is the curve slope G' at x0 (0 for a point or constant curve).
ShadowSolution shadow_solve(const FastSlowSystem& sys, double eps, double x0, const SlowVec& theta0,
                            const SlowVec& theta_star, std::int64_t n, const ShadowOptions& opt = {},
                            const SlowVec* g_prime = nullptr);

}  // namespace fastslow
