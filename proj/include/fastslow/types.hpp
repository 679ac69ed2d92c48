#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fastslow {

/// The slow torus is T^d with d small; storage is inline (no heap) up to this bound.
inline constexpr int kMaxSlowDim = 4;

using SlowVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxSlowDim, 1>;
using SlowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                              kMaxSlowDim, kMaxSlowDim>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// ---------------------------------------------------------------------------
// Torus arithmetic. Points are stored in [0,1); lifts are plain reals.

inline double wrap01(double y) {
    const double r = y - std::floor(y);
    return r >= 1.0 ? 0.0 : r;
}

/// Representative of y mod 1 in [-1/2, 1/2).
inline double wrap_signed(double y) { return y - std::floor(y + 0.5); }

inline double torus_distance(double a, double b) { return std::abs(wrap_signed(a - b)); }

inline SlowVec wrap01(const SlowVec& v) {
    SlowVec r(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) r[i] = wrap01(v[i]);
    return r;
}

inline double torus_distance(const SlowVec& a, const SlowVec& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double t = wrap_signed(a[i] - b[i]);
        s += t * t;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Errors. Config/precondition problems and numerical failures are kept apart
// because the CLI maps them to different exit codes.

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or schema violation.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// An operation was called outside its documented domain.
class PreconditionError : public Error {
  public:
    using Error::Error;
};

/// A numerical procedure failed (non-convergence, invariant violation, ...).
class NumericalError : public Error {
  public:
    using Error::Error;
};

class ConeViolation : public NumericalError {
  public:
    ConeViolation(long step, const std::string& what)
        : NumericalError(what), step_(step) {}
    long step() const noexcept { return step_; }

  private:
    long step_;
};

class ConvergenceFailure : public NumericalError {
  public:
    ConvergenceFailure(const std::string& what, double contraction_estimate)
        : NumericalError(what), contraction_(contraction_estimate) {}
    /// Ratio of successive residuals at exit; estimates |second eigenvalue|.
    double contraction_estimate() const noexcept { return contraction_; }

  private:
    double contraction_;
};

}  // namespace fastslow
