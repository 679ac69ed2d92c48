#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastslow/types.hpp"

namespace fastslow {

enum class Trig { Cos, Sin };

/// One term  c * tx(2 pi kx x) * tth(2 pi <m, theta>).
struct TrigTerm {
    double c = 0.0;
    int kx = 0;
    Trig tx = Trig::Cos;
    std::array<int, kMaxSlowDim> m{};
    Trig tth = Trig::Cos;
};

/// Sup-norm bounds certified from the coefficient sums.
struct SystemBounds {
    double lambda = 0.0;       // inf d_x f
    double sup_dx_f = 0.0;
    double sup_dtheta_f = 0.0;
    double sup_dx_omega = 0.0;
    double sup_dtheta_omega = 0.0;
    double sup_omega = 0.0;
    double sup_f2 = 0.0;       // max over the three second-derivative blocks of f
    double sup_dxx_f = 0.0;
    double sup_dxtheta_f = 0.0;
    double sup_dthth_f = 0.0;
    double sup_omega2 = 0.0;   // same for omega
    double K = 0.0;            // max(sup_dx_omega, sup_dtheta_omega, sup_dtheta_f)
};

/// Value of f and omega at one point, sharing the trig evaluations.
struct MapValue {
    double f_lift;
    SlowVec omega;
};

/// Fast-slow map F(x, theta) = (f(x, theta), theta + eps * omega(x, theta)) on T^1 x T^d.
///
/// f(x, theta) = degree * x + (sum of f terms), taken mod 1; each omega component is a
/// sum of terms. All derivatives are analytic.
class FastSlowSystem {
  public:
    FastSlowSystem(std::string name, int d, int degree, std::vector<TrigTerm> f_terms,
                   std::vector<std::vector<TrigTerm>> omega_terms);

    /// Override the certified lambda and K. The override must be no weaker than the
    /// certificate (lambda <= certified, K >= certified).
    void set_declared_constants(double lambda, double K);

    const std::string& name() const { return name_; }
    int dim() const { return d_; }
    int degree() const { return degree_; }
    double lambda() const { return lambda_; }
    double K() const { return K_; }
    const SystemBounds& bounds() const { return bounds_; }
    const std::vector<TrigTerm>& f_terms() const { return f_terms_; }
    const std::vector<std::vector<TrigTerm>>& omega_terms() const { return omega_terms_; }

    /// Unreduced lift of f(., theta); x -> f_lift(x) has degree `degree()`.
    double f_lift(double x, const SlowVec& theta) const;
    double f(double x, const SlowVec& theta) const { return wrap01(f_lift(x, theta)); }
    double dfdx(double x, const SlowVec& theta) const;
    SlowVec dfdtheta(double x, const SlowVec& theta) const;
    double d2fdx2(double x, const SlowVec& theta) const;
    SlowVec d2fdxdtheta(double x, const SlowVec& theta) const;
    SlowMat d2fdtheta2(double x, const SlowVec& theta) const;

    SlowVec omega(double x, const SlowVec& theta) const;
    SlowVec domega_dx(double x, const SlowVec& theta) const;
    /// (i, j) entry is d omega_i / d theta_j.
    SlowMat domega_dtheta(double x, const SlowVec& theta) const;

    MapValue eval(double x, const SlowVec& theta) const;

    /// True when no term of f or omega depends on theta.
    bool theta_independent_f() const;

    nlohmann::json to_json() const;

  private:
    std::string name_;
    int d_;
    int degree_;
    std::vector<TrigTerm> f_terms_;
    std::vector<std::vector<TrigTerm>> omega_terms_;
    SystemBounds bounds_;
    double lambda_;
    double K_;
};

using SystemPtr = std::shared_ptr<const FastSlowSystem>;

/// Probe-grid report produced by validate_system.
struct ValidationReport {
    double min_dx_f = 0.0;
    double max_fd_rel_error = 0.0;
    double max_sup_norm = 0.0;  // max of the three K-controlled quantities
    std::size_t probes = 0;
};

/// Checks expansion, finite-difference consistency (relative 1e-6) and the K bound on a
/// probe grid. Throws PreconditionError on failure.
ValidationReport validate_system(const FastSlowSystem& sys, int grid_x = 64, int grid_theta = 8);

/// LIN, CBD, CPL, DRIFT.
SystemPtr make_fixture(const std::string& id);
std::vector<std::string> fixture_ids();

/// Inline trigonometric-polynomial spec. Throws ConfigError on schema violations.
SystemPtr system_from_json(const nlohmann::json& spec);

}  // namespace fastslow
