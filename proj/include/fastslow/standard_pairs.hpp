#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastslow/rng.hpp"
#include "fastslow/system.hpp"

namespace fastslow {

class InvariantViolation : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

/// Intervals per pair grid; nodes = kPairGrid + 1 (even count of intervals for Simpson).
inline constexpr int kPairGrid = 64;

struct PairConstants {
    double delta = 0.1;
    double c1 = 0.0;
    double c2 = 0.0;
    double D = 0.0;
};

/// delta = 0.1, c1 = 4(K+1)/(lambda-2), D = 10 max(1, |f''|, |omega''|),
/// c2 = 40 (1 + D c1 max(1, |f''|) / lambda^2).
PairConstants default_constants(const FastSlowSystem& sys);

/// The three invariance inequalities for given constants; margins are lhs/rhs - 1.
struct ConstantCheck {
    double Lambda = 0.0;  // lambda - eps c1 |d_theta f|
    double margin_c1 = 0.0;
    double margin_D = 0.0;
    double margin_c2 = 0.0;
    bool ok = false;
};
ConstantCheck check_constants(const FastSlowSystem& sys, double eps, const PairConstants& k);

/// Curve x -> (x, G(x)) on [a, b] with density rho, sampled on kPairGrid + 1 uniform nodes.
/// a lies in [0, 1); b = a + length is a lift. G holds lifted slow values.
struct StandardPair {
    double a = 0.0;
    double b = 0.0;
    std::vector<SlowVec> G;
    std::vector<double> rho;
    double eps = 0.0;
    bool constant = false;  // G identical at every node

    double length() const { return b - a; }
    double h() const { return (b - a) / kPairGrid; }
    double node(int i) const { return a + i * h(); }
    int dim() const { return static_cast<int>(G.front().size()); }
};

/// Pair with G sampled from a function and rho normalized by Simpson's rule.
StandardPair make_pair(double a, double b, const std::function<SlowVec(double)>& G,
                       const std::function<double(double)>& rho, double eps);
StandardPair make_constant_pair(double a, double b, const SlowVec& theta0, double eps,
                                const std::function<double(double)>& rho = nullptr);

/// Quintic B-spline interpolation of G and rho on the pair grid.
class PairInterp {
  public:
    explicit PairInterp(const StandardPair& p);
    SlowVec G(double x) const;
    SlowVec dG(double x) const;
    SlowVec d2G(double x) const;
    double rho(double x) const;
    double drho(double x) const;

  private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

struct StandardFamily {
    std::vector<StandardPair> pairs;
    std::vector<double> weights;

    static StandardFamily single(StandardPair p) { return {{std::move(p)}, {1.0}}; }
    double total_weight() const;
};

using TestFunction = std::function<double(double, const SlowVec&)>;

/// Composite Simpson quadrature of g(x, G(x)) rho(x); x is passed reduced to [0, 1).
double integrate(const StandardPair& p, const TestFunction& g);
double integrate(const StandardFamily& fam, const TestFunction& g);

/// Simpson's rule on an odd number of equally spaced values.
double simpson(const std::vector<double>& v, double h);

struct PairValidation {
    double length = 0.0;
    double sup_dG = 0.0;
    double sup_d2G = 0.0;
    double sup_log_drho = 0.0;
    double mass = 0.0;
    bool ok = true;
    std::string failure;
};

/// Checks b - a in [delta/2, delta], |G'| <= eps c1, |G''| <= eps D c1, rho > 0,
/// |rho'/rho| <= c2 and unit mass, with derivatives on a 4x refined grid.
PairValidation validate_pair(const StandardPair& p, const PairConstants& k);

struct DecomposeOptions {
    PairConstants constants;
    double prune = 1e-14;
    unsigned threads = 1;
    bool validate = true;
};

struct DecomposeStats {
    std::size_t pairs_in = 0;
    std::size_t pairs_out = 0;
    std::size_t pruned = 0;
    double pruned_mass = 0.0;
    double min_dfG = 0.0;  // smallest f_G' seen on the refined grids
};

/// Image of the family under F_eps, cut into standard pairs. Output ordering is by
/// (input pair index, branch index). Throws InvariantViolation if an output pair fails
/// validation with the same constants.
StandardFamily pushforward_decompose(const StandardFamily& fam, const FastSlowSystem& sys, double eps,
                                     const DecomposeOptions& opt, DecomposeStats* stats = nullptr);

/// mu_l(g o F_eps) by Simpson on a grid refined `refine` times, using the pair interpolant.
double integrate_pushed(const StandardPair& p, const FastSlowSystem& sys, double eps, const TestFunction& g,
                        int refine = 1);

struct PairPoint {
    double x;
    SlowVec theta;
};

/// Inverse-CDF sampler on the trapezoid CDF of rho with linear interpolation.
class PairSampler {
  public:
    explicit PairSampler(const StandardFamily& fam);
    PairPoint sample(Stream& s) const;

  private:
    struct Entry {
        std::size_t index;
        std::vector<double> cdf;
        std::shared_ptr<PairInterp> interp;
    };
    StandardFamily fam_;
    std::vector<Entry> entries_;
    std::vector<double> cum_weights_;
};

PairPoint sample(const StandardPair& p, Stream& s);

/// psi = alpha_plus * rho_plus - alpha_minus * rho_minus with rho_plus = (psi + m)/Z,
/// rho_minus = (m - psi)/Z' on the pair's curve.
struct SignedSplit {
    StandardPair plus;
    StandardPair minus;
    double alpha_plus = 0.0;
    double alpha_minus = 0.0;
    double shift = 0.0;
};
SignedSplit split_signed(const StandardPair& base, const std::vector<double>& psi, double c2);

nlohmann::json family_to_json(const StandardFamily& fam);
StandardFamily family_from_json(const nlohmann::json& j);

}  // namespace fastslow
