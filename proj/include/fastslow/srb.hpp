#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <vector>

#include <Eigen/Sparse>

#include "fastslow/system.hpp"

namespace fastslow {

class BranchInversionFailure : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class TruncationFailure : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class NegativeDiffusion : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

/// Ulam discretization of the frozen transfer operator on N equal cells.
/// P(i, j) is the fraction of cell j mapped into cell i; columns sum to 1.
struct UlamOperator {
    SlowVec theta;
    int N = 0;
    Eigen::SparseMatrix<double> P;

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return P * v; }
    double max_column_defect() const;
};

UlamOperator ulam_operator(const FastSlowSystem& sys, const SlowVec& theta, int N);

/// Cell densities (mean 1) of the invariant measure.
struct SRBDensity {
    SlowVec theta;
    Eigen::VectorXd rho;
    int iterations = 0;
    double residual = 0.0;  // mean |P rho - rho|
    int N() const { return static_cast<int>(rho.size()); }
};

SRBDensity srb_density(const UlamOperator& op, double tol = 1e-12, int max_iter = 10000);

/// Cell midpoints (i + 1/2)/N.
Eigen::VectorXd cell_midpoints(int N);

/// omega_bar by midpoint quadrature against the cell densities.
SlowVec average_drift(const FastSlowSystem& sys, const SRBDensity& density);

/// omega_bar at theta from a fresh Ulam solve.
SlowVec average_drift_at(const FastSlowSystem& sys, const SlowVec& theta, int N);

/// Central differences of omega_bar over fresh solves at theta +- h e_j; (i, j) = d omega_bar_i / d theta_j.
SlowMat drift_jacobian(const FastSlowSystem& sys, const SlowVec& theta, int N, double h);

/// Gamma_k, k = 0..M, with (a, b) entry  int omega_hat_a(f^k x) omega_hat_b(x) dm.
std::vector<SlowMat> autocovariances(const FastSlowSystem& sys, const UlamOperator& op,
                                     const SRBDensity& density, int M);

struct SrbOptions {
    int N = 4096;
    int M = 0;               // 0 selects ceil(10 log(1/tail_tol) / log lambda)
    double tail_tol = 1e-6;
    double fd_h = 1e-3;
    double coboundary_tol = 1e-3;
    bool jacobian = true;
    double power_tol = 1e-12;
    int power_max_iter = 10000;
};

int default_truncation(const FastSlowSystem& sys, double tail_tol);

struct DiffusionContext {
    SlowVec theta;
    int N = 0;
    int M = 0;
    SlowVec omega_bar;
    SlowMat D_omega_bar;  // empty when not requested
    std::vector<SlowMat> Gamma;
    SlowMat sigma2;
    SlowMat sigma;
    double tail_estimate = 0.0;
    double min_eigenvalue_raw = 0.0;  // before clamping
    std::optional<double> decay_rate;  // fitted from |Gamma_k|; none if too few resolvable terms
    bool coboundary = false;
    int power_iterations = 0;
    double fixed_point_residual = 0.0;
};

/// Green-Kubo assembly with truncation check, clamp and symmetric root.
DiffusionContext diffusion_matrix(const FastSlowSystem& sys, const SlowVec& theta, const SrbOptions& opt = {});

/// Symmetric PSD square root after clamping eigenvalues in [-clamp, 0] to zero.
/// Throws NegativeDiffusion below -clamp. Writes the smallest raw eigenvalue.
SlowMat psd_sqrt(const SlowMat& A, double clamp = 1e-9, double* min_eig = nullptr);

// ---------------------------------------------------------------------------

/// Thread-safe cache of per-node solves, keyed by (quantized theta, N, M).
class SrbCache {
  public:
    SrbCache(SystemPtr sys, SrbOptions opt, double quantum = 1e-3);

    const FastSlowSystem& system() const { return *sys_; }
    const SrbOptions& options() const { return opt_; }
    double quantum() const { return quantum_; }
    /// Number of grid nodes per unit along each axis.
    long nodes_per_unit() const { return per_unit_; }

    /// Node solve (omega_bar, Gamma, sigma2; no Jacobian). Computed outside the lock.
    std::shared_ptr<const DiffusionContext> node(const std::vector<long>& index);

    /// Precomputes all nodes along each axis-aligned box [lo, hi] in node units.
    void prefetch(const std::vector<std::vector<long>>& indices, unsigned threads);

    std::size_t size() const;

  private:
    using Key = std::vector<long>;
    SystemPtr sys_;
    SrbOptions opt_;
    double quantum_;
    long per_unit_;
    mutable std::shared_mutex mu_;
    std::map<Key, std::shared_ptr<const DiffusionContext>> map_;
};

/// Multilinear interpolation of omega_bar, D omega_bar and sigma2 on the cache grid.
/// D omega_bar at a node is the central difference of neighbouring node values
/// (step = fd_h rounded to whole nodes).
class DriftField {
  public:
    explicit DriftField(std::shared_ptr<SrbCache> cache);

    SlowVec omega_bar(const SlowVec& theta) const;
    SlowMat jacobian(const SlowVec& theta) const;
    SlowMat sigma2(const SlowVec& theta) const;
    int dim() const { return d_; }
    SrbCache& cache() const { return *cache_; }

    /// Nodes needed to evaluate everything at the given points.
    std::vector<std::vector<long>> stencil(const std::vector<SlowVec>& thetas) const;

  private:
    template <class F>
    SlowMat interpolate(const SlowVec& theta, F&& node_value, int rows, int cols) const;
    SlowMat node_jacobian(const std::vector<long>& idx) const;

    std::shared_ptr<SrbCache> cache_;
    int d_;
    long fd_nodes_;
};

}  // namespace fastslow
