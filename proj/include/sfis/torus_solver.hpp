#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "sfis/model.hpp"
#include "sfis/torus_grid.hpp"

namespace sfis {

// Default tolerances for the cell solvers. The stationarity residual of the
// SVD null vector grows like n^2 with the grid, hence the scaling.
inline double stationarity_tol(int n) {
    double s = double(n) / 512.0;
    return 1e-8 * std::max(1.0, s * s);
}
constexpr double kCellResidualTol = 1e-6;  // R1 linear cell problem
constexpr double kCellR2ResidualTol = 1e-8; // refined nonlinear cell problem
constexpr double kCenteringTol = 1e-8;

/// Stationary density of the frozen-x fast generator on the grid nodes.
struct InvariantMeasure {
    Eigen::VectorXd density; // >= 0, h * sum = 1
    Eigen::VectorXd x_anchor;
    double stationarity_residual = 0.0;
};

struct CellSolutionR1 {
    Eigen::MatrixXd chi;     // n x m
    Eigen::MatrixXd dchi_dy; // n x m, 4th-order differences of chi
    Eigen::VectorXd x_anchor;
    double residual = 0.0;       // max_l ||L chi_l + b_l||_inf on the grid
    double centering_norm = 0.0; // max_l |sum chi_l mu h|
};

/// Averaged drift r(x) and diffusion q(x) of the homogenized slow motion.
struct EffectiveDynamics {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> r;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> q; // symmetric positive definite
};

struct CellSolutionR2 {
    Eigen::VectorXd xi;      // normalized xi(node 0) = 0
    Eigen::VectorXd dxi_dy;
    double h_bar = 0.0;      // refined effective Hamiltonian value
    double h_bar_raw = 0.0;  // Cole-Hopf principal eigenvalue before refinement
    Eigen::VectorXd x_anchor, p_anchor;
    double gamma = 0.0;
    double residual = 0.0;   // max pointwise residual of the cell equation
};

struct CellSolutionR3 {
    Eigen::VectorXd xi0;
    Eigen::VectorXd dxi0_dy;
    double h_bar0 = 0.0;
    Eigen::VectorXd x_anchor, p_anchor;
    int branch = +1; // root branch used for xi0'
    double residual = 0.0;
};

/// Discretizes the fast generator f d_y + (1/2)(tau1 tau1^T + tau2 tau2^T) d_yy
/// with second-order central differences and periodic wrap, and returns the
/// normalized null vector of the adjoint. Throws DegenerateGenerator if the
/// numerical null space is not one-dimensional.
InvariantMeasure solve_invariant_measure(const CoefficientSet& model, const Eigen::VectorXd& x,
                                         const TorusGrid& grid);

/// Solves L chi_l = -b_l on the grid with the centering constraint
/// sum(chi_l mu h) = 0. Refuses (Centering error) if |sum b_l mu h| exceeds
/// tolerance: the singular system is then inconsistent.
CellSolutionR1 solve_cell_r1(const CoefficientSet& model, const Eigen::VectorXd& x,
                             const TorusGrid& grid,
                             const InvariantMeasure* measure = nullptr,
                             double centering_tol = kCenteringTol);

/// Grid-quadrature effective coefficients
///   r(x) = int (c + chi_y g) dmu
///   q(x) = int [(sigma + chi_y tau1)(.)^T + (chi_y tau2)(.)^T] dmu,
/// q symmetrized and checked SPD.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> effective_coefficients(const CoefficientSet& model,
                                                                   const Eigen::VectorXd& x,
                                                                   const TorusGrid& grid);

/// Ergodic cell problem for Regime 2 via Cole-Hopf: w = exp(-xi/gamma) turns
/// the quadratic cell equation into a linear principal-eigenvalue problem,
/// solved by dense eigendecomposition; the eigenpair with positive
/// eigenfunction is taken. The recovered (xi, h_bar) is then refined by Newton
/// iteration on the discretized nonlinear cell equation until the pointwise
/// residual meets tolerance (with gamma-continuation as fallback when the
/// eigenfunction is too stiff to seed directly). h_bar_raw keeps the
/// unrefined eigenvalue so the bookkeeping stays auditable.
CellSolutionR2 solve_cell_r2(const CoefficientSet& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p, double gamma, const TorusGrid& grid);

/// First-order (gamma = 0) cell problem: pointwise quadratic in xi', solved on
/// the consistent root branch; h_bar0 found by root-finding on the periodicity
/// constraint int xi' dy = 0.
CellSolutionR3 solve_cell_r3(const CoefficientSet& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p, const TorusGrid& grid);

// Pointwise residual of the Regime-2 cell equation for a candidate (xi, h_bar);
// also the binding check for solve_cell_r2 and the hook for independent oracles.
Eigen::VectorXd cell_r2_residual(const CoefficientSet& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& p, double gamma, const TorusGrid& grid,
                                 const Eigen::VectorXd& xi, double h_bar);

// ---------------------------------------------------------------------------
// Memoized providers. Anchors are quantized to 1e-12 before lookup; caches are
// safe under concurrent read with exclusive insert.

class MeasureProvider {
public:
    MeasureProvider(const CoefficientSet& model, TorusGrid grid)
        : model_(&model), grid_(grid) {}
    std::shared_ptr<const InvariantMeasure> at(const Eigen::VectorXd& x) const;

private:
    const CoefficientSet* model_;
    TorusGrid grid_;
    mutable std::shared_mutex mu_;
    mutable std::map<std::vector<long long>, std::shared_ptr<const InvariantMeasure>> cache_;
};

class CellProviderR1 {
public:
    CellProviderR1(const CoefficientSet& model, TorusGrid grid)
        : model_(&model), grid_(grid) {}
    std::shared_ptr<const CellSolutionR1> at(const Eigen::VectorXd& x) const;

private:
    const CoefficientSet* model_;
    TorusGrid grid_;
    mutable std::shared_mutex mu_;
    mutable std::map<std::vector<long long>, std::shared_ptr<const CellSolutionR1>> cache_;
};

class CellProviderR2 {
public:
    CellProviderR2(const CoefficientSet& model, double gamma, TorusGrid grid)
        : model_(&model), gamma_(gamma), grid_(grid) {}
    std::shared_ptr<const CellSolutionR2> at(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& p) const;
    double gamma() const { return gamma_; }

private:
    const CoefficientSet* model_;
    double gamma_;
    TorusGrid grid_;
    mutable std::shared_mutex mu_;
    mutable std::map<std::vector<long long>, std::shared_ptr<const CellSolutionR2>> cache_;
    mutable std::shared_ptr<const CellSolutionR2> last_; // warm start for Newton
};

class CellProviderR3 {
public:
    CellProviderR3(const CoefficientSet& model, TorusGrid grid)
        : model_(&model), grid_(grid) {}
    std::shared_ptr<const CellSolutionR3> at(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& p) const;

private:
    const CoefficientSet* model_;
    TorusGrid grid_;
    mutable std::shared_mutex mu_;
    mutable std::map<std::vector<long long>, std::shared_ptr<const CellSolutionR3>> cache_;
};

/// EffectiveDynamics backed by the grid solvers, memoized on quantized x.
EffectiveDynamics make_effective_dynamics(std::shared_ptr<const CoefficientSet> model,
                                          TorusGrid grid);

/// EffectiveDynamics from constant r and q (no solver behind it).
EffectiveDynamics constant_effective_dynamics(const Eigen::VectorXd& r, const Eigen::MatrixXd& q);

std::vector<long long> quantize_anchor(const Eigen::VectorXd& x);

} // namespace sfis
