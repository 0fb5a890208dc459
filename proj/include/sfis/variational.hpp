#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sfis/model.hpp"
#include "sfis/torus_solver.hpp"

namespace sfis {

/// Piecewise-linear path: strictly increasing times, one slow-state node each.
struct DiscretePath {
    Eigen::VectorXd times;
    std::vector<Eigen::VectorXd> nodes;
    void check() const; // throws Error::Domain on malformed data
};

/// Candidate subsolution Ubar(t,x) with its derivatives and the terminal cost
/// it is matched against. Verify with verify_subsolution before sampling.
struct Subsolution {
    std::function<double(double, const Eigen::VectorXd&)> u;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> grad_x;
    std::function<double(double, const Eigen::VectorXd&)> dt;
    std::function<double(const Eigen::VectorXd&)> terminal_cost;
    std::string label;
};

/// Effective Hamiltonian evaluator (x,p) -> Hbar(x,p).
/// R1 wraps <r(x),p> - (1/2)<p, q(x) p>; R2/R3 are backed by the cell solvers.
struct HamiltonianHandle {
    RegimeTag tag = RegimeTag::R1;
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> value;
};

HamiltonianHandle hamiltonian_r1(const EffectiveDynamics& eff);
HamiltonianHandle hamiltonian_r2(std::shared_ptr<const CellProviderR2> provider);
HamiltonianHandle hamiltonian_r3(std::shared_ptr<const CellProviderR3> provider);

/// Midpoint-rule action of the piecewise-linear interpolant:
///   (1/2) int (phidot - r)^T q^{-1} (phidot - r) ds.
double action_r1(const DiscretePath& path, const EffectiveDynamics& eff);

/// Explicit Regime-1 local rate (1/2)(beta - r)^T q^{-1} (beta - r).
double local_rate_r1(const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                     const EffectiveDynamics& eff);

/// Brute-force local rate: equality-constrained quadratic program over
/// grid-discretized feedback controls, assembled and solved as a full KKT
/// system (no analytic reduction). Serves as the independent oracle for
/// local_rate_r1.
double local_rate_bruteforce_r1(const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                const CoefficientSet& model, const TorusGrid& grid);

/// Control attaining the Regime-1 local-rate infimum, evaluated on the fast
/// grid: u1 = (sigma + chi_y tau1)^T q^{-1}(beta - r),
///       u2 = (chi_y tau2)^T q^{-1}(beta - r). Each row is one grid node.
struct GridControl {
    Eigen::MatrixXd v1, v2; // n x kappa
};
GridControl optimal_control_r1_ldp(const Eigen::VectorXd& x, const Eigen::VectorXd& beta,
                                   const CellSolutionR1& cell, const CoefficientSet& model,
                                   const EffectiveDynamics& eff);

// ---------------------------------------------------------------------------
// Quasipotential

enum class QuasipotentialMethod { HopfLax, PathOpt };

struct QuasipotentialOptions {
    Eigen::VectorXd box_lo, box_hi; // minimization box for z (HopfLax) / nodes (PathOpt)
    int interior_nodes = 16;        // PathOpt
    int multistarts = 8;            // PathOpt
    double tol = 1e-10;
    int max_widenings = 3;          // HopfLax box widening before error
};

/// G(t,x) = inf over paths of [action + h(phi_T)].
/// HopfLax requires constant r, q (checked by sampling) and minimizes
///   (z - x - r (T-t))^T q^{-1} (z - x - r (T-t)) / (2 (T-t)) + h(z)
/// by derivative-free coordinate search over the box. PathOpt minimizes
/// action_r1 + h over piecewise-linear paths by coordinate descent with
/// deterministic multistart (best value, ties to lowest start index).
double quasipotential_G(double t, const Eigen::VectorXd& x,
                        const std::function<double(const Eigen::VectorXd&)>& h, double T,
                        const EffectiveDynamics& eff, QuasipotentialMethod method,
                        const QuasipotentialOptions& opts);

// ---------------------------------------------------------------------------
// Subsolution constructors and verification

/// Ubar == 0: the standard-Monte-Carlo subsolution. Valid whenever h >= 0 and
/// Hbar(x, 0) >= 0.
Subsolution zero_subsolution(std::function<double(const Eigen::VectorXd&)> h);

/// Affine family Ubar(t,x) = <a,x> + b(t) with bdot = -inf_box Hbar(x,a), so
/// the HJB residual is >= 0 on the box by construction. b(T) defaults to
/// inf_box (h(x) - <a,x>) so the terminal condition holds on the box.
Subsolution affine_subsolution(const Eigen::VectorXd& a,
                               std::function<double(const Eigen::VectorXd&)> h, double T,
                               const HamiltonianHandle& ham, const Eigen::VectorXd& box_lo,
                               const Eigen::VectorXd& box_hi, int box_samples = 64,
                               double b_T = std::numeric_limits<double>::quiet_NaN());

/// Hopf-Lax value function for constant-coefficient effective dynamics, with
/// envelope-theorem derivatives at the minimizer.
Subsolution hopf_lax_subsolution(const EffectiveDynamics& eff,
                                 std::function<double(const Eigen::VectorXd&)> h, double T,
                                 const QuasipotentialOptions& opts);

/// Subsolution from a CSV table (t, x, u) on a regular lattice; m = 1 only.
/// Bilinear interpolation; derivatives by central differences on the lattice.
Subsolution table_subsolution(const std::string& csv_path,
                              std::function<double(const Eigen::VectorXd&)> h);

struct VerificationRow {
    double t;
    Eigen::VectorXd x;
    double hjb_residual;
    double terminal_slack; // NaN except at t = T
};

struct VerificationReport {
    bool pass = false;
    double worst_hjb = 0.0;          // min over grid of dtU + Hbar(x, gradU)
    double t_worst = 0.0;
    Eigen::VectorXd x_worst;
    double worst_terminal_slack = 0.0; // min over grid of h(x) - U(T,x)
    Eigen::VectorXd x_worst_terminal;
    double tol = 1e-8;
    std::vector<VerificationRow> rows;
};

/// Checks dtU + Hbar(x, gradU) >= -tol on the space-time grid and
/// U(T,x) <= h(x) + tol. Failures are reported, never thrown.
VerificationReport verify_subsolution(const Subsolution& sub, const HamiltonianHandle& ham,
                                      const Eigen::VectorXd& box_lo, const Eigen::VectorXd& box_hi,
                                      double t0, double T, int nt, int nx, double tol = 1e-8);

} // namespace sfis
