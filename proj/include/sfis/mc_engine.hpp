#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfis/model.hpp"
#include "sfis/torus_solver.hpp"
#include "sfis/variational.hpp"

namespace sfis {

// ---------------------------------------------------------------------------
// Counter-based RNG: every normal draw is a pure function of
// (seed, path, step, draw index), so results do not depend on worker count or
// execution order.

uint64_t splitmix64(uint64_t x);

struct CounterRng {
    uint64_t key;
    explicit CounterRng(uint64_t seed, uint64_t path)
        : key(splitmix64(splitmix64(seed) ^ (path * 0x9E3779B97F4A7C15ULL))) {}

    // k-th standard normal of the given step (Box-Muller on hashed uniforms).
    double normal(uint64_t step, uint64_t k) const;
};

// ---------------------------------------------------------------------------

struct SimConfig {
    double epsilon = 0.25;
    double delta = 0.125;
    double t0 = 0.0, T = 1.0;
    double dt = 1e-3;
    long n_paths = 10000;
    uint64_t seed = 0;
    Eigen::VectorXd x0;
    double y0 = 0.0;
    double c_fast = 0.1;

    // Derives delta from the regime and picks dt = (T-t0)/n_steps with
    // n_steps = ceil((T-t0)/(c_fast delta^2/eps)), so dt divides the horizon
    // and resolves the fast scale.
    static SimConfig make(const ScaleRegime& regime, double eps, double t0, double T,
                          long n_paths, uint64_t seed, const Eigen::VectorXd& x0, double y0,
                          double c_fast = 0.1, double dt_cap = 0.0);
    void validate() const;
    long n_steps() const { return std::lround((T - t0) / dt); }
};

/// Feedback control (s,x,y) -> (u1, u2) driving the sampling measure.
struct ControlPolicy {
    RegimeTag tag = RegimeTag::R1;
    std::function<void(double, const Eigen::VectorXd&, double, Eigen::VectorXd&, Eigen::VectorXd&)>
        eval; // writes u1, u2 (each kappa)
    std::string provenance;
    bool is_zero = false;
};

ControlPolicy zero_control(int kappa);

/// Regime-1 control u = (-(sigma + chi_y tau1)^T gradU, -(chi_y tau2)^T gradU)
/// with chi_y interpolated on the fast grid (periodic cubic).
ControlPolicy make_control_r1(const Subsolution& sub, std::shared_ptr<const CellProviderR1> cells,
                              std::shared_ptr<const CoefficientSet> model);

/// Bounds of the (x,p) lattice used for Regime-2/3 controls.
struct ControlLatticeSpec {
    Eigen::VectorXd x_lo, x_hi; // m = 1 for lattice controls
    double p_lo = -1.0, p_hi = 1.0;
    int nx = 9, np = 17;
};

/// Derives lattice p-bounds from the subsolution gradient over the box.
ControlLatticeSpec lattice_from_subsolution(const Subsolution& sub, const Eigen::VectorXd& x_lo,
                                            const Eigen::VectorXd& x_hi, double t0, double T,
                                            int nt = 9, int nx = 17);

/// Regime-2 control u = (-sigma^T gradU - tau1^T xi_y, -tau2^T xi_y) with
/// xi_y = d_y xi_gamma(x, y, gradU). Cell solutions are precomputed on the
/// (x,p) lattice (continuation in p) and bilinearly interpolated; queries
/// outside the lattice raise Error::LatticeRange.
ControlPolicy make_control_r2(const Subsolution& sub, std::shared_ptr<const CellProviderR2> cells,
                              std::shared_ptr<const CoefficientSet> model,
                              const ControlLatticeSpec& lattice);

/// Regime-3 control: same assembly with xi_0.
ControlPolicy make_control_r3(const Subsolution& sub, std::shared_ptr<const CellProviderR3> cells,
                              std::shared_ptr<const CoefficientSet> model,
                              const ControlLatticeSpec& lattice);

struct TrajectoryOutcome {
    Eigen::VectorXd x_T;
    double y_T = 0.0;
    double log_lr = 0.0; // log dP/dPbar along the path
    bool diverged = false;
    long diverged_step = -1;
    // optional thinning of (s, x, y)
    std::vector<double> thin_s, thin_y;
    std::vector<Eigen::VectorXd> thin_x;
};

/// Two-scale Euler-Maruyama under the sampling measure Pbar for one path.
/// Per step the slow drift gains +sigma u1 and the fast drift gains
/// +(1/delta)(tau1 u1 + tau2 u2); the log-likelihood accumulates
/// -(1/(2 eps)) ||u||^2 dt - (1/sqrt(eps)) <u, (dW, dB)>.
/// thin_every > 0 records every k-th state.
TrajectoryOutcome integrate_controlled(const CoefficientSet& model, const SimConfig& config,
                                       const ControlPolicy& policy, long path_index,
                                       int thin_every = 0);

struct Functional {
    enum class Type { ExpCost, Indicator };
    Type type = Type::ExpCost;
    std::function<double(const Eigen::VectorXd&)> h;        // ExpCost
    std::function<bool(const Eigen::VectorXd&)> indicator;  // Indicator
};

struct EstimatorReport {
    long n = 0;
    double theta_hat = 0.0;
    double q_hat = 0.0;   // sample second moment of Gamma
    double std_err = 0.0; // sample std of Gamma / sqrt(n)
    double rel_err = 0.0; // std_err / theta_hat
    double decay_mean = 0.0; // -eps ln theta_hat
    double decay_2nd = 0.0;  // -eps ln q_hat
    double bound = std::numeric_limits<double>::quiet_NaN(); // G + Ubar at (t0,x0) when supplied
    long n_diverged = 0;
    double runtime_ms = 0.0;
};

/// Batched importance-sampling estimate of theta(eps).
/// Gamma_i = e^{-h(x_T)/eps} exp(log_lr) (or 1_A(x_T) exp(log_lr)).
/// Paths run in an OpenMP pool (threads = 0 means all cores); per-path results
/// are reduced in fixed path order, so reports are bit-identical for any
/// thread count.
EstimatorReport estimate(const CoefficientSet& model, const SimConfig& config,
                         const ControlPolicy& policy, const Functional& functional,
                         int threads = 0,
                         double bound = std::numeric_limits<double>::quiet_NaN());

/// Serial reference implementation kept for testing; must produce bit-identical
/// reports to estimate().
EstimatorReport estimate_serial(const CoefficientSet& model, const SimConfig& config,
                                const ControlPolicy& policy, const Functional& functional,
                                double bound = std::numeric_limits<double>::quiet_NaN());

/// Like estimate() but also returns the per-path outcomes (for logs).
EstimatorReport estimate_with_outcomes(const CoefficientSet& model, const SimConfig& config,
                                       const ControlPolicy& policy, const Functional& functional,
                                       std::vector<TrajectoryOutcome>& outcomes, int threads = 0,
                                       double bound = std::numeric_limits<double>::quiet_NaN());

struct SweepRow {
    double epsilon = 0.0, delta = 0.0;
    EstimatorReport report;
    std::string error; // empty unless this row failed
};

/// Runs estimate() for each eps (strictly decreasing list), recomputing delta
/// and dt per eps. Per-eps failures are recorded in the row; the sweep
/// continues. The bound is computed once by the caller and passed through.
std::vector<SweepRow> sweep_epsilon(const CoefficientSet& model, const ScaleRegime& regime,
                                    const std::function<ControlPolicy(double)>& policy_factory,
                                    const std::vector<double>& eps_list,
                                    const SimConfig& config_template, const Functional& functional,
                                    int threads = 0,
                                    double bound = std::numeric_limits<double>::quiet_NaN());

} // namespace sfis
