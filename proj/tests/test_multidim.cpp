#include "doctest.h"

#include <cmath>

#include "sfis/mc_engine.hpp"
#include "sfis/torus_solver.hpp"
#include "sfis/variational.hpp"

using namespace sfis;

namespace {

// m = 2 slow components, kappa = 2 noise dimensions, diagonal structure:
// b = 0, c = -x, sigma = diag(1, 2), f = 0, tau1 = [1, 0], tau2 = [0, 1].
// The fast generator is pure diffusion, so mu is uniform and chi = 0.
CoefficientSet diag_model() {
    CoefficientSet m;
    m.m = 2;
    m.kappa = 2;
    m.period = 1.0;
    m.name = "diag2";
    m.fast_block_x_independent = true;
    m.slow_coeffs_y_independent = true;
    m.b = [](const VectorXd&, double) { return VectorXd::Zero(2).eval(); };
    m.c = [](const VectorXd& x, double) { return (-x).eval(); };
    m.sigma = [](const VectorXd&, double) {
        MatrixXd s = MatrixXd::Zero(2, 2);
        s(0, 0) = 1.0;
        s(1, 1) = 2.0;
        return s;
    };
    m.f = [](const VectorXd&, double) { return 0.0; };
    m.g = [](const VectorXd&, double) { return 0.0; };
    m.tau1 = [](const VectorXd&, double) {
        RowVectorXd t(2);
        t << 1.0, 0.0;
        return t;
    };
    m.tau2 = [](const VectorXd&, double) {
        RowVectorXd t(2);
        t << 0.0, 1.0;
        return t;
    };
    return m;
}

} // namespace

TEST_CASE("two-dimensional slow state: validation and effective dynamics") {
    CoefficientSet m = diag_model();
    ValidationOptions opts;
    ValidationReport rep = validate_model(m, ScaleRegime::r1(1.5), opts);
    CHECK(rep.pass);
    CHECK(rep.centering_residual == 0.0);

    TorusGrid grid = TorusGrid::make(128, 1.0);
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;
    auto [r, q] = effective_coefficients(m, x, grid);
    CHECK((r + x).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd q_exact = Eigen::MatrixXd::Zero(2, 2);
    q_exact(0, 0) = 1.0;
    q_exact(1, 1) = 4.0;
    CHECK((q - q_exact).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-dimensional local rate: closed form and brute-force program") {
    CoefficientSet m = diag_model();
    TorusGrid grid = TorusGrid::make(128, 1.0);
    auto model = std::make_shared<CoefficientSet>(m);
    EffectiveDynamics eff = make_effective_dynamics(model, grid);
    Eigen::VectorXd x(2), beta(2);
    x << 0.2, -0.4;
    beta << 1.0, 0.6;
    // L = (1/2)(beta - r)^T q^{-1} (beta - r), q = diag(1,4), r = -x
    const double expect = 0.5 * (std::pow(1.2, 2) / 1.0 + std::pow(0.2, 2) / 4.0);
    CHECK(local_rate_r1(x, beta, eff) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(local_rate_bruteforce_r1(x, beta, m, grid) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("two-dimensional integrator: normalization and controlled mean shift") {
    CoefficientSet m = diag_model();
    SimConfig cfg = SimConfig::make(ScaleRegime::r1(1.5), 0.25, 0.0, 1.0, 10000, 99,
                                    Eigen::VectorXd::Zero(2), 0.0);
    ControlPolicy pol;
    pol.provenance = "constant2";
    pol.eval = [](double, const Eigen::VectorXd&, double, Eigen::VectorXd& u1,
                  Eigen::VectorXd& u2) {
        u1.resize(2);
        u1 << 0.3, -0.2;
        u2 = Eigen::VectorXd::Constant(2, 0.1);
    };
    Functional unit;
    unit.type = Functional::Type::ExpCost;
    unit.h = [](const Eigen::VectorXd&) { return 0.0; };
    EstimatorReport rep = estimate(m, cfg, pol, unit);
    CHECK(std::abs(rep.theta_hat - 1.0) <= 3 * rep.std_err);
    CHECK(rep.q_hat >= rep.theta_hat * rep.theta_hat);

    // E[x_T] solves xdot = -x + sigma u1 from 0: x_i(T) = (sigma u1)_i (1 - e^{-T})
    std::vector<TrajectoryOutcome> outs;
    estimate_with_outcomes(m, cfg, pol, unit, outs);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (const auto& o : outs) mean += o.x_T;
    mean /= double(outs.size());
    const double f = 1.0 - std::exp(-1.0);
    CHECK(mean[0] == doctest::Approx(0.3 * f).epsilon(0.15));
    CHECK(mean[1] == doctest::Approx(2.0 * (-0.2) * f).epsilon(0.15));
}
