#include "doctest.h"

#include <cmath>

#include "sfis/experiments.hpp"
#include "sfis/mc_engine.hpp"
#include "sfis/quadrature.hpp"

using namespace sfis;

namespace {

// b = c = f = g = 0, sigma = tau1 = s, tau2 = 0 on the unit cell
CoefficientSet flat_model(double s = 1.0) {
    CoefficientSet m;
    m.m = 1;
    m.kappa = 1;
    m.period = 1.0;
    m.name = "flat";
    m.b = [](const VectorXd&, double) { return VectorXd::Zero(1).eval(); };
    m.c = [](const VectorXd&, double) { return VectorXd::Zero(1).eval(); };
    m.sigma = [s](const VectorXd&, double) { return MatrixXd::Constant(1, 1, s).eval(); };
    m.f = [](const VectorXd&, double) { return 0.0; };
    m.g = [](const VectorXd&, double) { return 0.0; };
    m.tau1 = [s](const VectorXd&, double) { return RowVectorXd::Constant(1, s).eval(); };
    m.tau2 = [](const VectorXd&, double) { return RowVectorXd::Zero(1).eval(); };
    return m;
}

ControlPolicy constant_control(double u1, double u2) {
    ControlPolicy p;
    p.provenance = "constant";
    p.eval = [u1, u2](double, const Eigen::VectorXd&, double, Eigen::VectorXd& a,
                      Eigen::VectorXd& b) {
        a = Eigen::VectorXd::Constant(1, u1);
        b = Eigen::VectorXd::Constant(1, u2);
    };
    return p;
}

Functional unit_functional() {
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd&) { return 0.0; };
    return fn;
}

SimConfig flat_config(double eps, long n_paths, uint64_t seed) {
    return SimConfig::make(ScaleRegime::r1(1.5), eps, 0.0, 1.0, n_paths, seed,
                           Eigen::VectorXd::Zero(1), 0.0);
}

} // namespace

TEST_CASE("counter rng is a pure function of (seed, path, step, draw)") {
    CounterRng a(42, 7), b(42, 7), c(42, 8);
    CHECK(a.normal(3, 1) == b.normal(3, 1));
    CHECK(a.normal(3, 1) != c.normal(3, 1));
    CHECK(a.normal(3, 0) != a.normal(4, 0));

    // basic moments
    double s1 = 0, s2 = 0;
    const int N = 200000;
    CounterRng r(123, 0);
    for (int i = 0; i < N; ++i) {
        const double z = r.normal(uint64_t(i / 2), uint64_t(i % 2));
        s1 += z;
        s2 += z * z;
    }
    CHECK(std::abs(s1 / N) < 0.01);
    CHECK(std::abs(s2 / N - 1.0) < 0.02);
}

TEST_CASE("sim config derives delta and a dt that divides the horizon") {
    SimConfig c = SimConfig::make(ScaleRegime::r1(1.5), 0.25, 0.0, 1.0, 1000, 1,
                                  Eigen::VectorXd::Zero(1), 0.0);
    CHECK(c.delta == doctest::Approx(std::pow(0.25, 1.5)));
    CHECK(c.dt <= 0.1 * c.delta * c.delta / c.epsilon * (1 + 1e-12));
    const double steps = 1.0 / c.dt;
    CHECK(std::abs(steps - std::round(steps)) < 1e-9);

    SimConfig bad = c;
    bad.dt = 1.0; // violates the fast-scale constraint
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("uncontrolled paths carry exactly zero log-likelihood") {
    CoefficientSet m = flat_model();
    SimConfig cfg = flat_config(0.25, 100, 5);
    ControlPolicy pol = zero_control(1);
    for (long i : {0L, 3L, 17L}) {
        TrajectoryOutcome out = integrate_controlled(m, cfg, pol, i);
        CHECK(out.log_lr == 0.0);
    }
}

TEST_CASE("baseline estimate equals direct simulation of the uncontrolled system") {
    // replay the same counter-rng stream through a hand-rolled Euler loop
    CoefficientSet m = build_rough_langevin(RoughLangevinSpec::cosine(1.0, 1.0, 1.0));
    SimConfig cfg = flat_config(0.25, 100, 99);
    ControlPolicy pol = zero_control(1);
    for (long path : {0L, 11L}) {
        TrajectoryOutcome out = integrate_controlled(m, cfg, pol, path);
        CounterRng rng(cfg.seed, uint64_t(path));
        double x = 0.0, y = 0.0;
        const double sqdt = std::sqrt(cfg.dt), sqe = std::sqrt(cfg.epsilon);
        const double eod = cfg.epsilon / cfg.delta;
        for (long k = 0; k < cfg.n_steps(); ++k) {
            const double ye = m.eval_y(y);
            const double dW = rng.normal(uint64_t(k), 0) * sqdt;
            (void)rng.normal(uint64_t(k), 1); // dB drawn but unused (tau2 = 0)
            Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
            const double xn = x + (eod * m.b(xv, ye)[0] + m.c(xv, ye)[0]) * cfg.dt +
                              sqe * m.sigma(xv, ye)(0, 0) * dW;
            y += (eod * m.f(xv, ye) + m.g(xv, ye)) / cfg.delta * cfg.dt +
                 sqe / cfg.delta * m.tau1(xv, ye)(0, 0) * dW;
            x = xn;
        }
        CHECK(out.x_T[0] == x);
        CHECK(out.y_T == y);
    }
}

TEST_CASE("controlled drift shifts the slow mean as the recursion predicts") {
    // slow update per step is sigma u1 dt + sqrt(eps) sigma dW, so
    // E[x_T] = x0 + u (T - t0) for sigma = 1, constant u1 = u
    CoefficientSet m = flat_model(1.0);
    SimConfig cfg = flat_config(0.25, 100000, 31);
    const double u = 0.5;
    ControlPolicy pol = constant_control(u, 0.0);
    std::vector<TrajectoryOutcome> outs;
    estimate_with_outcomes(m, cfg, pol, unit_functional(), outs);
    double mean = 0, var = 0;
    for (const auto& o : outs) mean += o.x_T[0];
    mean /= outs.size();
    for (const auto& o : outs) var += std::pow(o.x_T[0] - mean, 2);
    const double se = std::sqrt(var / (outs.size() - 1)) / std::sqrt(double(outs.size()));
    CHECK(std::abs(mean - u * 1.0) <= 3 * se);
}

TEST_CASE("discrete change of measure is exactly normalized in expectation") {
    CoefficientSet m = flat_model();
    SimConfig cfg = flat_config(0.25, 10000, 77);
    ControlPolicy pol = constant_control(0.4, -0.3);
    EstimatorReport rep = estimate(m, cfg, pol, unit_functional());
    // Gamma = exp(log_lr) with h = 0; martingale identity E[Gamma] = 1
    CHECK(std::abs(rep.theta_hat - 1.0) <= 3 * rep.std_err);
    CHECK(rep.q_hat >= rep.theta_hat * rep.theta_hat); // Jensen, exact at sample level
}

TEST_CASE("serial reference and OpenMP kernel produce bit-identical reports") {
    CoefficientSet m = build_rough_langevin(RoughLangevinSpec::cosine(1.0, 1.0, 1.0));
    SimConfig cfg = flat_config(0.25, 2000, 2024);
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) { return (x[0] - 1) * (x[0] - 1); };
    ControlPolicy pol = constant_control(0.3, 0.1);
    EstimatorReport a = estimate_serial(m, cfg, pol, fn);
    for (int threads : {1, 2, 4}) {
        EstimatorReport b = estimate(m, cfg, pol, fn, threads);
        CHECK(a.theta_hat == b.theta_hat);
        CHECK(a.q_hat == b.q_hat);
        CHECK(a.std_err == b.std_err);
    }
}

TEST_CASE("halving dt moves theta_hat by less than two combined standard errors") {
    CoefficientSet m = flat_model();
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) { return (x[0] - 1) * (x[0] - 1); };
    ControlPolicy pol = zero_control(1);
    SimConfig c1 = flat_config(0.25, 20000, 5);
    SimConfig c2 = c1;
    c2.dt = 0.5 * c1.dt;
    EstimatorReport r1 = estimate(m, c1, pol, fn);
    EstimatorReport r2 = estimate(m, c2, pol, fn);
    CHECK(std::abs(r1.theta_hat - r2.theta_hat) <=
          2 * std::hypot(r1.std_err, r2.std_err) + 1e-12);
}

TEST_CASE("diverging trajectories raise with the step index") {
    CoefficientSet m = flat_model();
    m.c = [](const VectorXd& x, double) { return VectorXd::Constant(1, std::exp(x[0])).eval(); };
    SimConfig cfg = flat_config(0.25, 100, 7);
    cfg.x0 = Eigen::VectorXd::Constant(1, 40.0); // exp(40) dt overflows x quickly
    CHECK_THROWS_AS(integrate_controlled(m, cfg, zero_control(1), 0), Error);
}

// ---------------------------------------------------------------------------
// Regime-specific control assembly

TEST_CASE("Regime-1 control reproduces the rough-Langevin closed form") {
    // u1 = -(sqrt(2D) lambda / L_hat) e^{Q(y)/D} dU/dx, u2 = 0
    RoughLangevinSpec spec = RoughLangevinSpec::cosine(1.0, 1.0, 1.0);
    auto model = std::make_shared<CoefficientSet>(build_rough_langevin(spec));
    TorusGrid grid = TorusGrid::make(512, 1.0);
    auto cells = std::make_shared<CellProviderR1>(*model, grid);
    const double a = -0.4;
    Subsolution sub;
    sub.u = [a](double, const Eigen::VectorXd& x) { return a * x[0]; };
    sub.grad_x = [a](double, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Constant(1, a).eval();
    };
    sub.dt = [](double, const Eigen::VectorXd&) { return 0.0; };
    sub.terminal_cost = [](const Eigen::VectorXd&) { return 0.0; };
    ControlPolicy pol = make_control_r1(sub, cells, model);

    const double Lhat = romberg([](double y) { return std::exp(std::cos(2 * M_PI * y)); }, 0, 1);
    Eigen::VectorXd u1(1), u2(1);
    for (double y : {0.13, 0.47, 0.92}) {
        pol.eval(0.2, Eigen::VectorXd::Constant(1, 0.5), y, u1, u2);
        const double expect = -(std::sqrt(2.0) / Lhat) * std::exp(std::cos(2 * M_PI * y)) * a;
        CHECK(u1[0] == doctest::Approx(expect).epsilon(2e-4));
        CHECK(u2[0] == 0.0);
    }
    // zero gradient means zero control
    Subsolution flat = zero_subsolution([](const Eigen::VectorXd&) { return 0.0; });
    ControlPolicy pol0 = make_control_r1(flat, cells, model);
    pol0.eval(0.2, Eigen::VectorXd::Constant(1, 0.5), 0.3, u1, u2);
    CHECK(u1[0] == 0.0);
    CHECK(u2[0] == 0.0);
}

TEST_CASE("Regime-1 control for the fast-vol model is (-sigma(y) dU, 0)") {
    FastVolSpec spec = FastVolSpec::sine(1.0, 0.5, 0.0, 0.7);
    auto model = std::make_shared<CoefficientSet>(build_fast_vol(spec, ScaleRegime::r1(1.5)));
    TorusGrid grid = TorusGrid::make(128, 1.0);
    auto cells = std::make_shared<CellProviderR1>(*model, grid);
    const double a = 0.6;
    Subsolution sub;
    sub.u = [a](double, const Eigen::VectorXd& x) { return a * x[0]; };
    sub.grad_x = [a](double, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Constant(1, a).eval();
    };
    sub.dt = [](double, const Eigen::VectorXd&) { return 0.0; };
    sub.terminal_cost = [](const Eigen::VectorXd&) { return 0.0; };
    ControlPolicy pol = make_control_r1(sub, cells, model);
    Eigen::VectorXd u1(1), u2(1);
    for (double y : {-0.4, 0.8, 2.3}) { // unwrapped OU state
        pol.eval(0.0, Eigen::VectorXd::Zero(1), y, u1, u2);
        CHECK(u1[0] == doctest::Approx(-spec.sigma(y) * a).epsilon(1e-12));
        CHECK(u2[0] == 0.0);
    }
}

namespace {

std::shared_ptr<CoefficientSet> surrogate_model(double rho, double sigma_amp = 0.5) {
    FastVolSpec spec = FastVolSpec::sine(1.0, sigma_amp, 0.0, rho);
    spec.periodic_surrogate = true;
    return std::make_shared<CoefficientSet>(build_fast_vol(spec, ScaleRegime::r3(0.5)));
}

Subsolution wavy_subsolution() {
    // gradient sweeps smoothly through [-0.8, 0.8]
    Subsolution sub;
    sub.u = [](double, const Eigen::VectorXd& x) { return (0.8 / 3.0) * std::sin(3 * x[0]); };
    sub.grad_x = [](double, const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, 0.8 * std::cos(3 * x[0])).eval();
    };
    sub.dt = [](double, const Eigen::VectorXd&) { return 0.0; };
    sub.terminal_cost = [](const Eigen::VectorXd&) { return 0.0; };
    sub.label = "wavy";
    return sub;
}

} // namespace

TEST_CASE("Regime-2 control: y-independent coefficients reduce to (-sigma^T dU, 0)") {
    auto model = std::make_shared<CoefficientSet>(
        build_rough_langevin(RoughLangevinSpec::cosine(0.5, 0.0, 1.0))); // sigma = tau1 = 1
    TorusGrid grid = TorusGrid::make(128, 1.0);
    auto cells = std::make_shared<CellProviderR2>(*model, 0.7, grid);
    Subsolution sub = wavy_subsolution();
    ControlLatticeSpec lat = lattice_from_subsolution(sub, Eigen::VectorXd::Constant(1, -2),
                                                      Eigen::VectorXd::Constant(1, 2), 0, 1);
    ControlPolicy pol = make_control_r2(sub, cells, model, lat);
    Eigen::VectorXd u1(1), u2(1);
    for (double xv : {-1.2, 0.0, 0.9}) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, xv);
        pol.eval(0.1, x, 0.37, u1, u2);
        CHECK(u1[0] == doctest::Approx(-sub.grad_x(0.1, x)[0]).epsilon(1e-9));
        CHECK(std::abs(u2[0]) <= 1e-10);
    }
}

TEST_CASE("Regime-2 lattice interpolation matches on-the-fly solves") {
    auto model = surrogate_model(0.8);
    TorusGrid grid = TorusGrid::make(128, 1.0);
    auto cells = std::make_shared<CellProviderR2>(*model, 0.3, grid);
    Subsolution sub = wavy_subsolution();
    ControlLatticeSpec lat;
    lat.x_lo = Eigen::VectorXd::Constant(1, -2);
    lat.x_hi = Eigen::VectorXd::Constant(1, 2);
    lat.p_lo = -1.0;
    lat.p_hi = 1.0;
    lat.nx = 3; // coefficients are x-independent
    lat.np = 129;
    ControlPolicy pol = make_control_r2(sub, cells, model, lat);

    Eigen::VectorXd u1(1), u2(1);
    for (double xv : {-1.7, -0.9, -0.2, 0.1, 0.4, 0.8, 1.1, 1.5, 1.8, 1.97}) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, xv);
        const Eigen::VectorXd p = sub.grad_x(0.0, x);
        const double y = std::fmod(std::abs(xv) * 2.39, 1.0);
        pol.eval(0.0, x, y, u1, u2);
        CellSolutionR2 exact = solve_cell_r2(*model, x, p, 0.3, grid);
        const double xi_y = interp_cubic_periodic(exact.dxi_dy, 1.0, y);
        const double sig = (*model).sigma(x, y)(0, 0);
        const double e1 = -sig * p[0] - 0.8 * xi_y;               // tau1 = rho = 0.8
        const double e2 = -std::sqrt(1 - 0.64) * xi_y;            // tau2
        CHECK(std::abs(u1[0] - e1) <= 1e-4);
        CHECK(std::abs(u2[0] - e2) <= 1e-4);
    }
    // a gradient outside the p-lattice is an extend-lattice error
    ControlLatticeSpec narrow = lat;
    narrow.p_lo = -0.1;
    narrow.p_hi = 0.1;
    narrow.np = 5;
    ControlPolicy pol_narrow = make_control_r2(sub, cells, model, narrow);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1); // grad = 0.8 there
    CHECK_THROWS_AS(pol_narrow.eval(0.0, x0, 0.1, u1, u2), Error);
}

TEST_CASE("Regime-3 control for sine volatility collapses to -(int sigma) dU") {
    // int_0^1 sigma = 1, so u1 = -dU exactly and independent of y
    auto model = surrogate_model(1.0);
    TorusGrid grid = TorusGrid::make(256, 1.0);
    auto cells = std::make_shared<CellProviderR3>(*model, grid);
    Subsolution sub = wavy_subsolution();
    ControlLatticeSpec lat = lattice_from_subsolution(sub, Eigen::VectorXd::Constant(1, -2),
                                                      Eigen::VectorXd::Constant(1, 2), 0, 1);
    ControlPolicy pol = make_control_r3(sub, cells, model, lat);
    Eigen::VectorXd u1(1), u2(1);
    for (double xv : {-1.0, 0.2, 1.3}) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, xv);
        const double p = sub.grad_x(0, x)[0];
        for (double y : {0.1, 0.5, 0.83}) {
            pol.eval(0.0, x, y, u1, u2);
            CHECK(std::abs(u1[0] - (-p)) <= 1e-8);
            CHECK(std::abs(u2[0]) <= 1e-12);
        }
    }
}

// ---------------------------------------------------------------------------
// Estimation

TEST_CASE("unit functional with a bounded policy estimates 1") {
    CoefficientSet m = flat_model();
    SimConfig cfg = flat_config(0.25, 5000, 11);
    EstimatorReport rep = estimate(m, cfg, constant_control(0.25, 0.0), unit_functional());
    CHECK(std::abs(rep.theta_hat - 1.0) <= 3 * rep.std_err);
}

TEST_CASE("importance sampling agrees with plain Monte Carlo (unbiasedness)") {
    RoughLangevinSpec spec = RoughLangevinSpec::cosine(1.0, 1.0, 1.0);
    auto model = std::make_shared<CoefficientSet>(build_rough_langevin(spec));
    TorusGrid grid = TorusGrid::make(512, 1.0);
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) { return (x[0] - 1) * (x[0] - 1); };

    EffectiveDynamics eff = make_effective_dynamics(model, grid);
    HamiltonianHandle ham = hamiltonian_r1(eff);
    Subsolution sub = affine_subsolution(Eigen::VectorXd::Constant(1, -0.3), fn.h, 1.0, ham,
                                         Eigen::VectorXd::Constant(1, -2),
                                         Eigen::VectorXd::Constant(1, 2));
    auto cells = std::make_shared<CellProviderR1>(*model, grid);
    ControlPolicy is_pol = make_control_r1(sub, cells, model);

    SimConfig cfg = flat_config(0.25, 10000, 321);
    EstimatorReport is_rep = estimate(*model, cfg, is_pol, fn);
    SimConfig cfg2 = flat_config(0.25, 10000, 654);
    EstimatorReport mc_rep = estimate(*model, cfg2, zero_control(1), fn);
    CHECK(std::abs(is_rep.theta_hat - mc_rep.theta_hat) <=
          3 * std::hypot(is_rep.std_err, mc_rep.std_err));
}

TEST_CASE("estimate requires a minimal batch") {
    CoefficientSet m = flat_model();
    SimConfig cfg = flat_config(0.25, 50, 3);
    CHECK_THROWS_AS(estimate(m, cfg, zero_control(1), unit_functional()), Error);
}

TEST_CASE("indicator functional: zero hits give infinite rel_err, not an error") {
    CoefficientSet m = flat_model();
    SimConfig cfg = flat_config(0.25, 200, 3);
    Functional fn;
    fn.type = Functional::Type::Indicator;
    fn.indicator = [](const Eigen::VectorXd& x) { return x[0] > 50.0; }; // unreachable
    EstimatorReport rep = estimate(m, cfg, zero_control(1), fn);
    CHECK(rep.theta_hat == 0.0);
    CHECK(std::isinf(rep.rel_err));
}

TEST_CASE("epsilon sweep: baseline rel_err degrades as the event gets rarer") {
    CoefficientSet m = flat_model();
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) { return (x[0] - 1) * (x[0] - 1); };
    SimConfig tmpl = flat_config(0.5, 4000, 17);
    auto rows = sweep_epsilon(m, ScaleRegime::r1(1.5), [](double) { return zero_control(1); },
                              {0.5, 0.25, 0.125}, tmpl, fn);
    REQUIRE(rows.size() == 3);
    int inversions = 0;
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].report.rel_err < rows[i - 1].report.rel_err) ++inversions;
    CHECK(inversions <= 1);
    // increasing eps list is rejected
    CHECK_THROWS_AS(sweep_epsilon(m, ScaleRegime::r1(1.5),
                                  [](double) { return zero_control(1); }, {0.125, 0.25}, tmpl, fn),
                    Error);
}

TEST_CASE("near-optimal control reaches the decay bound on the constant model") {
    // Hopf-Lax subsolution equals G; decay_2nd should be within 15% of 2G at
    // the smallest eps of the sweep. The terminal cost is smooth and bounded
    // with mild concavity at the path minimizer, which keeps the finite-eps
    // prefactor of the second moment close to one.
    const double D = 0.238;
    CoefficientSet m = build_rough_langevin(RoughLangevinSpec::cosine(D, 0.0, 0.0));
    auto model = std::make_shared<CoefficientSet>(m);
    EffectiveDynamics eff = constant_effective_dynamics(
        Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1) * (2 * D));
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) {
        return 1.0 - 1.0 / (1.0 + (x[0] - 1) * (x[0] - 1));
    };
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -4);
    opts.box_hi = Eigen::VectorXd::Constant(1, 4);
    Subsolution sub = hopf_lax_subsolution(eff, fn.h, 1.0, opts);
    auto cells = std::make_shared<CellProviderR1>(*model, TorusGrid::make(128, 1.0));
    ControlPolicy pol = make_control_r1(sub, cells, model);
    const double G = quasipotential_G(0.0, Eigen::VectorXd::Zero(1), fn.h, 1.0, eff,
                                      QuasipotentialMethod::HopfLax, opts);
    SimConfig tmpl = flat_config(0.25, 4000, 77);
    auto rows = sweep_epsilon(m, ScaleRegime::r1(1.5), [&](double) { return pol; },
                              {0.25, 0.125}, tmpl, fn, 0, 2 * G);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[1].error.empty());
    CHECK(std::abs(rows[1].report.decay_2nd - 2 * G) <= 0.15 * 2 * G);
    CHECK(rows[1].report.decay_2nd >= rows[1].report.bound - 0.1 * std::abs(rows[1].report.bound));
}
