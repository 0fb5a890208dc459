#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>

#include "sfis/experiments.hpp"
#include "sfis/quadrature.hpp"
#include "sfis/variational.hpp"

using namespace sfis;

namespace {

EffectiveDynamics linear_dynamics(double k, double q) {
    // r(x) = -k x, constant q
    EffectiveDynamics eff;
    eff.r = [k](const Eigen::VectorXd& x) { return (-k * x).eval(); };
    eff.q = [q](const Eigen::VectorXd& x) {
        return (q * Eigen::MatrixXd::Identity(x.size(), x.size())).eval();
    };
    return eff;
}

DiscretePath straight_line(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double T, int K) {
    DiscretePath p;
    p.times.resize(K + 1);
    p.nodes.resize(K + 1);
    for (int i = 0; i <= K; ++i) {
        p.times[i] = T * i / K;
        p.nodes[i] = a + (b - a) * (double(i) / K);
    }
    return p;
}

} // namespace

TEST_CASE("path validation") {
    DiscretePath p;
    p.times.resize(1);
    p.times[0] = 0;
    p.nodes.push_back(Eigen::VectorXd::Zero(1));
    CHECK_THROWS_AS(p.check(), Error);
}

TEST_CASE("action of a relaxation path is nearly zero") {
    EffectiveDynamics eff = linear_dynamics(1.0, 1.0);
    // phi(t) = x0 e^{-t} solves phidot = r(phi); sample it on 64 nodes
    const int K = 64;
    DiscretePath p;
    p.times.resize(K + 1);
    p.nodes.resize(K + 1);
    for (int i = 0; i <= K; ++i) {
        p.times[i] = double(i) / K;
        p.nodes[i] = Eigen::VectorXd::Constant(1, 2.0 * std::exp(-p.times[i]));
    }
    CHECK(action_r1(p, eff) <= 1e-6);
}

TEST_CASE("constant path with zero drift costs nothing") {
    EffectiveDynamics eff = linear_dynamics(0.0, 2.0);
    DiscretePath p = straight_line(Eigen::VectorXd::Constant(1, 0.7),
                                   Eigen::VectorXd::Constant(1, 0.7), 1.0, 8);
    CHECK(action_r1(p, eff) == 0.0);
}

TEST_CASE("straight line against zero drift has the quadratic cost") {
    // S = (z-x)^T q^{-1} (z-x) / (2T)
    Eigen::MatrixXd q(2, 2);
    q << 2.0, 0.3, 0.3, 1.0;
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Zero(2), q);
    Eigen::VectorXd x(2), z(2);
    x << 0, 0;
    z << 1.5, -0.5;
    const double T = 2.0;
    DiscretePath p = straight_line(x, z, T, 16);
    const double expect = (z - x).dot(q.llt().solve(z - x)) / (2 * T);
    CHECK(action_r1(p, eff) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("local rate basics") {
    EffectiveDynamics eff = linear_dynamics(1.0, 1.0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.4);
    CHECK(local_rate_r1(x, eff.r(x), eff) == 0.0);

    EffectiveDynamics id2 = constant_effective_dynamics(Eigen::VectorXd::Zero(2),
                                                        Eigen::MatrixXd::Identity(2, 2));
    Eigen::VectorXd e1(2);
    e1 << 1, 0;
    CHECK(local_rate_r1(Eigen::VectorXd::Zero(2), e1, id2) == doctest::Approx(0.5));

    // nonnegative, zero only at beta = r
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-2, 2);
    for (int k = 0; k < 25; ++k) {
        Eigen::VectorXd xx = Eigen::VectorXd::Constant(1, U(rng));
        Eigen::VectorXd bb = Eigen::VectorXd::Constant(1, U(rng));
        const double L = local_rate_r1(xx, bb, eff);
        CHECK(L >= 0.0);
        if ((bb - eff.r(xx)).norm() > 1e-12) CHECK(L > 0.0);
    }
}

TEST_CASE("rough-Langevin local rate matches the quadrature-oracle closed form") {
    RoughLangevinSpec spec = RoughLangevinSpec::cosine(1.0, 1.0, 1.0); // V'(x) = x
    LangevinClosedForms cf = langevin_closed_forms(spec);
    auto model = std::make_shared<CoefficientSet>(build_rough_langevin(spec));
    EffectiveDynamics eff = make_effective_dynamics(model, TorusGrid::make(512, 1.0));
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.6);
    Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, -0.9);
    const double expect = 0.5 * std::pow(beta[0] - cf.r(x)[0], 2) / cf.q;
    CHECK(local_rate_r1(x, beta, eff) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("brute-force local rate agrees with the explicit solution") {
    auto model = std::make_shared<CoefficientSet>(
        build_rough_langevin(RoughLangevinSpec::cosine(1.0, 1.0, 1.0)));
    TorusGrid grid = TorusGrid::make(128, 1.0);
    EffectiveDynamics eff = make_effective_dynamics(model, grid);
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, U(rng));
        Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, U(rng));
        const double exact = local_rate_r1(x, beta, eff);
        const double brute = local_rate_bruteforce_r1(x, beta, *model, grid);
        CHECK(std::abs(exact - brute) / (1.0 + exact) <= 1e-6);
    }
}

TEST_CASE("brute force with flat fast structure reduces to the hand Lagrange solution") {
    // b = 0, chi = 0, sigma constant: L = (1/2)(beta - r)^T (sigma sigma^T)^{-1} (beta - r)
    CoefficientSet m = build_rough_langevin(RoughLangevinSpec::cosine(0.5, 0.0, 1.0));
    TorusGrid grid = TorusGrid::make(128, 1.0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);
    Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 1.1);
    const double ss = 2.0 * 0.5; // sigma sigma^T = 2D
    const double expect = 0.5 * std::pow(beta[0] - (-0.2), 2) / ss;
    CHECK(local_rate_bruteforce_r1(x, beta, m, grid) == doctest::Approx(expect).epsilon(1e-10));
    CHECK(local_rate_bruteforce_r1(x, Eigen::VectorXd::Constant(1, -0.2), m, grid) <= 1e-12);
}

TEST_CASE("optimal control attains the local-rate infimum") {
    auto model = std::make_shared<CoefficientSet>(
        build_rough_langevin(RoughLangevinSpec::cosine(1.0, 1.0, 1.0)));
    TorusGrid grid = TorusGrid::make(256, 1.0);
    EffectiveDynamics eff = make_effective_dynamics(model, grid);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.3);
    InvariantMeasure mu = solve_invariant_measure(*model, x, grid);
    CellSolutionR1 cell = solve_cell_r1(*model, x, grid, &mu);

    Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 0.8);
    GridControl gc = optimal_control_r1_ldp(x, beta, cell, *model, eff);
    // tau2 = 0 for this model
    CHECK(gc.v2.cwiseAbs().maxCoeff() == 0.0);
    // plugging the control into the brute-force objective reproduces the rate
    double obj = 0.0;
    for (int j = 0; j < grid.n; ++j)
        obj += 0.5 * (gc.v1.row(j).squaredNorm() + gc.v2.row(j).squaredNorm()) *
               mu.density[j] * grid.h;
    CHECK(std::abs(obj - local_rate_r1(x, beta, eff)) <= 1e-8);

    GridControl at_r = optimal_control_r1_ldp(x, eff.r(x), cell, *model, eff);
    CHECK(at_r.v1.cwiseAbs().maxCoeff() <= 1e-14);
}

// ---------------------------------------------------------------------------
// Quasipotential

TEST_CASE("zero terminal cost gives zero quasipotential") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Constant(1, 0.3),
                                                        Eigen::MatrixXd::Identity(1, 1));
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -6);
    opts.box_hi = Eigen::VectorXd::Constant(1, 6);
    const double G = quasipotential_G(0.0, Eigen::VectorXd::Zero(1),
                                      [](const Eigen::VectorXd&) { return 0.0; }, 1.0, eff,
                                      QuasipotentialMethod::HopfLax, opts);
    CHECK(std::abs(G) <= 1e-12);
}

TEST_CASE("Hopf-Lax closed form: r = 0, q = 1, h = x^2") {
    // G(t,x) = x^2 / (1 + 2(T-t)); one-line calculus minimization
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Zero(1),
                                                        Eigen::MatrixXd::Identity(1, 1));
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -6);
    opts.box_hi = Eigen::VectorXd::Constant(1, 6);
    auto h = [](const Eigen::VectorXd& z) { return z.squaredNorm(); };
    double prev = -1.0;
    for (double t : {0.0, 0.25, 0.5, 0.75}) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.2);
        const double G = quasipotential_G(t, x, h, 1.0, eff, QuasipotentialMethod::HopfLax, opts);
        CHECK(G == doctest::Approx(1.44 / (1 + 2 * (1 - t))).epsilon(1e-8));
        CHECK(G > prev); // nondecreasing in t for this closed form
        prev = G;
    }
}

TEST_CASE("path_opt agrees with Hopf-Lax on constant coefficients") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Zero(1),
                                                        Eigen::MatrixXd::Identity(1, 1));
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -4);
    opts.box_hi = Eigen::VectorXd::Constant(1, 4);
    opts.multistarts = 4;
    auto h = [](const Eigen::VectorXd& z) { return (z.array() - 1.0).matrix().squaredNorm(); };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    const double g_hl = quasipotential_G(0, x, h, 1.0, eff, QuasipotentialMethod::HopfLax, opts);
    const double g_po = quasipotential_G(0, x, h, 1.0, eff, QuasipotentialMethod::PathOpt, opts);
    CHECK(std::abs(g_hl - g_po) < 1e-4);
}

TEST_CASE("hopf_lax refuses non-constant coefficients") {
    EffectiveDynamics eff = linear_dynamics(1.0, 1.0); // r(x) = -x varies
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -4);
    opts.box_hi = Eigen::VectorXd::Constant(1, 4);
    CHECK_THROWS_AS(quasipotential_G(0, Eigen::VectorXd::Zero(1),
                                     [](const Eigen::VectorXd&) { return 0.0; }, 1.0, eff,
                                     QuasipotentialMethod::HopfLax, opts),
                    Error);
}

// ---------------------------------------------------------------------------
// Subsolutions

TEST_CASE("zero subsolution passes for h >= 0") {
    EffectiveDynamics eff = linear_dynamics(1.0, 1.0);
    HamiltonianHandle ham = hamiltonian_r1(eff); // Hbar(x, 0) = 0
    Subsolution sub =
        zero_subsolution([](const Eigen::VectorXd& x) { return (x.array() - 1).matrix().squaredNorm(); });
    auto rep = verify_subsolution(sub, ham, Eigen::VectorXd::Constant(1, -2),
                                  Eigen::VectorXd::Constant(1, 2), 0.0, 1.0, 9, 33);
    CHECK(rep.pass);
}

TEST_CASE("affine subsolution has exactly zero residual for constant coefficients") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Constant(1, 0.2),
                                                        Eigen::MatrixXd::Identity(1, 1));
    HamiltonianHandle ham = hamiltonian_r1(eff);
    auto h = [](const Eigen::VectorXd& x) { return (x.array() - 1).matrix().squaredNorm(); };
    Eigen::VectorXd a = Eigen::VectorXd::Constant(1, -0.8);
    Subsolution sub = affine_subsolution(a, h, 1.0, ham, Eigen::VectorXd::Constant(1, -2),
                                         Eigen::VectorXd::Constant(1, 2));
    auto rep = verify_subsolution(sub, ham, Eigen::VectorXd::Constant(1, -2),
                                  Eigen::VectorXd::Constant(1, 2), 0.0, 1.0, 9, 33);
    CHECK(rep.pass);
    CHECK(std::abs(rep.worst_hjb) <= 1e-12);
    // terminal tangency: u(T,.) <= h with contact at one point
    CHECK(rep.worst_terminal_slack >= -1e-12);
}

TEST_CASE("Hopf-Lax value function passes verification as its own subsolution") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Zero(1),
                                                        Eigen::MatrixXd::Identity(1, 1));
    HamiltonianHandle ham = hamiltonian_r1(eff);
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -6);
    opts.box_hi = Eigen::VectorXd::Constant(1, 6);
    auto h = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    Subsolution sub = hopf_lax_subsolution(eff, h, 1.0, opts);
    auto rep = verify_subsolution(sub, ham, Eigen::VectorXd::Constant(1, -2),
                                  Eigen::VectorXd::Constant(1, 2), 0.0, 1.0, 9, 33, 1e-6);
    CHECK(rep.pass);
    CHECK(std::abs(rep.worst_hjb) <= 1e-6); // it solves the equation
    CHECK(sub.u(0.0, Eigen::VectorXd::Constant(1, 1.2)) ==
          doctest::Approx(1.44 / 3.0).epsilon(1e-8));
}

TEST_CASE("built-in subsolution gradients match finite differences of u") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Constant(1, 0.1),
                                                        Eigen::MatrixXd::Identity(1, 1) * 0.8);
    HamiltonianHandle ham = hamiltonian_r1(eff);
    QuasipotentialOptions opts;
    opts.box_lo = Eigen::VectorXd::Constant(1, -8);
    opts.box_hi = Eigen::VectorXd::Constant(1, 8);
    auto h = [](const Eigen::VectorXd& x) { return (x.array() - 1).matrix().squaredNorm(); };
    std::vector<Subsolution> subs{
        affine_subsolution(Eigen::VectorXd::Constant(1, -0.5), h, 1.0, ham,
                           Eigen::VectorXd::Constant(1, -2), Eigen::VectorXd::Constant(1, 2)),
        hopf_lax_subsolution(eff, h, 1.0, opts)};
    const double fd = 1e-5;
    for (const auto& sub : subs) {
        for (double t : {0.1, 0.6}) {
            for (double xv : {-0.7, 0.3, 1.4}) {
                Eigen::VectorXd xp = Eigen::VectorXd::Constant(1, xv + fd);
                Eigen::VectorXd xm = Eigen::VectorXd::Constant(1, xv - fd);
                const double num = (sub.u(t, xp) - sub.u(t, xm)) / (2 * fd);
                CHECK(std::abs(sub.grad_x(t, Eigen::VectorXd::Constant(1, xv))[0] - num) <= 1e-6);
            }
        }
    }
}

TEST_CASE("table subsolution interpolates a lattice and exposes its derivatives") {
    // u(t,x) = 0.5 x - 0.25 t sampled on a 5x9 lattice is reproduced exactly
    // by bilinear interpolation
    const std::string path = "/tmp/sfis_table_sub.csv";
    {
        std::ofstream out(path);
        out << "t,x,u\n";
        for (int i = 0; i <= 4; ++i)
            for (int j = 0; j <= 8; ++j) {
                const double t = i / 4.0, x = -2.0 + 4.0 * j / 8.0;
                out << t << "," << x << "," << 0.5 * x - 0.25 * t << "\n";
            }
    }
    Subsolution sub = table_subsolution(path, [](const Eigen::VectorXd&) { return 0.0; });
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.37);
    CHECK(sub.u(0.61, x) == doctest::Approx(0.5 * 0.37 - 0.25 * 0.61).epsilon(1e-12));
    CHECK(sub.grad_x(0.61, x)[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sub.dt(0.61, x) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK_THROWS_AS(table_subsolution("/tmp/does_not_exist.csv",
                                      [](const Eigen::VectorXd&) { return 0.0; }),
                    Error);
}

TEST_CASE("verification failure is reported, not thrown") {
    EffectiveDynamics eff = constant_effective_dynamics(Eigen::VectorXd::Zero(1),
                                                        Eigen::MatrixXd::Identity(1, 1));
    HamiltonianHandle ham = hamiltonian_r1(eff);
    // u = 10 violates u(T,.) <= h for h < 10
    Subsolution bad;
    bad.u = [](double, const Eigen::VectorXd&) { return 10.0; };
    bad.grad_x = [](double, const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(1).eval(); };
    bad.dt = [](double, const Eigen::VectorXd&) { return 0.0; };
    bad.terminal_cost = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    auto rep = verify_subsolution(bad, ham, Eigen::VectorXd::Constant(1, -2),
                                  Eigen::VectorXd::Constant(1, 2), 0.0, 1.0, 5, 9);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_terminal_slack < -1.0);
}
