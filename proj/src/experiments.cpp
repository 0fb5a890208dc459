#include "sfis/experiments.hpp"

#include <cmath>

#include "sfis/quadrature.hpp"

namespace sfis {

RoughLangevinSpec RoughLangevinSpec::cosine(double D, double q_amp, double v_curv, double period) {
    RoughLangevinSpec s;
    s.D = D;
    s.period = period;
    const double w = 2.0 * M_PI / period;
    s.Q = [q_amp, w](double y) { return q_amp * std::cos(w * y); };
    s.Qprime = [q_amp, w](double y) { return -q_amp * w * std::sin(w * y); };
    s.V = [v_curv](double x) { return 0.5 * v_curv * x * x; };
    s.Vprime = [v_curv](double x) { return v_curv * x; };
    return s;
}

CoefficientSet build_rough_langevin(const RoughLangevinSpec& spec) {
    CoefficientSet m;
    m.m = 1;
    m.kappa = 1;
    m.period = spec.period;
    m.name = "rough_langevin";
    // b, f, tau depend on y only by construction; c, g only through V'
    m.fast_block_x_independent = true;
    m.slow_coeffs_y_independent = true; // c, g from V'(x); sigma, tau constant
    m.all_x_independent =
        spec.Vprime(0.37) == 0.0 && spec.Vprime(-1.59) == 0.0 && spec.Vprime(2.11) == 0.0;
    const double sq2d = std::sqrt(2.0 * spec.D);
    auto Qp = spec.Qprime;
    auto Vp = spec.Vprime;
    m.b = [Qp](const VectorXd& x, double y) { return VectorXd::Constant(1, -Qp(y)).eval(); };
    m.c = [Vp](const VectorXd& x, double y) { return VectorXd::Constant(1, -Vp(x[0])).eval(); };
    m.sigma = [sq2d](const VectorXd&, double) { return MatrixXd::Constant(1, 1, sq2d).eval(); };
    m.f = [Qp](const VectorXd&, double y) { return -Qp(y); };
    m.g = [Vp](const VectorXd& x, double) { return -Vp(x[0]); };
    m.tau1 = [sq2d](const VectorXd&, double) { return RowVectorXd::Constant(1, sq2d).eval(); };
    m.tau2 = [](const VectorXd&, double) { return RowVectorXd::Zero(1).eval(); };
    return m;
}

LangevinClosedForms langevin_closed_forms(const RoughLangevinSpec& spec) {
    LangevinClosedForms cf;
    const double D = spec.D, lam = spec.period;
    cf.L = romberg([&](double y) { return std::exp(-spec.Q(y) / D); }, 0.0, lam);
    cf.L_hat = romberg([&](double y) { return std::exp(spec.Q(y) / D); }, 0.0, lam);
    cf.q = 2.0 * D * lam * lam / (cf.L * cf.L_hat);
    const double fac = lam * lam / (cf.L * cf.L_hat);
    auto Vp = spec.Vprime;
    cf.r = [fac, Vp](const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, -fac * Vp(x[0])).eval();
    };
    return cf;
}

FastVolSpec FastVolSpec::sine(double sigma0, double sigma_amp, double m_level, double rho,
                              double h_amp, double period) {
    FastVolSpec s;
    s.m_level = m_level;
    s.rho = rho;
    s.period = period;
    const double w = 2.0 * M_PI / period;
    s.sigma = [sigma0, sigma_amp, w](double y) { return sigma0 + sigma_amp * std::sin(w * y); };
    s.h_drift = [h_amp](double y) { return h_amp * y; };
    return s;
}

CoefficientSet build_fast_vol(const FastVolSpec& spec, const ScaleRegime& regime) {
    if ((regime.tag == RegimeTag::R2 || regime.tag == RegimeTag::R3) && !spec.periodic_surrogate)
        throw Error(Error::Kind::Domain,
                    "fast_vol Regime-2/3 cell problems need the periodic surrogate "
                    "(the OU fast drift is not periodic)");
    if (!(std::abs(spec.rho) <= 1.0))
        throw Error(Error::Kind::Domain, "fast_vol needs |rho| <= 1");
    CoefficientSet m;
    m.m = 1;
    m.kappa = 1;
    m.period = spec.period;
    m.name = "fast_vol";
    m.periodic_fast = spec.periodic_surrogate;
    m.fast_block_x_independent = true;
    m.all_x_independent = true;
    auto sig = spec.sigma;
    m.b = [](const VectorXd&, double) { return VectorXd::Zero(1).eval(); };
    m.c = [](const VectorXd&, double) { return VectorXd::Zero(1).eval(); };
    m.sigma = [sig](const VectorXd&, double y) { return MatrixXd::Constant(1, 1, sig(y)).eval(); };
    if (spec.periodic_surrogate) {
        const double ml = spec.m_level, amp = spec.surrogate_amp, w = 2.0 * M_PI / spec.period;
        m.f = [ml, amp, w](const VectorXd&, double y) { return amp * std::sin(w * (ml - y)); };
    } else {
        const double ml = spec.m_level;
        m.f = [ml](const VectorXd&, double y) { return ml - y; };
    }
    m.g = [](const VectorXd&, double) { return 0.0; };
    const double rho = spec.rho, rho2 = std::sqrt(std::max(0.0, 1.0 - spec.rho * spec.rho));
    m.tau1 = [rho](const VectorXd&, double) { return RowVectorXd::Constant(1, rho).eval(); };
    m.tau2 = [rho2](const VectorXd&, double) { return RowVectorXd::Constant(1, rho2).eval(); };
    auto hd = spec.h_drift;
    m.drift_eps = [hd](const VectorXd&, double y) {
        return VectorXd::Constant(1, hd(y)).eval();
    };
    return m;
}

double fast_vol_q_gauss_hermite(const FastVolSpec& spec, int n_nodes) {
    GaussHermite gh = GaussHermite::make(n_nodes);
    // mu(dy) = pi^{-1/2} e^{-(y-m)^2} dy
    double q = 0.0;
    for (int i = 0; i < gh.nodes.size(); ++i) {
        const double y = spec.m_level + gh.nodes[i];
        const double s = spec.sigma(y);
        q += gh.weights[i] * s * s;
    }
    return q / std::sqrt(M_PI);
}

} // namespace sfis
