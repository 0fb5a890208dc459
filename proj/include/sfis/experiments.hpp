#pragma once

#include <functional>
#include <memory>

#include "sfis/model.hpp"

namespace sfis {

/// First-order Langevin dynamics in a rough periodic potential Q with
/// confining potential V: b = f = -Q', c = g = -V', sigma = tau1 = sqrt(2D),
/// tau2 = 0, kappa = 1.
struct RoughLangevinSpec {
    std::function<double(double)> Q, Qprime;
    std::function<double(double)> V, Vprime; // slow dimension 1
    double D = 1.0;
    double period = 1.0;

    // Q(y) = q_amp cos(2 pi y / period), V(x) = v_curv x^2 / 2.
    static RoughLangevinSpec cosine(double D, double q_amp, double v_curv, double period = 1.0);
};

CoefficientSet build_rough_langevin(const RoughLangevinSpec& spec);

/// Closed forms for the rough-Langevin effective dynamics:
///   L = int e^{-Q/D}, L_hat = int e^{Q/D} (Romberg quadrature),
///   r(x) = -period^2 V'(x) / (L L_hat), q = 2 D period^2 / (L L_hat).
struct LangevinClosedForms {
    double L = 0.0, L_hat = 0.0, q = 0.0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> r;
};
LangevinClosedForms langevin_closed_forms(const RoughLangevinSpec& spec);

/// Fast mean-reverting volatility model: b = 0, sigma = sigma(y), f = m - y,
/// g = 0, tau1 = rho, tau2 = sqrt(1 - rho^2). The OU fast process lives on R
/// (not periodic); the eps-scaled drift c^eps = eps h(y) is attached as a
/// drift modifier. With periodic_surrogate set, f is replaced by the periodic
/// mean-reverting drift surrogate_amp * sin(2 pi (m - y) / period), which the
/// Regime-2/3 cell problems require.
struct FastVolSpec {
    std::function<double(double)> h_drift; // y -> R
    std::function<double(double)> sigma;   // y -> R, > 0
    double m_level = 0.0;
    double rho = 0.7; // correlation in [-1, 1]
    bool periodic_surrogate = false;
    double surrogate_amp = 1.0;
    double period = 1.0;

    // sigma(y) = sigma0 + sigma_amp sin(2 pi y / period), h(y) = h_amp y.
    static FastVolSpec sine(double sigma0, double sigma_amp, double m_level, double rho,
                            double h_amp = 0.0, double period = 1.0);
};

/// Fails fast (Error::Domain) when a Regime-2/3 build is requested without the
/// periodic surrogate.
CoefficientSet build_fast_vol(const FastVolSpec& spec, const ScaleRegime& regime);

/// Regime-1 effective diffusion q = int sigma^2(y) mu(dy) with the exact OU
/// invariant measure mu(dy) = pi^{-1/2} e^{-(y-m)^2} dy, by Gauss-Hermite.
double fast_vol_q_gauss_hermite(const FastVolSpec& spec, int n_nodes = 40);

} // namespace sfis
