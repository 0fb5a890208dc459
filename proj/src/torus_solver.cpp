#include "sfis/torus_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <mutex>
#include <sstream>

namespace sfis {

namespace {

void require_fast_1d(const CoefficientSet& model) {
    if (model.fast_dim != 1)
        throw Error(Error::Kind::Domain, "cell solvers require fast dimension 1");
}

// a(y) = tau1 tau1^T + tau2 tau2^T at frozen x (scalar in 1D fast)
double diffusion_a(const CoefficientSet& model, const VectorXd& x, double y) {
    RowVectorXd t1 = model.tau1(x, y), t2 = model.tau2(x, y);
    return (t1 * t1.transpose() + t2 * t2.transpose())(0, 0);
}

// Dense generator L = f d_y + (a/2) d_yy, 2nd-order central, periodic wrap.
MatrixXd build_generator(const CoefficientSet& model, const VectorXd& x, const TorusGrid& grid) {
    const int n = grid.n;
    const double h = grid.h;
    MatrixXd A = MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        const double y = grid.node(j);
        const double fj = model.f(x, y);
        const double aj = diffusion_a(model, x, y);
        const int jp = (j + 1) % n, jm = (j - 1 + n) % n;
        A(j, jp) += fj / (2 * h) + 0.5 * aj / (h * h);
        A(j, jm) += -fj / (2 * h) + 0.5 * aj / (h * h);
        A(j, j) += -aj / (h * h);
    }
    return A;
}

struct GeneratorSvd {
    MatrixXd A;
    Eigen::BDCSVD<MatrixXd> svd;
};

GeneratorSvd factor_generator(const CoefficientSet& model, const VectorXd& x,
                              const TorusGrid& grid) {
    GeneratorSvd gs;
    gs.A = build_generator(model, x, grid);
    gs.svd.compute(gs.A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return gs;
}

InvariantMeasure measure_from_svd(const GeneratorSvd& gs, const VectorXd& x,
                                  const TorusGrid& grid) {
    const int n = grid.n;
    const auto& sv = gs.svd.singularValues();
    const double smax = sv[0];
    if (n >= 2 && sv[n - 2] < 1e-10 * smax * n)
        throw Error(Error::Kind::DegenerateGenerator,
                    "adjoint null space is not one-dimensional numerically");
    // null(A^T) = left singular vector of A with the smallest singular value
    VectorXd mu = gs.svd.matrixU().col(n - 1);
    if (mu.sum() < 0) mu = -mu;
    if (mu.minCoeff() < -1e-8 * mu.cwiseAbs().maxCoeff())
        throw Error(Error::Kind::Solver, "stationary density has a significant negative part");
    mu = mu.cwiseMax(0.0);
    mu /= mu.sum() * grid.h;
    InvariantMeasure out;
    out.density = mu;
    out.x_anchor = x;
    out.stationarity_residual = (gs.A.transpose() * mu).cwiseAbs().maxCoeff();
    return out;
}

} // namespace

InvariantMeasure solve_invariant_measure(const CoefficientSet& model, const VectorXd& x,
                                         const TorusGrid& grid) {
    require_fast_1d(model);
    GeneratorSvd gs = factor_generator(model, x, grid);
    InvariantMeasure mu = measure_from_svd(gs, x, grid);
    if (mu.stationarity_residual > stationarity_tol(grid.n) * 1e3)
        throw Error(Error::Kind::Solver, "stationarity residual unexpectedly large");
    return mu;
}

namespace {

CellSolutionR1 cell_from_svd(const GeneratorSvd& gs, const CoefficientSet& model,
                             const VectorXd& x, const TorusGrid& grid,
                             const InvariantMeasure& measure, double centering_tol);

} // namespace

CellSolutionR1 solve_cell_r1(const CoefficientSet& model, const VectorXd& x, const TorusGrid& grid,
                             const InvariantMeasure* measure, double centering_tol) {
    require_fast_1d(model);
    GeneratorSvd gs = factor_generator(model, x, grid);
    InvariantMeasure own;
    if (!measure) {
        own = measure_from_svd(gs, x, grid);
        measure = &own;
    }
    return cell_from_svd(gs, model, x, grid, *measure, centering_tol);
}

namespace {

CellSolutionR1 cell_from_svd(const GeneratorSvd& gs, const CoefficientSet& model,
                             const VectorXd& x, const TorusGrid& grid,
                             const InvariantMeasure& measure, double centering_tol) {
    const int n = grid.n, m = model.m;
    const VectorXd& mu = measure.density;

    MatrixXd bvals(n, m);
    for (int j = 0; j < n; ++j) bvals.row(j) = model.b(x, grid.node(j)).transpose();

    CellSolutionR1 cell;
    cell.chi.resize(n, m);
    cell.dchi_dy.resize(n, m);
    cell.x_anchor = x;

    const auto& sv = gs.svd.singularValues();
    const double cutoff = 1e-10 * sv[0];

    for (int l = 0; l < m; ++l) {
        const VectorXd bl = bvals.col(l);
        const double centering = std::abs((bl.array() * mu.array()).sum() * grid.h);
        if (centering > centering_tol) {
            std::ostringstream os;
            os << "centering condition violated for component " << l << ": |int b mu| = "
               << centering << " > " << centering_tol << "; the cell system is inconsistent";
            throw Error(Error::Kind::Centering, os.str());
        }
        // min-norm least-squares solve of A chi = -b (null(A) = constants)
        VectorXd rhs = -bl;
        VectorXd z = gs.svd.matrixU().transpose() * rhs;
        for (int i = 0; i < n; ++i) z[i] = sv[i] > cutoff ? z[i] / sv[i] : 0.0;
        VectorXd chi = gs.svd.matrixV() * z;
        chi.array() -= (chi.array() * mu.array()).sum() * grid.h; // int chi mu = 0
        cell.chi.col(l) = chi;
        cell.dchi_dy.col(l) = deriv4(chi, grid.h);
        cell.residual = std::max(cell.residual, (gs.A * chi + bl).cwiseAbs().maxCoeff());
        cell.centering_norm = std::max(
            cell.centering_norm, std::abs((chi.array() * mu.array()).sum() * grid.h));
    }
    if (cell.residual > kCellResidualTol)
        throw Error(Error::Kind::Solver, "R1 cell residual " + std::to_string(cell.residual) +
                                             " exceeds tolerance; refine the grid");
    return cell;
}

} // namespace

std::pair<VectorXd, MatrixXd> effective_coefficients(const CoefficientSet& model, const VectorXd& x,
                                                     const TorusGrid& grid) {
    require_fast_1d(model);
    const int n = grid.n, m = model.m;
    GeneratorSvd gs = factor_generator(model, x, grid); // one factorization for both solves
    InvariantMeasure mu = measure_from_svd(gs, x, grid);
    CellSolutionR1 cell = cell_from_svd(gs, model, x, grid, mu, kCenteringTol);

    VectorXd r = VectorXd::Zero(m);
    MatrixXd q = MatrixXd::Zero(m, m);
    for (int j = 0; j < n; ++j) {
        const double y = grid.node(j);
        const double w = mu.density[j] * grid.h;
        if (w == 0.0) continue;
        const VectorXd dchi = cell.dchi_dy.row(j).transpose(); // m
        r += w * (model.c(x, y) + dchi * model.g(x, y));
        const MatrixXd a1 = model.sigma(x, y) + dchi * model.tau1(x, y); // m x kappa
        const MatrixXd a2 = dchi * model.tau2(x, y);
        q += w * (a1 * a1.transpose() + a2 * a2.transpose());
    }
    q = 0.5 * (q + q.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(q);
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw Error(Error::Kind::SpdFailure,
                    "effective diffusion q is not positive definite; refine the grid");
    return {r, q};
}

// ---------------------------------------------------------------------------
// Regime 2/3 cell problems

namespace {

// Frozen-(x,p) coefficient arrays of the 1D cell equation
//   (gamma/2) a xi'' + beta xi' - (a/2) (xi')^2 + V = h_bar,
// beta = gamma f + g - tau1 sigma^T p, V = <gamma b + c, p> - (1/2) p^T sigma sigma^T p.
struct CellCoeffs {
    VectorXd a, beta, V;
};

CellCoeffs r2_coeffs(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                     double gamma, const TorusGrid& grid) {
    const int n = grid.n;
    CellCoeffs cc;
    cc.a.resize(n);
    cc.beta.resize(n);
    cc.V.resize(n);
    for (int j = 0; j < n; ++j) {
        const double y = grid.node(j);
        cc.a[j] = diffusion_a(model, x, y);
        const MatrixXd s = model.sigma(x, y);
        const RowVectorXd t1 = model.tau1(x, y);
        cc.beta[j] = gamma * model.f(x, y) + model.g(x, y) - (t1 * (s.transpose() * p))(0);
        cc.V[j] = (gamma * model.b(x, y) + model.c(x, y)).dot(p) -
                  0.5 * p.dot(s * s.transpose() * p);
    }
    return cc;
}

// Pointwise residual with explicit gamma.
VectorXd cell_residual(const CellCoeffs& cc, double gamma, const TorusGrid& grid,
                       const VectorXd& xi, double h_bar) {
    VectorXd xp = deriv4(xi, grid.h);
    VectorXd xpp = second_deriv4(xi, grid.h);
    return (0.5 * gamma) * cc.a.array() * xpp.array() + cc.beta.array() * xp.array() -
           0.5 * cc.a.array() * xp.array().square() + cc.V.array() - h_bar;
}

// 4th-order periodic difference matrices, assembled once per Newton solve.
void fill_diff4(int n, double h, MatrixXd& D1, MatrixXd& D2) {
    D1.setZero(n, n);
    D2.setZero(n, n);
    for (int j = 0; j < n; ++j) {
        const int jm2 = (j - 2 + n) % n, jm1 = (j - 1 + n) % n;
        const int jp1 = (j + 1) % n, jp2 = (j + 2) % n;
        D1(j, jm2) += 1.0 / (12 * h);
        D1(j, jm1) -= 8.0 / (12 * h);
        D1(j, jp1) += 8.0 / (12 * h);
        D1(j, jp2) -= 1.0 / (12 * h);
        D2(j, jm2) += -1.0 / (12 * h * h);
        D2(j, jm1) += 16.0 / (12 * h * h);
        D2(j, j) += -30.0 / (12 * h * h);
        D2(j, jp1) += 16.0 / (12 * h * h);
        D2(j, jp2) += -1.0 / (12 * h * h);
    }
}

// Damped Newton on the discretized cell equation; unknowns (xi_1..xi_{n-1}, h_bar)
// with xi_0 = 0. Returns false if it fails to reach tolerance.
bool newton_r2(const CellCoeffs& cc, double gamma, const TorusGrid& grid, VectorXd& xi,
               double& h_bar) {
    const int n = grid.n;
    const double scale = std::max(1.0, cc.V.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * scale;
    MatrixXd D1, D2;
    fill_diff4(n, grid.h, D1, D2);
    xi[0] = 0.0;
    MatrixXd J(n, n);
    double rn = cell_residual(cc, gamma, grid, xi, h_bar).cwiseAbs().maxCoeff();
    for (int it = 0; it < 80; ++it) {
        VectorXd R = cell_residual(cc, gamma, grid, xi, h_bar);
        rn = R.cwiseAbs().maxCoeff();
        if (rn <= tol) return true;
        VectorXd xp = deriv4(xi, grid.h);
        // d residual / d xi = (gamma/2) a D2 + diag(beta - a xi') D1, drop column 0
        MatrixXd Jx = (0.5 * gamma) * cc.a.asDiagonal() * D2 +
                      (cc.beta - cc.a.cwiseProduct(xp)).asDiagonal() * D1;
        J.leftCols(n - 1) = Jx.rightCols(n - 1);
        J.col(n - 1).setConstant(-1.0);
        VectorXd step = J.partialPivLu().solve(-R);
        if (!step.allFinite()) return false;
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 25; ++ls) {
            VectorXd xi2 = xi;
            xi2.tail(n - 1) += t * step.head(n - 1);
            const double h2 = h_bar + t * step[n - 1];
            const double rn2 = cell_residual(cc, gamma, grid, xi2, h2).cwiseAbs().maxCoeff();
            if (rn2 < rn * (1.0 - 0.25 * t) || rn2 <= tol) {
                xi = xi2;
                h_bar = h2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // stalled; accept only if already near tolerance
            return rn <= 1e-10 * scale;
        }
    }
    return cell_residual(cc, gamma, grid, xi, h_bar).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

// Cole-Hopf stage: principal eigenpair of
//   M w = (gamma^2/2) a w'' + gamma beta w' - V w,   h_bar = -nu.
// Returns false when no nearly-real, sign-constant eigenvector exists at this
// resolution.
bool cole_hopf_seed(const CellCoeffs& cc, double gamma, const TorusGrid& grid, VectorXd& xi,
                    double& h_bar) {
    const int n = grid.n;
    const double h = grid.h;
    MatrixXd M = MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        const int jp = (j + 1) % n, jm = (j - 1 + n) % n;
        const double dcoef = 0.5 * gamma * gamma * cc.a[j] / (h * h);
        const double acoef = gamma * cc.beta[j] / (2 * h);
        M(j, jp) += dcoef + acoef;
        M(j, jm) += dcoef - acoef;
        M(j, j) += -2 * dcoef - cc.V[j];
    }
    Eigen::EigenSolver<MatrixXd> es(M);
    if (es.info() != Eigen::Success) return false;
    const auto& ev = es.eigenvalues();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return ev[i].real() > ev[j].real(); });
    for (int idx : order) {
        if (std::abs(ev[idx].imag()) > 1e-8 * std::max(1.0, std::abs(ev[idx].real()))) continue;
        Eigen::VectorXcd wc = es.eigenvectors().col(idx);
        const double wmax = wc.cwiseAbs().maxCoeff();
        if (wc.imag().cwiseAbs().maxCoeff() > 1e-6 * wmax) continue;
        VectorXd w = wc.real();
        if (w[0] < 0) w = -w;
        if (w.minCoeff() <= 0.0) continue; // principal eigenfunction must be positive
        h_bar = -ev[idx].real();
        xi.resize(n);
        const double lw0 = std::log(w[0]);
        for (int j = 0; j < n; ++j) xi[j] = -gamma * (std::log(w[j]) - lw0);
        return true;
    }
    return false;
}

} // namespace

Eigen::VectorXd cell_r2_residual(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                                 double gamma, const TorusGrid& grid, const VectorXd& xi,
                                 double h_bar) {
    CellCoeffs cc = r2_coeffs(model, x, p, gamma, grid);
    return cell_residual(cc, gamma, grid, xi, h_bar);
}

namespace {

CellSolutionR2 finish_r2(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                         double gamma, const TorusGrid& grid, VectorXd xi, double h_bar,
                         double h_bar_raw) {
    CellCoeffs cc = r2_coeffs(model, x, p, gamma, grid);
    CellSolutionR2 out;
    out.residual = cell_residual(cc, gamma, grid, xi, h_bar).cwiseAbs().maxCoeff();
    const double tol = kCellR2ResidualTol * std::max(1.0, cc.V.cwiseAbs().maxCoeff());
    if (out.residual > tol)
        throw Error(Error::Kind::Discretization,
                    "R2 cell residual " + std::to_string(out.residual) +
                        " exceeds tolerance; refine the grid");
    out.xi = std::move(xi);
    out.dxi_dy = deriv4(out.xi, grid.h);
    out.h_bar = h_bar;
    out.h_bar_raw = h_bar_raw;
    out.x_anchor = x;
    out.p_anchor = p;
    out.gamma = gamma;
    return out;
}

CellSolutionR2 solve_r2_impl(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                             double gamma, const TorusGrid& grid, const CellSolutionR2* seed) {
    require_fast_1d(model);
    if (!(gamma > 0)) throw Error(Error::Kind::Domain, "Regime-2 cell problem needs gamma > 0");
    if (p.size() != model.m) throw Error(Error::Kind::Domain, "p has wrong dimension");
    const int n = grid.n;
    CellCoeffs cc = r2_coeffs(model, x, p, gamma, grid);
    double h_bar_raw = std::numeric_limits<double>::quiet_NaN();

    // warm start: Newton from a previous nearby solution
    if (seed && seed->xi.size() == n) {
        VectorXd xi = seed->xi;
        double hb = seed->h_bar;
        if (newton_r2(cc, gamma, grid, xi, hb))
            return finish_r2(model, x, p, gamma, grid, std::move(xi), hb, h_bar_raw);
    }

    // primary route: Cole-Hopf eigendecomposition, then Newton refinement
    VectorXd xi;
    double hb = 0.0;
    if (cole_hopf_seed(cc, gamma, grid, xi, hb)) {
        h_bar_raw = hb;
        if (newton_r2(cc, gamma, grid, xi, hb))
            return finish_r2(model, x, p, gamma, grid, std::move(xi), hb, h_bar_raw);
    }

    // fallback: gamma-continuation from a larger gamma where the eigenfunction
    // is well resolved, halving down to the requested value
    double g_top = gamma;
    VectorXd xi_top;
    double hb_top = 0.0;
    bool seeded = false;
    for (double g = std::max(2.0 * gamma, 0.05); g <= 1e6; g *= 4.0) {
        CellCoeffs cct = r2_coeffs(model, x, p, g, grid);
        if (cole_hopf_seed(cct, g, grid, xi_top, hb_top) &&
            newton_r2(cct, g, grid, xi_top, hb_top)) {
            seeded = true;
            g_top = g;
            break;
        }
    }
    if (!seeded)
        throw Error(Error::Kind::Discretization,
                    "principal eigenfunction changes sign at every tried gamma; refine the grid");
    double g_cur = g_top;
    while (g_cur > gamma) {
        g_cur = std::max(gamma, 0.5 * g_cur);
        CellCoeffs ccc = r2_coeffs(model, x, p, g_cur, grid);
        if (!newton_r2(ccc, g_cur, grid, xi_top, hb_top))
            throw Error(Error::Kind::Discretization,
                        "gamma-continuation stalled at gamma = " + std::to_string(g_cur) +
                            "; refine the grid");
    }
    return finish_r2(model, x, p, gamma, grid, std::move(xi_top), hb_top, h_bar_raw);
}

} // namespace

CellSolutionR2 solve_cell_r2(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                             double gamma, const TorusGrid& grid) {
    return solve_r2_impl(model, x, p, gamma, grid, nullptr);
}

CellSolutionR3 solve_cell_r3(const CoefficientSet& model, const VectorXd& x, const VectorXd& p,
                             const TorusGrid& grid) {
    require_fast_1d(model);
    if (p.size() != model.m) throw Error(Error::Kind::Domain, "p has wrong dimension");
    const int n = grid.n;
    CellCoeffs cc = r2_coeffs(model, x, p, 0.0, grid); // gamma = 0: beta = g - tau1 sigma^T p
    if (cc.a.minCoeff() <= 0)
        throw Error(Error::Kind::Domain, "Regime-3 cell problem needs tau1 tau1^T + tau2 tau2^T > 0");

    // -(a/2) u^2 + beta u + V - H = 0, u = xi'; real roots need H <= M(y)
    VectorXd M = cc.beta.array().square() / (2.0 * cc.a.array()) + cc.V.array();
    const double h_crit = M.minCoeff();
    auto branch_integral = [&](double H, int s) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double D = std::max(cc.beta[j] * cc.beta[j] + 2 * cc.a[j] * (cc.V[j] - H), 0.0);
            acc += (cc.beta[j] + s * std::sqrt(D)) / cc.a[j];
        }
        return acc * grid.h;
    };

    const double btol = 1e-12 * std::max(1.0, std::abs(h_crit));
    int s;
    if (branch_integral(h_crit, +1) <= btol) s = +1;
    else if (branch_integral(h_crit, -1) >= -btol) s = -1;
    else
        throw Error(Error::Kind::BranchSwitch,
                    "no single root branch integrates to zero: the cell solution switches "
                    "branches inside the cell (xi0 only Lipschitz)");

    // bracket below h_crit; branch integral is monotone in H
    double hi = h_crit, lo = h_crit - std::max(1.0, std::abs(h_crit));
    int widen = 0;
    while (s * branch_integral(lo, s) < 0) {
        lo = h_crit - 2.0 * (h_crit - lo);
        if (++widen > 60)
            throw Error(Error::Kind::InfeasibleHamiltonian,
                        "failed to bracket the effective Hamiltonian");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (s * branch_integral(mid, s) >= 0) lo = mid;
        else hi = mid;
    }
    const double h_bar0 = 0.5 * (lo + hi);

    CellSolutionR3 out;
    out.dxi0_dy.resize(n);
    for (int j = 0; j < n; ++j) {
        const double D =
            std::max(cc.beta[j] * cc.beta[j] + 2 * cc.a[j] * (cc.V[j] - h_bar0), 0.0);
        out.dxi0_dy[j] = (cc.beta[j] + s * std::sqrt(D)) / cc.a[j];
    }
    out.xi0 = cumint4(out.dxi0_dy, grid.h);
    out.h_bar0 = h_bar0;
    out.x_anchor = x;
    out.p_anchor = p;
    out.branch = s;
    // algebraic residual of the first-order equation at the nodes
    VectorXd res = (-0.5) * cc.a.array() * out.dxi0_dy.array().square() +
                   cc.beta.array() * out.dxi0_dy.array() + cc.V.array() - h_bar0;
    out.residual = std::max(res.cwiseAbs().maxCoeff(),
                            std::abs(trapezoid(out.dxi0_dy, grid.h)));
    return out;
}

// ---------------------------------------------------------------------------
// Providers

std::vector<long long> quantize_anchor(const VectorXd& x) {
    std::vector<long long> key(x.size());
    for (int i = 0; i < x.size(); ++i) {
        if (!(std::abs(x[i]) < 1e6))
            throw Error(Error::Kind::Domain,
                        "anchor coordinate out of quantization range (|x| >= 1e6)");
        key[i] = llround(x[i] * 1e12);
    }
    return key;
}

namespace {

// shared-anchor key when the solution provably does not depend on x
std::vector<long long> anchor_or_shared(const VectorXd& x, bool x_independent) {
    if (x_independent) return std::vector<long long>(x.size(), 0);
    return quantize_anchor(x);
}

} // namespace

std::shared_ptr<const InvariantMeasure> MeasureProvider::at(const VectorXd& x) const {
    auto key = anchor_or_shared(x, model_->fast_block_x_independent);
    {
        std::shared_lock lk(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    std::unique_lock lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto sol = std::make_shared<const InvariantMeasure>(solve_invariant_measure(*model_, x, grid_));
    cache_[key] = sol;
    return sol;
}

std::shared_ptr<const CellSolutionR1> CellProviderR1::at(const VectorXd& x) const {
    auto key = anchor_or_shared(x, model_->fast_block_x_independent);
    {
        std::shared_lock lk(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    std::unique_lock lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto sol = std::make_shared<const CellSolutionR1>(solve_cell_r1(*model_, x, grid_));
    cache_[key] = sol;
    return sol;
}

std::shared_ptr<const CellSolutionR2> CellProviderR2::at(const VectorXd& x,
                                                         const VectorXd& p) const {
    auto key = anchor_or_shared(x, model_->all_x_independent);
    auto kp = quantize_anchor(p);
    key.insert(key.end(), kp.begin(), kp.end());
    {
        std::shared_lock lk(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    std::unique_lock lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const CellSolutionR2* seed = last_ ? last_.get() : nullptr;
    auto sol = std::make_shared<const CellSolutionR2>(
        solve_r2_impl(*model_, x, p, gamma_, grid_, seed));
    cache_[key] = sol;
    last_ = sol;
    return sol;
}

std::shared_ptr<const CellSolutionR3> CellProviderR3::at(const VectorXd& x,
                                                         const VectorXd& p) const {
    auto key = anchor_or_shared(x, model_->all_x_independent);
    auto kp = quantize_anchor(p);
    key.insert(key.end(), kp.begin(), kp.end());
    {
        std::shared_lock lk(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    std::unique_lock lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto sol = std::make_shared<const CellSolutionR3>(solve_cell_r3(*model_, x, p, grid_));
    cache_[key] = sol;
    return sol;
}

EffectiveDynamics make_effective_dynamics(std::shared_ptr<const CoefficientSet> model,
                                          TorusGrid grid) {
    if (model->all_x_independent) {
        auto rq = effective_coefficients(*model, VectorXd::Zero(model->m), grid);
        return constant_effective_dynamics(rq.first, rq.second);
    }
    if (model->fast_block_x_independent && model->slow_coeffs_y_independent) {
        // corrector moments are shared; per query only pointwise coefficient
        // evaluations at a reference fast point remain:
        //   r(x) = c(x) + g(x) m1
        //   q(x) = s s^T + (s t1^T) m1^T + m1 (s t1^T)^T + (t1 t1^T + t2 t2^T) m2
        struct Moments {
            VectorXd m1;  // int chi_y dmu
            MatrixXd m2;  // int chi_y chi_y^T dmu
        };
        auto mom = std::make_shared<Moments>();
        const VectorXd x0 = VectorXd::Zero(model->m);
        InvariantMeasure mu = solve_invariant_measure(*model, x0, grid);
        CellSolutionR1 cell = solve_cell_r1(*model, x0, grid, &mu);
        mom->m1 = VectorXd::Zero(model->m);
        mom->m2 = MatrixXd::Zero(model->m, model->m);
        for (int j = 0; j < grid.n; ++j) {
            const double w = mu.density[j] * grid.h;
            const VectorXd dchi = cell.dchi_dy.row(j).transpose();
            mom->m1 += w * dchi;
            mom->m2 += w * dchi * dchi.transpose();
        }
        EffectiveDynamics eff;
        eff.r = [model, mom](const VectorXd& x) {
            return (model->c(x, 0.0) + mom->m1 * model->g(x, 0.0)).eval();
        };
        eff.q = [model, mom](const VectorXd& x) {
            const MatrixXd s = model->sigma(x, 0.0);
            const RowVectorXd t1 = model->tau1(x, 0.0), t2 = model->tau2(x, 0.0);
            const VectorXd st1 = s * t1.transpose();
            const double a = (t1 * t1.transpose() + t2 * t2.transpose())(0, 0);
            MatrixXd q = s * s.transpose() + st1 * mom->m1.transpose() +
                         mom->m1 * st1.transpose() + a * mom->m2;
            q = 0.5 * (q + q.transpose());
            if (Eigen::LLT<MatrixXd>(q).info() != Eigen::Success)
                throw Error(Error::Kind::SpdFailure,
                            "effective diffusion q is not positive definite; refine the grid");
            return q;
        };
        return eff;
    }
    if (model->fast_block_x_independent) {
        // measure and corrector are shared across x: factor once, then each
        // query is a grid quadrature of the x-dependent integrands
        struct Shared {
            InvariantMeasure mu;
            CellSolutionR1 cell;
        };
        auto core = std::make_shared<Shared>();
        const VectorXd x0 = VectorXd::Zero(model->m);
        core->mu = solve_invariant_measure(*model, x0, grid);
        core->cell = solve_cell_r1(*model, x0, grid, &core->mu);
        auto quadrature = [model, grid, core](const VectorXd& x) {
            const int m = model->m;
            VectorXd r = VectorXd::Zero(m);
            MatrixXd q = MatrixXd::Zero(m, m);
            for (int j = 0; j < grid.n; ++j) {
                const double y = grid.node(j);
                const double w = core->mu.density[j] * grid.h;
                if (w == 0.0) continue;
                const VectorXd dchi = core->cell.dchi_dy.row(j).transpose();
                r += w * (model->c(x, y) + dchi * model->g(x, y));
                const MatrixXd a1 = model->sigma(x, y) + dchi * model->tau1(x, y);
                const MatrixXd a2 = dchi * model->tau2(x, y);
                q += w * (a1 * a1.transpose() + a2 * a2.transpose());
            }
            q = 0.5 * (q + q.transpose());
            if (Eigen::LLT<MatrixXd>(q).info() != Eigen::Success)
                throw Error(Error::Kind::SpdFailure,
                            "effective diffusion q is not positive definite; refine the grid");
            return std::make_pair(r, q);
        };
        EffectiveDynamics eff;
        eff.r = [quadrature](const VectorXd& x) { return quadrature(x).first; };
        eff.q = [quadrature](const VectorXd& x) { return quadrature(x).second; };
        return eff;
    }

    struct Cache {
        std::shared_mutex mu;
        std::map<std::vector<long long>, std::pair<VectorXd, MatrixXd>> entries;
    };
    auto cache = std::make_shared<Cache>();
    auto lookup = [model, grid, cache](const VectorXd& x) {
        auto key = quantize_anchor(x);
        {
            std::shared_lock lk(cache->mu);
            auto it = cache->entries.find(key);
            if (it != cache->entries.end()) return it->second;
        }
        std::unique_lock lk(cache->mu);
        auto it = cache->entries.find(key);
        if (it != cache->entries.end()) return it->second;
        auto rq = effective_coefficients(*model, x, grid);
        cache->entries[key] = rq;
        return rq;
    };
    EffectiveDynamics eff;
    eff.r = [lookup](const VectorXd& x) { return lookup(x).first; };
    eff.q = [lookup](const VectorXd& x) { return lookup(x).second; };
    return eff;
}

EffectiveDynamics constant_effective_dynamics(const VectorXd& r, const MatrixXd& q) {
    EffectiveDynamics eff;
    eff.r = [r](const VectorXd&) { return r; };
    eff.q = [q](const VectorXd&) { return q; };
    return eff;
}

} // namespace sfis
