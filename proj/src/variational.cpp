#include "sfis/variational.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sfis {

void DiscretePath::check() const {
    if (times.size() < 2 || size_t(times.size()) != nodes.size())
        throw Error(Error::Kind::Domain, "path needs >= 2 nodes with matching times");
    for (int i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw Error(Error::Kind::Domain, "path times must be strictly increasing");
}

namespace {

Eigen::LLT<MatrixXd> spd_factor(const MatrixXd& q) {
    Eigen::LLT<MatrixXd> llt(q);
    if (llt.info() != Eigen::Success)
        throw Error(Error::Kind::SpdFailure, "effective diffusion q is not SPD");
    return llt;
}

} // namespace

HamiltonianHandle hamiltonian_r1(const EffectiveDynamics& eff) {
    HamiltonianHandle h;
    h.tag = RegimeTag::R1;
    h.value = [eff](const VectorXd& x, const VectorXd& p) {
        return eff.r(x).dot(p) - 0.5 * p.dot(eff.q(x) * p);
    };
    return h;
}

HamiltonianHandle hamiltonian_r2(std::shared_ptr<const CellProviderR2> provider) {
    HamiltonianHandle h;
    h.tag = RegimeTag::R2;
    h.value = [provider](const VectorXd& x, const VectorXd& p) {
        return provider->at(x, p)->h_bar;
    };
    return h;
}

HamiltonianHandle hamiltonian_r3(std::shared_ptr<const CellProviderR3> provider) {
    HamiltonianHandle h;
    h.tag = RegimeTag::R3;
    h.value = [provider](const VectorXd& x, const VectorXd& p) {
        return provider->at(x, p)->h_bar0;
    };
    return h;
}

double action_r1(const DiscretePath& path, const EffectiveDynamics& eff) {
    path.check();
    double S = 0.0;
    for (int k = 0; k + 1 < path.times.size(); ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const VectorXd mid = 0.5 * (path.nodes[k] + path.nodes[k + 1]);
        const VectorXd v = (path.nodes[k + 1] - path.nodes[k]) / dt;
        const VectorXd dev = v - eff.r(mid);
        auto llt = spd_factor(eff.q(mid));
        S += 0.5 * dev.dot(llt.solve(dev)) * dt;
    }
    return S;
}

double local_rate_r1(const VectorXd& x, const VectorXd& beta, const EffectiveDynamics& eff) {
    const VectorXd dev = beta - eff.r(x);
    auto llt = spd_factor(eff.q(x));
    return 0.5 * dev.dot(llt.solve(dev));
}

double local_rate_bruteforce_r1(const VectorXd& x, const VectorXd& beta,
                                const CoefficientSet& model, const TorusGrid& grid) {
    const int n = grid.n, m = model.m, kappa = model.kappa;
    InvariantMeasure mu = solve_invariant_measure(model, x, grid);
    CellSolutionR1 cell = solve_cell_r1(model, x, grid, &mu);

    // active nodes: positive weight
    std::vector<int> act;
    for (int j = 0; j < n; ++j)
        if (mu.density[j] * grid.h > 1e-14) act.push_back(j);
    const int na = int(act.size());
    const int nv = 2 * kappa * na;

    // constraint beta = sum_j w_j [ (c + chi_y g) + A1_j v1_j + A2_j v2_j ]
    VectorXd beta_t = beta;
    MatrixXd C(m, nv);
    VectorXd W(nv);
    for (int i = 0; i < na; ++i) {
        const int j = act[i];
        const double y = grid.node(j);
        const double w = mu.density[j] * grid.h;
        const VectorXd dchi = cell.dchi_dy.row(j).transpose();
        beta_t -= w * (model.c(x, y) + dchi * model.g(x, y));
        const MatrixXd A1 = model.sigma(x, y) + dchi * model.tau1(x, y);
        const MatrixXd A2 = dchi * model.tau2(x, y);
        C.block(0, 2 * kappa * i, m, kappa) = w * A1;
        C.block(0, 2 * kappa * i + kappa, m, kappa) = w * A2;
        for (int k = 0; k < 2 * kappa; ++k) W[2 * kappa * i + k] = w;
    }

    // KKT: [diag(W)  -C^T; C  0] [v; eta] = [0; beta_t]
    MatrixXd K = MatrixXd::Zero(nv + m, nv + m);
    K.topLeftCorner(nv, nv) = W.asDiagonal();
    K.topRightCorner(nv, m) = -C.transpose();
    K.bottomLeftCorner(m, nv) = C;
    VectorXd rhs = VectorXd::Zero(nv + m);
    rhs.tail(m) = beta_t;
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible())
        throw Error(Error::Kind::Solver,
                    "constraint is rank-deficient: velocity beta is infeasible");
    VectorXd sol = lu.solve(rhs);
    const VectorXd v = sol.head(nv);
    return 0.5 * v.dot(W.asDiagonal() * v);
}

GridControl optimal_control_r1_ldp(const VectorXd& x, const VectorXd& beta,
                                   const CellSolutionR1& cell, const CoefficientSet& model,
                                   const EffectiveDynamics& eff) {
    const int n = cell.chi.rows(), kappa = model.kappa;
    const VectorXd dev = beta - eff.r(x);
    auto llt = spd_factor(eff.q(x));
    const VectorXd eta = llt.solve(dev); // q^{-1} (beta - r)
    GridControl gc;
    gc.v1.resize(n, kappa);
    gc.v2.resize(n, kappa);
    const double h = model.period / n;
    for (int j = 0; j < n; ++j) {
        const double y = j * h;
        const VectorXd dchi = cell.dchi_dy.row(j).transpose();
        const MatrixXd A1 = model.sigma(x, y) + dchi * model.tau1(x, y);
        const MatrixXd A2 = dchi * model.tau2(x, y);
        gc.v1.row(j) = (A1.transpose() * eta).transpose();
        gc.v2.row(j) = (A2.transpose() * eta).transpose();
    }
    return gc;
}

// ---------------------------------------------------------------------------
// Minimization helpers (derivative-free, deterministic)

namespace {

// golden-section search on [lo, hi]
template <class F>
double golden(F&& f, double lo, double hi, double tol, double* fbest = nullptr) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    const double xm = 0.5 * (a + b);
    if (fbest) *fbest = f(xm);
    return xm;
}

// cyclic coordinate golden-section descent over a box
template <class F>
VectorXd coordinate_search(F&& f, VectorXd z, const VectorXd& lo, const VectorXd& hi, double tol,
                           int max_sweeps = 60) {
    const int m = int(z.size());
    double fz = f(z);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        const double f0 = fz;
        for (int d = 0; d < m; ++d) {
            VectorXd zz = z;
            auto fd = [&](double t) {
                zz[d] = t;
                return f(zz);
            };
            z[d] = golden(fd, lo[d], hi[d], tol * std::max(1.0, hi[d] - lo[d]));
        }
        fz = f(z);
        if (f0 - fz < 1e-14 * std::max(1.0, std::abs(f0))) break;
    }
    return z;
}

bool near_boundary(const VectorXd& z, const VectorXd& lo, const VectorXd& hi) {
    for (int d = 0; d < z.size(); ++d) {
        const double w = hi[d] - lo[d];
        if (z[d] - lo[d] < 1e-6 * w || hi[d] - z[d] < 1e-6 * w) return true;
    }
    return false;
}

void check_constant_eff(const EffectiveDynamics& eff, const VectorXd& lo, const VectorXd& hi) {
    const int m = int(lo.size());
    VectorXd mid = 0.5 * (lo + hi);
    const VectorXd r0 = eff.r(mid);
    const MatrixXd q0 = eff.q(mid);
    for (int s = 0; s < 5; ++s) {
        VectorXd x = lo + (hi - lo) * (s / 4.0);
        if ((eff.r(x) - r0).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, r0.cwiseAbs().maxCoeff()) ||
            (eff.q(x) - q0).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, q0.cwiseAbs().maxCoeff()))
            throw Error(Error::Kind::Domain,
                        "hopf_lax requires constant effective coefficients r, q");
        (void)m;
    }
}

struct HopfLaxCore {
    VectorXd r0;
    MatrixXd qinv;
    std::function<double(const VectorXd&)> h;
    double T;

    double objective(double t, const VectorXd& x, const VectorXd& z) const {
        const double tau = T - t;
        const VectorXd d = z - x - r0 * tau;
        return d.dot(qinv * d) / (2.0 * tau) + h(z);
    }

    // minimize over z in box, with coarse scan start (deterministic)
    VectorXd minimize(double t, const VectorXd& x, const VectorXd& lo, const VectorXd& hi,
                      double tol, bool coarse_scan) const {
        VectorXd z0 = x.cwiseMax(lo).cwiseMin(hi);
        auto f = [&](const VectorXd& z) { return objective(t, x, z); };
        if (coarse_scan && x.size() <= 2) {
            const int ns = x.size() == 1 ? 65 : 17;
            double best = f(z0);
            VectorXd zb = z0;
            VectorXd z(x.size());
            if (x.size() == 1) {
                for (int i = 0; i < ns; ++i) {
                    z[0] = lo[0] + (hi[0] - lo[0]) * i / (ns - 1.0);
                    const double v = f(z);
                    if (v < best) {
                        best = v;
                        zb = z;
                    }
                }
            } else {
                for (int i = 0; i < ns; ++i)
                    for (int j = 0; j < ns; ++j) {
                        z[0] = lo[0] + (hi[0] - lo[0]) * i / (ns - 1.0);
                        z[1] = lo[1] + (hi[1] - lo[1]) * j / (ns - 1.0);
                        const double v = f(z);
                        if (v < best) {
                            best = v;
                            zb = z;
                        }
                    }
            }
            z0 = zb;
        }
        return coordinate_search(f, z0, lo, hi, tol);
    }
};

} // namespace

double quasipotential_G(double t, const VectorXd& x,
                        const std::function<double(const VectorXd&)>& h, double T,
                        const EffectiveDynamics& eff, QuasipotentialMethod method,
                        const QuasipotentialOptions& opts) {
    const int m = int(x.size());
    VectorXd lo = opts.box_lo.size() == m ? opts.box_lo : VectorXd::Constant(m, -4.0);
    VectorXd hi = opts.box_hi.size() == m ? opts.box_hi : VectorXd::Constant(m, 4.0);
    const double tau = T - t;
    if (tau <= 0) return h(x);

    if (method == QuasipotentialMethod::HopfLax) {
        check_constant_eff(eff, lo, hi);
        HopfLaxCore core;
        core.r0 = eff.r(x);
        core.qinv = spd_factor(eff.q(x)).solve(MatrixXd::Identity(m, m));
        core.h = h;
        core.T = T;
        for (int w = 0; w <= opts.max_widenings; ++w) {
            VectorXd z = core.minimize(t, x, lo, hi, opts.tol, true);
            if (!near_boundary(z, lo, hi)) return core.objective(t, x, z);
            const VectorXd c = 0.5 * (lo + hi), half = (hi - lo);
            lo = c - half;
            hi = c + half;
        }
        throw Error(Error::Kind::Solver,
                    "hopf_lax minimizer stayed on the box boundary after widenings");
    }

    // PathOpt: coordinate descent over interior nodes + endpoint, multistart.
    // Hierarchical refinement (2, 4, ..., K segments) keeps the Gauss-Seidel
    // sweeps fast; moving one node only touches its two adjacent segments, so
    // golden-section line searches evaluate segment costs incrementally.
    const int K = std::max(2, opts.interior_nodes);
    auto segment_cost = [&](double dt, const VectorXd& a, const VectorXd& b) {
        const VectorXd mid = 0.5 * (a + b);
        const VectorXd dev = (b - a) / dt - eff.r(mid);
        return 0.5 * dev.dot(spd_factor(eff.q(mid)).solve(dev)) * dt;
    };
    double best_val = std::numeric_limits<double>::infinity();
    for (int s = 0; s < opts.multistarts; ++s) {
        // deterministic endpoints spread over the box
        VectorXd z(m);
        for (int d = 0; d < m; ++d) {
            const double u = std::fmod(0.5 + (s + 1) * 0.6180339887498949 + 0.37 * d, 1.0);
            z[d] = lo[d] + (hi[d] - lo[d]) * u;
        }
        // level schedule: 2 -> 4 -> ... -> K segments
        std::vector<int> levels{K};
        while (levels.back() > 2) levels.push_back(std::max(2, levels.back() / 2));
        std::reverse(levels.begin(), levels.end());

        std::vector<VectorXd> nodes(levels[0] + 1);
        for (int i = 0; i <= levels[0]; ++i) nodes[i] = x + (z - x) * (double(i) / levels[0]);
        double fcur = std::numeric_limits<double>::infinity();
        for (size_t lev = 0; lev < levels.size(); ++lev) {
            const int n = levels[lev];
            if (int(nodes.size()) != n + 1) {
                // prolong by resampling the piecewise-linear path
                std::vector<VectorXd> fine(n + 1);
                const int nc = int(nodes.size()) - 1;
                for (int i = 0; i <= n; ++i) {
                    const double pos = double(i) * nc / n;
                    const int j = std::min(int(pos), nc - 1);
                    const double w = pos - j;
                    fine[i] = (1 - w) * nodes[j] + w * nodes[j + 1];
                }
                nodes = std::move(fine);
            }
            const double dt = tau / n;
            double fprev = std::numeric_limits<double>::infinity();
            for (int sweep = 0; sweep < 200; ++sweep) {
                for (int i = 1; i <= n; ++i)
                    for (int d = 0; d < m; ++d) {
                        auto local = [&](double v) {
                            const double keep = nodes[i][d];
                            nodes[i][d] = v;
                            double val = segment_cost(dt, nodes[i - 1], nodes[i]);
                            if (i < n) val += segment_cost(dt, nodes[i], nodes[i + 1]);
                            else val += h(nodes[i]);
                            nodes[i][d] = keep;
                            return val;
                        };
                        nodes[i][d] = golden(local, lo[d], hi[d], opts.tol * (hi[d] - lo[d]));
                    }
                fcur = h(nodes[n]);
                for (int i = 0; i < n; ++i) fcur += segment_cost(dt, nodes[i], nodes[i + 1]);
                if (fprev - fcur < 1e-13 * std::max(1.0, std::abs(fcur))) break;
                fprev = fcur;
            }
        }
        if (fcur < best_val) best_val = fcur; // ties keep lowest start index
    }
    return best_val;
}

// ---------------------------------------------------------------------------
// Subsolution constructors

Subsolution zero_subsolution(std::function<double(const VectorXd&)> h) {
    Subsolution s;
    s.u = [](double, const VectorXd&) { return 0.0; };
    s.grad_x = [](double, const VectorXd& x) { return VectorXd::Zero(x.size()).eval(); };
    s.dt = [](double, const VectorXd&) { return 0.0; };
    s.terminal_cost = std::move(h);
    s.label = "zero";
    return s;
}

namespace {

// inf over the box: product-grid scan refined by coordinate golden-section
// around the best grid point, so the returned value is not above the true
// infimum by a grid-curvature gap (a finer verification grid would expose
// that). m <= 2 only (presets are 1D slow).
double box_inf(const std::function<double(const VectorXd&)>& f, const VectorXd& lo,
               const VectorXd& hi, int samples) {
    const int m = int(lo.size());
    if (m > 2)
        throw Error(Error::Kind::Domain,
                    "box sampling of the Hamiltonian supports slow dimension <= 2");
    double best = std::numeric_limits<double>::infinity();
    VectorXd x(m), xbest(m);
    std::vector<double> gap(m);
    if (m == 1) {
        gap[0] = (hi[0] - lo[0]) / (samples - 1.0);
        for (int i = 0; i < samples; ++i) {
            x[0] = lo[0] + gap[0] * i;
            const double v = f(x);
            if (v < best) {
                best = v;
                xbest = x;
            }
        }
    } else {
        const int ns = std::max(8, int(std::sqrt(double(samples))));
        gap[0] = (hi[0] - lo[0]) / (ns - 1.0);
        gap[1] = (hi[1] - lo[1]) / (ns - 1.0);
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j < ns; ++j) {
                x[0] = lo[0] + gap[0] * i;
                x[1] = lo[1] + gap[1] * j;
                const double v = f(x);
                if (v < best) {
                    best = v;
                    xbest = x;
                }
            }
    }
    for (int sweep = 0; sweep < 3; ++sweep)
        for (int d = 0; d < m; ++d) {
            VectorXd z = xbest;
            auto fd = [&](double t) {
                z[d] = t;
                return f(z);
            };
            const double a = std::max(lo[d], xbest[d] - gap[d]);
            const double b = std::min(hi[d], xbest[d] + gap[d]);
            xbest[d] = golden(fd, a, b, 1e-11 * std::max(1.0, hi[d] - lo[d]));
        }
    return std::min(best, f(xbest));
}

} // namespace

Subsolution affine_subsolution(const VectorXd& a, std::function<double(const VectorXd&)> h,
                               double T, const HamiltonianHandle& ham, const VectorXd& box_lo,
                               const VectorXd& box_hi, int box_samples, double b_T) {
    const double hmin =
        box_inf([&](const VectorXd& x) { return ham.value(x, a); }, box_lo, box_hi, box_samples);
    if (std::isnan(b_T))
        b_T = box_inf([&](const VectorXd& x) { return h(x) - a.dot(x); }, box_lo, box_hi,
                      box_samples);
    Subsolution s;
    s.u = [a, b_T, hmin, T](double t, const VectorXd& x) {
        return a.dot(x) + b_T + (T - t) * hmin;
    };
    s.grad_x = [a](double, const VectorXd&) { return a; };
    s.dt = [hmin](double, const VectorXd&) { return -hmin; };
    s.terminal_cost = std::move(h);
    s.label = "affine";
    return s;
}

Subsolution hopf_lax_subsolution(const EffectiveDynamics& eff,
                                 std::function<double(const VectorXd&)> h, double T,
                                 const QuasipotentialOptions& opts) {
    const int m = int(opts.box_lo.size());
    if (m == 0) throw Error(Error::Kind::Domain, "hopf_lax subsolution needs a minimization box");
    check_constant_eff(eff, opts.box_lo, opts.box_hi);
    auto core = std::make_shared<HopfLaxCore>();
    core->r0 = eff.r(opts.box_lo);
    core->qinv = spd_factor(eff.q(opts.box_lo)).solve(MatrixXd::Identity(m, m));
    core->h = h;
    core->T = T;
    const VectorXd lo = opts.box_lo, hi = opts.box_hi;
    const double tol = opts.tol;

    auto minimizer = [core, lo, hi, tol](double t, const VectorXd& x) {
        return core->minimize(t, x, lo, hi, tol, false);
    };
    Subsolution s;
    s.u = [core, minimizer, h](double t, const VectorXd& x) {
        if (core->T - t <= 1e-12) return h(x);
        return core->objective(t, x, minimizer(t, x));
    };
    // envelope theorem at the interior minimizer z*
    s.grad_x = [core, minimizer](double t, const VectorXd& x) {
        const double tau = core->T - t;
        if (tau <= 1e-12) {
            // fall back to one-sided small tau
            const double t2 = core->T - 1e-8;
            const VectorXd z = minimizer(t2, x);
            return (-(core->qinv * (z - x - core->r0 * 1e-8)) / 1e-8).eval();
        }
        const VectorXd z = minimizer(t, x);
        return (-(core->qinv * (z - x - core->r0 * tau)) / tau).eval();
    };
    s.dt = [core, minimizer](double t, const VectorXd& x) {
        const double tau = std::max(core->T - t, 1e-10);
        const VectorXd z = minimizer(core->T - tau, x);
        const VectorXd d = z - x - core->r0 * tau;
        return core->r0.dot(core->qinv * d) / tau + d.dot(core->qinv * d) / (2.0 * tau * tau);
    };
    s.terminal_cost = std::move(h);
    s.label = "hopf_lax";
    return s;
}

Subsolution table_subsolution(const std::string& csv_path,
                              std::function<double(const VectorXd&)> h) {
    std::ifstream in(csv_path);
    if (!in) throw Error(Error::Kind::Domain, "cannot open subsolution table " + csv_path);
    std::string line;
    std::getline(in, line); // header
    std::vector<double> ts, xs, us;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        double v[3];
        for (int k = 0; k < 3; ++k) {
            if (!std::getline(ls, tok, ',')) throw Error(Error::Kind::Domain, "bad table row");
            v[k] = std::stod(tok);
        }
        ts.push_back(v[0]);
        xs.push_back(v[1]);
        us.push_back(v[2]);
    }
    std::vector<double> tg(ts.begin(), ts.end()), xg(xs.begin(), xs.end());
    std::sort(tg.begin(), tg.end());
    tg.erase(std::unique(tg.begin(), tg.end()), tg.end());
    std::sort(xg.begin(), xg.end());
    xg.erase(std::unique(xg.begin(), xg.end()), xg.end());
    const size_t nt = tg.size(), nx = xg.size();
    if (nt < 2 || nx < 2 || ts.size() != nt * nx)
        throw Error(Error::Kind::Domain, "subsolution table must be a full regular (t,x) lattice");
    // values keyed row-major by (t index, x index)
    std::vector<double> grid(nt * nx);
    for (size_t i = 0; i < ts.size(); ++i) {
        const size_t it = std::lower_bound(tg.begin(), tg.end(), ts[i]) - tg.begin();
        const size_t ix = std::lower_bound(xg.begin(), xg.end(), xs[i]) - xg.begin();
        grid[it * nx + ix] = us[i];
    }
    auto locate = [](const std::vector<double>& g, double v) {
        size_t i = std::upper_bound(g.begin(), g.end(), v) - g.begin();
        if (i == 0) i = 1;
        if (i >= g.size()) i = g.size() - 1;
        return i - 1;
    };
    auto patch = [=](double t, double x, double& u, double& du_dx, double& du_dt) {
        const size_t it = locate(tg, t), ix = locate(xg, x);
        const double t0 = tg[it], t1 = tg[it + 1], x0 = xg[ix], x1 = xg[ix + 1];
        const double at = (t - t0) / (t1 - t0), ax = (x - x0) / (x1 - x0);
        const double f00 = grid[it * nx + ix], f01 = grid[it * nx + ix + 1];
        const double f10 = grid[(it + 1) * nx + ix], f11 = grid[(it + 1) * nx + ix + 1];
        u = (1 - at) * ((1 - ax) * f00 + ax * f01) + at * ((1 - ax) * f10 + ax * f11);
        du_dx = ((1 - at) * (f01 - f00) + at * (f11 - f10)) / (x1 - x0);
        du_dt = ((1 - ax) * (f10 - f00) + ax * (f11 - f01)) / (t1 - t0);
    };
    Subsolution s;
    s.u = [patch](double t, const VectorXd& x) {
        double u, gx, gt;
        patch(t, x[0], u, gx, gt);
        return u;
    };
    s.grad_x = [patch](double t, const VectorXd& x) {
        double u, gx, gt;
        patch(t, x[0], u, gx, gt);
        return VectorXd::Constant(1, gx).eval();
    };
    s.dt = [patch](double t, const VectorXd& x) {
        double u, gx, gt;
        patch(t, x[0], u, gx, gt);
        return gt;
    };
    s.terminal_cost = std::move(h);
    s.label = "table";
    return s;
}

VerificationReport verify_subsolution(const Subsolution& sub, const HamiltonianHandle& ham,
                                      const VectorXd& box_lo, const VectorXd& box_hi, double t0,
                                      double T, int nt, int nx, double tol) {
    const int m = int(box_lo.size());
    if (m > 2) throw Error(Error::Kind::Domain, "verification grid supports slow dimension <= 2");
    VerificationReport rep;
    rep.tol = tol;
    rep.worst_hjb = std::numeric_limits<double>::infinity();
    rep.worst_terminal_slack = std::numeric_limits<double>::infinity();

    std::vector<VectorXd> xs;
    VectorXd x(m);
    if (m == 1) {
        for (int i = 0; i < nx; ++i) {
            x[0] = box_lo[0] + (box_hi[0] - box_lo[0]) * i / (nx - 1.0);
            xs.push_back(x);
        }
    } else {
        const int ns = std::max(4, int(std::sqrt(double(nx))));
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j < ns; ++j) {
                x[0] = box_lo[0] + (box_hi[0] - box_lo[0]) * i / (ns - 1.0);
                x[1] = box_lo[1] + (box_hi[1] - box_lo[1]) * j / (ns - 1.0);
                xs.push_back(x);
            }
    }

    for (int i = 0; i < nt; ++i) {
        const double t = t0 + (T - t0) * i / (nt - 1.0);
        const bool terminal = (i == nt - 1);
        for (const auto& xv : xs) {
            VerificationRow row;
            row.t = t;
            row.x = xv;
            row.terminal_slack = std::numeric_limits<double>::quiet_NaN();
            if (!terminal) {
                const double res = sub.dt(t, xv) + ham.value(xv, sub.grad_x(t, xv));
                row.hjb_residual = res;
                if (res < rep.worst_hjb) {
                    rep.worst_hjb = res;
                    rep.t_worst = t;
                    rep.x_worst = xv;
                }
            } else {
                row.hjb_residual = std::numeric_limits<double>::quiet_NaN();
                const double slack = sub.terminal_cost(xv) - sub.u(T, xv);
                row.terminal_slack = slack;
                if (slack < rep.worst_terminal_slack) {
                    rep.worst_terminal_slack = slack;
                    rep.x_worst_terminal = xv;
                }
            }
            rep.rows.push_back(std::move(row));
        }
    }
    rep.pass = rep.worst_hjb >= -tol && rep.worst_terminal_slack >= -tol;
    return rep;
}

} // namespace sfis
