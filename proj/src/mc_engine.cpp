#include "sfis/mc_engine.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sfis {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

inline double u64_to_unit(uint64_t r) {
    // (0,1]: 53 mantissa bits, shifted away from 0 so log() is safe
    return (double(r >> 11) + 1.0) * 0x1p-53;
}

inline uint64_t mix3(uint64_t key, uint64_t step, uint64_t draw) {
    return splitmix64(splitmix64(key ^ (step * 0xD1B54A32D192ED03ULL)) ^
                      (draw * 0x8CB92BA72F3D8DD7ULL));
}

} // namespace

double CounterRng::normal(uint64_t step, uint64_t k) const {
    const uint64_t pair = k >> 1;
    const double u1 = u64_to_unit(mix3(key, step, 2 * pair));
    const double u2 = u64_to_unit(mix3(key, step, 2 * pair + 1));
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    return (k & 1) ? rad * std::sin(ang) : rad * std::cos(ang);
}

SimConfig SimConfig::make(const ScaleRegime& regime, double eps, double t0, double T, long n_paths,
                          uint64_t seed, const Eigen::VectorXd& x0, double y0, double c_fast,
                          double dt_cap) {
    regime.validate();
    SimConfig c;
    c.epsilon = eps;
    c.delta = regime.delta(eps);
    c.t0 = t0;
    c.T = T;
    c.n_paths = n_paths;
    c.seed = seed;
    c.x0 = x0;
    c.y0 = y0;
    c.c_fast = c_fast;
    double dt_max = c_fast * c.delta * c.delta / eps;
    if (dt_cap > 0) dt_max = std::min(dt_max, dt_cap);
    const long n_steps = std::max(1L, long(std::ceil((T - t0) / dt_max - 1e-12)));
    c.dt = (T - t0) / n_steps;
    c.validate();
    return c;
}

void SimConfig::validate() const {
    if (!(epsilon > 0) || !(delta > 0)) throw Error(Error::Kind::Domain, "epsilon, delta must be > 0");
    if (!(T > t0)) throw Error(Error::Kind::Domain, "require T > t0");
    if (!(dt > 0)) throw Error(Error::Kind::Domain, "dt must be > 0");
    if (dt > 0.2 * delta * delta / epsilon * (1.0 + 1e-9))
        throw Error(Error::Kind::Domain,
                    "dt does not resolve the fast scale: need dt <= c_fast delta^2/eps, c_fast <= 0.2");
    const double steps = (T - t0) / dt;
    if (std::abs(steps - std::round(steps)) > 1e-6)
        throw Error(Error::Kind::Domain, "dt must divide T - t0");
    if (x0.size() == 0) throw Error(Error::Kind::Domain, "x0 is empty");
}

ControlPolicy zero_control(int kappa) {
    ControlPolicy p;
    p.is_zero = true;
    p.provenance = "zero";
    p.eval = [kappa](double, const Eigen::VectorXd&, double, Eigen::VectorXd& u1,
                     Eigen::VectorXd& u2) {
        u1.setZero(kappa);
        u2.setZero(kappa);
    };
    return p;
}

ControlPolicy make_control_r1(const Subsolution& sub, std::shared_ptr<const CellProviderR1> cells,
                              std::shared_ptr<const CoefficientSet> model) {
    ControlPolicy pol;
    pol.tag = RegimeTag::R1;
    pol.provenance = "r1(" + sub.label + ")";
    auto grad = sub.grad_x;
    pol.eval = [grad, cells, model](double s, const Eigen::VectorXd& x, double y,
                                    Eigen::VectorXd& u1, Eigen::VectorXd& u2) {
        const Eigen::VectorXd p = grad(s, x);
        auto cell = cells->at(x);
        const int m = model->m;
        Eigen::VectorXd dchi(m);
        for (int l = 0; l < m; ++l)
            dchi[l] = interp_cubic_periodic(cell->dchi_dy.col(l), model->period, y);
        const Eigen::MatrixXd sig = model->sigma(x, y);
        const Eigen::RowVectorXd t1 = model->tau1(x, y), t2 = model->tau2(x, y);
        u1 = -(sig + dchi * t1).transpose() * p;
        u2 = -(dchi * t2).transpose() * p;
    };
    return pol;
}

ControlLatticeSpec lattice_from_subsolution(const Subsolution& sub, const Eigen::VectorXd& x_lo,
                                            const Eigen::VectorXd& x_hi, double t0, double T,
                                            int nt, int nx) {
    if (x_lo.size() != 1)
        throw Error(Error::Kind::Domain, "lattice controls support slow dimension 1");
    ControlLatticeSpec spec;
    spec.x_lo = x_lo;
    spec.x_hi = x_hi;
    double plo = std::numeric_limits<double>::infinity(), phi = -plo;
    Eigen::VectorXd x(1);
    for (int i = 0; i < nt; ++i) {
        const double t = t0 + (T - t0) * i / (nt - 1.0);
        for (int j = 0; j < nx; ++j) {
            x[0] = x_lo[0] + (x_hi[0] - x_lo[0]) * j / (nx - 1.0);
            const double p = sub.grad_x(t, x)[0];
            plo = std::min(plo, p);
            phi = std::max(phi, p);
        }
    }
    const double width = std::max(phi - plo, 0.2);
    spec.p_lo = plo - 0.1 * width - 1e-6;
    spec.p_hi = phi + 0.1 * width + 1e-6;
    return spec;
}

namespace {

// Precomputed (x,p) lattice of fast-gradient grids d_y xi, bilinearly blended
// at query time. Shared by the R2 and R3 control assemblies.
struct XiLattice {
    Eigen::VectorXd xs, ps;
    std::vector<Eigen::VectorXd> dxi; // [ix * np + ip], each n nodal values
    double period = 1.0;
    bool clamp_x = false; // exact when the cell solutions do not depend on x

    double dxi_at(double x, double p, double y) const {
        const auto nx = xs.size(), np = ps.size();
        const double pad = 1e-9;
        if (clamp_x) x = std::min(std::max(x, xs[0]), xs[nx - 1]);
        if (x < xs[0] - pad || x > xs[nx - 1] + pad || p < ps[0] - pad || p > ps[np - 1] + pad)
            throw Error(Error::Kind::LatticeRange,
                        "control query outside the precomputed (x,p) lattice; extend the lattice");
        auto cell = [](const Eigen::VectorXd& g, double v, double& w) {
            int i = int(std::upper_bound(g.data(), g.data() + g.size(), v) - g.data()) - 1;
            i = std::max(0, std::min<int>(i, int(g.size()) - 2));
            w = (v - g[i]) / (g[i + 1] - g[i]);
            return i;
        };
        double wx, wp;
        const int ix = cell(xs, x, wx), ip = cell(ps, p, wp);
        auto val = [&](int i, int j) { return interp_cubic_periodic(dxi[i * np + j], period, y); };
        return (1 - wx) * ((1 - wp) * val(ix, ip) + wp * val(ix, ip + 1)) +
               wx * ((1 - wp) * val(ix + 1, ip) + wp * val(ix + 1, ip + 1));
    }
};

template <class Solver>
XiLattice build_lattice(const ControlLatticeSpec& spec, double period, Solver&& solve) {
    XiLattice lat;
    lat.period = period;
    const int nx = spec.nx, np = spec.np;
    lat.xs.resize(nx);
    lat.ps.resize(np);
    for (int i = 0; i < nx; ++i)
        lat.xs[i] = spec.x_lo[0] + (spec.x_hi[0] - spec.x_lo[0]) * i / std::max(1, nx - 1);
    for (int j = 0; j < np; ++j)
        lat.ps[j] = spec.p_lo + (spec.p_hi - spec.p_lo) * j / std::max(1, np - 1);
    lat.dxi.resize(size_t(nx) * np);
    Eigen::VectorXd x(1), p(1);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < np; ++j) {
            x[0] = lat.xs[i];
            p[0] = lat.ps[j];
            lat.dxi[size_t(i) * np + j] = solve(x, p);
        }
    return lat;
}

ControlPolicy xi_control(const Subsolution& sub, std::shared_ptr<const CoefficientSet> model,
                         std::shared_ptr<const XiLattice> lat, RegimeTag tag,
                         const std::string& label) {
    ControlPolicy pol;
    pol.tag = tag;
    pol.provenance = label + "(" + sub.label + ")";
    auto grad = sub.grad_x;
    pol.eval = [grad, model, lat](double s, const Eigen::VectorXd& x, double y,
                                  Eigen::VectorXd& u1, Eigen::VectorXd& u2) {
        const Eigen::VectorXd p = grad(s, x);
        const double xi_y = lat->dxi_at(x[0], p[0], y);
        const Eigen::MatrixXd sig = model->sigma(x, y);
        const Eigen::RowVectorXd t1 = model->tau1(x, y), t2 = model->tau2(x, y);
        u1 = -sig.transpose() * p - t1.transpose() * xi_y;
        u2 = -t2.transpose() * xi_y;
    };
    return pol;
}

} // namespace

ControlPolicy make_control_r2(const Subsolution& sub, std::shared_ptr<const CellProviderR2> cells,
                              std::shared_ptr<const CoefficientSet> model,
                              const ControlLatticeSpec& lattice) {
    if (model->m != 1) throw Error(Error::Kind::Domain, "lattice controls support slow dimension 1");
    auto lat = std::make_shared<XiLattice>(build_lattice(
        lattice, model->period,
        [&](const Eigen::VectorXd& x, const Eigen::VectorXd& p) { return cells->at(x, p)->dxi_dy; }));
    lat->clamp_x = model->all_x_independent;
    return xi_control(sub, model, lat, RegimeTag::R2, "r2");
}

ControlPolicy make_control_r3(const Subsolution& sub, std::shared_ptr<const CellProviderR3> cells,
                              std::shared_ptr<const CoefficientSet> model,
                              const ControlLatticeSpec& lattice) {
    if (model->m != 1) throw Error(Error::Kind::Domain, "lattice controls support slow dimension 1");
    auto lat = std::make_shared<XiLattice>(build_lattice(
        lattice, model->period,
        [&](const Eigen::VectorXd& x, const Eigen::VectorXd& p) { return cells->at(x, p)->dxi0_dy; }));
    lat->clamp_x = model->all_x_independent;
    return xi_control(sub, model, lat, RegimeTag::R3, "r3");
}

// ---------------------------------------------------------------------------

namespace {

TrajectoryOutcome run_path(const CoefficientSet& model, const SimConfig& cfg,
                           const ControlPolicy& policy, long path_index, int thin_every) {
    const int m = model.m, kappa = model.kappa;
    const long n_steps = cfg.n_steps();
    const double dt = cfg.dt, sqdt = std::sqrt(dt);
    const double eps = cfg.epsilon, delta = cfg.delta;
    const double eod = eps / delta, sqe = std::sqrt(eps);

    CounterRng rng(cfg.seed, uint64_t(path_index));
    TrajectoryOutcome out;
    Eigen::VectorXd x = cfg.x0;
    double y = cfg.y0;
    double loglr = 0.0;
    Eigen::VectorXd u1(kappa), u2(kappa), dW(kappa), dB(kappa), xn(m);

    for (long step = 0; step < n_steps; ++step) {
        const double s = cfg.t0 + step * dt;
        const double ye = model.eval_y(y);
        for (int k = 0; k < kappa; ++k) dW[k] = rng.normal(uint64_t(step), uint64_t(k)) * sqdt;
        for (int k = 0; k < kappa; ++k)
            dB[k] = rng.normal(uint64_t(step), uint64_t(kappa + k)) * sqdt;

        const Eigen::MatrixXd sig = model.sigma(x, ye);
        const Eigen::RowVectorXd t1 = model.tau1(x, ye), t2 = model.tau2(x, ye);

        if (policy.is_zero) {
            u1.setZero();
            u2.setZero();
            xn = x + (eod * model.b(x, ye) + model.c(x, ye)) * dt + sqe * (sig * dW);
        } else {
            policy.eval(s, x, ye, u1, u2);
            xn = x + (eod * model.b(x, ye) + model.c(x, ye) + sig * u1) * dt + sqe * (sig * dW);
            loglr += -(u1.squaredNorm() + u2.squaredNorm()) * dt / (2.0 * eps) -
                     (u1.dot(dW) + u2.dot(dB)) / sqe;
        }
        if (model.drift_eps) xn += eps * model.drift_eps(x, ye) * dt;
        const double fast_drift =
            (eod * model.f(x, ye) + model.g(x, ye) + (t1 * u1)(0) + (t2 * u2)(0)) / delta;
        y += fast_drift * dt + (sqe / delta) * ((t1 * dW)(0) + (t2 * dB)(0));
        x = xn;

        if (!x.allFinite() || !std::isfinite(y) || x.cwiseAbs().maxCoeff() > 1e12) {
            out.diverged = true;
            out.diverged_step = step;
            out.x_T = x;
            out.y_T = y;
            out.log_lr = loglr;
            return out;
        }
        if (thin_every > 0 && step % thin_every == 0) {
            out.thin_s.push_back(s + dt);
            out.thin_x.push_back(x);
            out.thin_y.push_back(y);
        }
    }
    out.x_T = x;
    out.y_T = y;
    out.log_lr = loglr;
    return out;
}

EstimatorReport reduce_reports(const SimConfig& cfg, const std::vector<double>& gamma,
                               const std::vector<char>& bad, double bound) {
    EstimatorReport rep;
    rep.n = cfg.n_paths;
    rep.bound = bound;
    long nv = 0;
    double sum = 0.0;
    for (long i = 0; i < cfg.n_paths; ++i) {
        if (bad[i]) continue;
        sum += gamma[i];
        ++nv;
    }
    rep.n_diverged = cfg.n_paths - nv;
    if (nv == 0) throw Error(Error::Kind::Estimation, "all paths diverged");
    rep.theta_hat = sum / nv;
    double ss = 0.0, q2 = 0.0;
    for (long i = 0; i < cfg.n_paths; ++i) {
        if (bad[i]) continue;
        const double d = gamma[i] - rep.theta_hat;
        ss += d * d;
        q2 += gamma[i] * gamma[i];
    }
    rep.q_hat = q2 / nv;
    const double sdev = nv > 1 ? std::sqrt(ss / (nv - 1)) : 0.0;
    rep.std_err = sdev / std::sqrt(double(nv));
    rep.rel_err = rep.theta_hat > 0 ? rep.std_err / rep.theta_hat
                                    : std::numeric_limits<double>::infinity();
    rep.decay_mean = -cfg.epsilon * std::log(rep.theta_hat);
    rep.decay_2nd = -cfg.epsilon * std::log(rep.q_hat);
    return rep;
}

EstimatorReport estimate_impl(const CoefficientSet& model, const SimConfig& cfg,
                              const ControlPolicy& policy, const Functional& functional,
                              int threads, double bound, bool parallel,
                              std::vector<TrajectoryOutcome>* per_path) {
    cfg.validate();
    if (cfg.n_paths < 100) throw Error(Error::Kind::Domain, "estimate needs n_paths >= 100");
    const auto t_start = std::chrono::steady_clock::now();
    const long n = cfg.n_paths;
    std::vector<double> gamma(n, 0.0);
    std::vector<char> bad(n, 0);
    if (per_path) per_path->resize(n);

    // policy/model failures inside the worker pool are captured and rethrown
    // after the join (exceptions must not escape the parallel region)
    std::mutex exc_mu;
    std::string exc_msg;
    bool exc_set = false;

    auto path_gamma = [&](long i) {
        try {
            TrajectoryOutcome out = run_path(model, cfg, policy, i, 0);
            if (per_path) (*per_path)[i] = out;
            if (out.diverged || !std::isfinite(out.log_lr)) {
                bad[i] = 1;
                return;
            }
            double g;
            if (functional.type == Functional::Type::ExpCost)
                g = std::exp(-functional.h(out.x_T) / cfg.epsilon + out.log_lr);
            else
                g = functional.indicator(out.x_T) ? std::exp(out.log_lr) : 0.0;
            if (!std::isfinite(g)) {
                bad[i] = 1;
                return;
            }
            gamma[i] = g;
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(exc_mu);
            if (!exc_set) {
                exc_msg = e.what();
                exc_set = true;
            }
            bad[i] = 1;
        }
    };

    if (parallel) {
#ifdef _OPENMP
        int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
        for (long i = 0; i < n; ++i) path_gamma(i);
#else
        (void)threads;
        for (long i = 0; i < n; ++i) path_gamma(i);
#endif
    } else {
        for (long i = 0; i < n; ++i) path_gamma(i);
    }
    if (exc_set) throw Error(Error::Kind::Solver, "path simulation failed: " + exc_msg);

    EstimatorReport rep = reduce_reports(cfg, gamma, bad, bound);
    rep.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    return rep;
}

} // namespace

TrajectoryOutcome integrate_controlled(const CoefficientSet& model, const SimConfig& config,
                                       const ControlPolicy& policy, long path_index,
                                       int thin_every) {
    config.validate();
    TrajectoryOutcome out = run_path(model, config, policy, path_index, thin_every);
    if (out.diverged)
        throw Error(Error::Kind::Diverged,
                    "trajectory diverged at step " + std::to_string(out.diverged_step));
    return out;
}

EstimatorReport estimate(const CoefficientSet& model, const SimConfig& config,
                         const ControlPolicy& policy, const Functional& functional, int threads,
                         double bound) {
    return estimate_impl(model, config, policy, functional, threads, bound, true, nullptr);
}

EstimatorReport estimate_serial(const CoefficientSet& model, const SimConfig& config,
                                const ControlPolicy& policy, const Functional& functional,
                                double bound) {
    return estimate_impl(model, config, policy, functional, 1, bound, false, nullptr);
}

EstimatorReport estimate_with_outcomes(const CoefficientSet& model, const SimConfig& config,
                                       const ControlPolicy& policy, const Functional& functional,
                                       std::vector<TrajectoryOutcome>& outcomes, int threads,
                                       double bound) {
    return estimate_impl(model, config, policy, functional, threads, bound, true, &outcomes);
}

std::vector<SweepRow> sweep_epsilon(const CoefficientSet& model, const ScaleRegime& regime,
                                    const std::function<ControlPolicy(double)>& policy_factory,
                                    const std::vector<double>& eps_list,
                                    const SimConfig& config_template, const Functional& functional,
                                    int threads, double bound) {
    if (eps_list.size() < 1) throw Error(Error::Kind::Domain, "empty eps list");
    for (size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            throw Error(Error::Kind::Domain, "eps list must be strictly decreasing");
    std::vector<SweepRow> rows;
    for (double eps : eps_list) {
        SweepRow row;
        row.epsilon = eps;
        try {
            SimConfig cfg = SimConfig::make(regime, eps, config_template.t0, config_template.T,
                                            config_template.n_paths, config_template.seed,
                                            config_template.x0, config_template.y0,
                                            config_template.c_fast);
            row.delta = cfg.delta;
            row.report = estimate(model, cfg, policy_factory(eps), functional, threads, bound);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace sfis
