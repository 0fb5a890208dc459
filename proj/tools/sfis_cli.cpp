// Config-driven frontend: validate models, solve cell problems, compute
// effective dynamics and quasipotentials, run estimators and eps-sweeps.
//
// Exit codes: 0 success, 1 computation/validation failure, 2 config error.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "sfis/config.hpp"
#include "sfis/csv.hpp"
#include "sfis/experiments.hpp"
#include "sfis/mc_engine.hpp"
#include "sfis/model.hpp"
#include "sfis/quadrature.hpp"
#include "sfis/torus_solver.hpp"
#include "sfis/variational.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace sfis;

namespace {

struct CliArgs {
    std::string command;
    std::string config_path;
    std::string out_dir;
    long seed = -1;
    int threads = -1;
};

void usage() {
    std::cerr << "usage: sfis <validate|solve-cell|effective|quasipotential|estimate|sweep>"
                 " --config PATH [--seed N] [--threads N] [--out DIR]\n";
}

CliArgs parse_args(int argc, char** argv) {
    CliArgs a;
    if (argc < 2) throw ConfigError("missing command");
    a.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string s = argv[i];
        auto need = [&](const char* flag) -> std::string {
            if (i + 1 >= argc) throw ConfigError(std::string("flag ") + flag + " needs a value");
            return argv[++i];
        };
        if (s == "--config") a.config_path = need("--config");
        else if (s == "--seed") a.seed = std::stol(need("--seed"));
        else if (s == "--threads") a.threads = std::stoi(need("--threads"));
        else if (s == "--out") a.out_dir = need("--out");
        else throw ConfigError("unknown flag '" + s + "'");
    }
    if (a.config_path.empty()) throw ConfigError("--config is required");
    return a;
}

struct Session {
    RunConfig cfg;
    std::shared_ptr<CoefficientSet> model;
    ScaleRegime regime;
    TorusGrid grid;
    Eigen::VectorXd domain_lo, domain_hi;
    std::string out_dir;
    int threads = 0;
};

std::shared_ptr<CoefficientSet> build_model(const RunConfig& cfg, const ScaleRegime& regime) {
    const std::string name = cfg.get_string("model.name");
    if (name == "rough_langevin") {
        auto spec = RoughLangevinSpec::cosine(
            cfg.get_double("model.params.D", 1.0), cfg.get_double("model.params.q_amp", 1.0),
            cfg.get_double("model.params.v_curv", 1.0), cfg.get_double("model.params.lambda", 1.0));
        return std::make_shared<CoefficientSet>(build_rough_langevin(spec));
    }
    if (name == "fast_vol") {
        auto spec = FastVolSpec::sine(
            cfg.get_double("model.params.sigma0", 1.0), cfg.get_double("model.params.sigma_amp", 0.5),
            cfg.get_double("model.params.m_level", 0.0), cfg.get_double("model.params.rho", 0.7),
            cfg.get_double("model.params.h_amp", 0.0), cfg.get_double("model.params.lambda", 1.0));
        spec.periodic_surrogate = cfg.get_bool("model.params.periodic_surrogate", false);
        spec.surrogate_amp = cfg.get_double("model.params.surrogate_amp", 1.0);
        return std::make_shared<CoefficientSet>(build_fast_vol(spec, regime));
    }
    throw ConfigError("unknown model.name '" + name + "' (built-ins: rough_langevin, fast_vol)");
}

ScaleRegime build_regime(const RunConfig& cfg) {
    const std::string tag = cfg.get_string("regime.tag"); // required; missing -> exit 2
    try {
        if (tag == "r1") return ScaleRegime::r1(cfg.get_double("regime.exponent_a", 1.5));
        if (tag == "r2") return ScaleRegime::r2(cfg.get_double("regime.gamma", 1.0));
        if (tag == "r3") return ScaleRegime::r3(cfg.get_double("regime.exponent_a", 0.5));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("regime.tag must be one of r1, r2, r3");
}

std::function<double(const Eigen::VectorXd&)> build_h(const RunConfig& cfg, int m) {
    const std::string kind = cfg.get_string("functional.h", "quadratic");
    const Eigen::VectorXd center =
        cfg.get_vector("functional.center", Eigen::VectorXd::Constant(m, 1.0));
    const double scale = cfg.get_double("functional.scale", 1.0);
    if (kind == "zero") return [](const Eigen::VectorXd&) { return 0.0; };
    if (kind == "quadratic")
        return [center, scale](const Eigen::VectorXd& x) {
            return scale * (x - center).squaredNorm();
        };
    if (kind == "inv_quad")
        return [center, scale](const Eigen::VectorXd& x) {
            return scale * (1.0 - 1.0 / (1.0 + (x - center).squaredNorm()));
        };
    throw ConfigError("functional.h must be zero, quadratic or inv_quad");
}

Functional build_functional(const RunConfig& cfg, int m) {
    Functional fn;
    const std::string type = cfg.get_string("functional.type", "exp_cost");
    if (type == "exp_cost") {
        fn.type = Functional::Type::ExpCost;
        fn.h = build_h(cfg, m);
    } else if (type == "indicator") {
        fn.type = Functional::Type::Indicator;
        const std::string set = cfg.get_string("functional.set", "box");
        if (set == "box") {
            const Eigen::VectorXd lo = cfg.get_vector("functional.box_lo", Eigen::VectorXd());
            const Eigen::VectorXd hi = cfg.get_vector("functional.box_hi", Eigen::VectorXd());
            if (lo.size() != m || hi.size() != m)
                throw ConfigError("indicator box needs functional.box_lo/box_hi of slow dimension");
            fn.indicator = [lo, hi](const Eigen::VectorXd& x) {
                return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
            };
        } else if (set == "halfspace") {
            const Eigen::VectorXd nrm = cfg.get_vector("functional.normal", Eigen::VectorXd());
            const double off = cfg.get_double("functional.offset", 1.0);
            if (nrm.size() != m) throw ConfigError("functional.normal must have slow dimension");
            fn.indicator = [nrm, off](const Eigen::VectorXd& x) { return nrm.dot(x) >= off; };
        } else {
            throw ConfigError("functional.set must be box or halfspace");
        }
        // terminal-cost surrogate for subsolution verification: 0 inside A,
        // large outside
        auto ind = fn.indicator;
        fn.h = [ind](const Eigen::VectorXd& x) { return ind(x) ? 0.0 : 1e6; };
    } else {
        throw ConfigError("functional.type must be exp_cost or indicator");
    }
    return fn;
}

Session open_session(const CliArgs& args) {
    Session s{RunConfig::parse_file(args.config_path)};
    if (args.seed >= 0) s.cfg.set("sim.seed", std::to_string(args.seed));
    if (args.threads >= 0) s.cfg.set("threads", std::to_string(args.threads));
    if (!args.out_dir.empty()) s.cfg.set("output.dir", args.out_dir);
    s.regime = build_regime(s.cfg);
    s.model = build_model(s.cfg, s.regime);
    const long n = s.cfg.get_long("solver.n", 512);
    s.grid = TorusGrid::make(int(n), s.model->period);
    const int m = s.model->m;
    s.domain_lo = s.cfg.get_vector("domain.lo", Eigen::VectorXd::Constant(m, -2.0));
    s.domain_hi = s.cfg.get_vector("domain.hi", Eigen::VectorXd::Constant(m, 2.0));
    s.out_dir = s.cfg.get_string("output.dir", "out");
    s.threads = int(s.cfg.get_long("threads", 0));
    fs::create_directories(s.out_dir);
    return s;
}

SimConfig sim_config(const Session& s, double eps) {
    return SimConfig::make(s.regime, eps, s.cfg.get_double("sim.t0", 0.0),
                           s.cfg.get_double("sim.T", 1.0), s.cfg.get_long("sim.n_paths", 10000),
                           uint64_t(s.cfg.get_long("sim.seed", 0)),
                           s.cfg.get_vector("sim.x0", Eigen::VectorXd::Zero(s.model->m)),
                           s.cfg.get_double("sim.y0", 0.0), s.cfg.get_double("sim.c_fast", 0.1),
                           s.cfg.get_double("sim.dt_cap", 0.0));
}

HamiltonianHandle build_hamiltonian(const Session& s) {
    switch (s.regime.tag) {
        case RegimeTag::R1:
            return hamiltonian_r1(make_effective_dynamics(s.model, s.grid));
        case RegimeTag::R2:
            return hamiltonian_r2(
                std::make_shared<CellProviderR2>(*s.model, s.regime.gamma, s.grid));
        case RegimeTag::R3:
            return hamiltonian_r3(std::make_shared<CellProviderR3>(*s.model, s.grid));
    }
    throw Error(Error::Kind::Domain, "bad regime");
}

QuasipotentialOptions quasi_opts(const Session& s) {
    QuasipotentialOptions opts;
    opts.box_lo = s.cfg.get_vector("quasipotential.box_lo", s.domain_lo);
    opts.box_hi = s.cfg.get_vector("quasipotential.box_hi", s.domain_hi);
    opts.interior_nodes = int(s.cfg.get_long("quasipotential.nodes", 16));
    opts.multistarts = int(s.cfg.get_long("quasipotential.multistarts", 8));
    return opts;
}

Subsolution build_subsolution(const Session& s, const std::function<double(const Eigen::VectorXd&)>& h,
                              const HamiltonianHandle& ham) {
    const std::string type = s.cfg.get_string("subsolution.type", "zero");
    const double T = s.cfg.get_double("sim.T", 1.0);
    if (type == "zero") return zero_subsolution(h);
    if (type == "affine") {
        const Eigen::VectorXd a = s.cfg.get_vector("subsolution.a", Eigen::VectorXd());
        if (a.size() != s.model->m) throw ConfigError("subsolution.a must have slow dimension");
        const double bT = s.cfg.get_double("subsolution.b_T",
                                           std::numeric_limits<double>::quiet_NaN());
        return affine_subsolution(a, h, T, ham, s.domain_lo, s.domain_hi, 64, bT);
    }
    if (type == "hopf_lax") {
        if (s.regime.tag != RegimeTag::R1)
            throw ConfigError("hopf_lax subsolution needs the Regime-1 quadratic Hamiltonian");
        return hopf_lax_subsolution(make_effective_dynamics(s.model, s.grid), h, T,
                                    quasi_opts(s));
    }
    if (type == "table") return table_subsolution(s.cfg.get_string("subsolution.table"), h);
    throw ConfigError("subsolution.type must be zero, affine, hopf_lax or table");
}

void write_verification(const Session& s, const VerificationReport& rep) {
    CsvWriter csv(s.out_dir + "/verification.csv", [&] {
        std::vector<std::string> h{"t"};
        for (int d = 0; d < s.model->m; ++d) h.push_back("x" + std::to_string(d));
        h.push_back("hjb_residual");
        h.push_back("terminal_slack");
        return h;
    }());
    for (const auto& row : rep.rows) {
        std::vector<double> vals{row.t};
        for (int d = 0; d < row.x.size(); ++d) vals.push_back(row.x[d]);
        vals.push_back(row.hjb_residual);
        vals.push_back(row.terminal_slack);
        csv.row(vals);
    }
}

// Samples the control over the working domain; a policy with non-finite
// values must not back a sampler.
void check_policy_bounded(const Session& s, const ControlPolicy& pol) {
    const double t0 = s.cfg.get_double("sim.t0", 0.0), T = s.cfg.get_double("sim.T", 1.0);
    Eigen::VectorXd u1(s.model->kappa), u2(s.model->kappa);
    double sup = 0.0;
    for (int it = 0; it < 3; ++it)
        for (int ix = 0; ix < 5; ++ix)
            for (int iy = 0; iy < 4; ++iy) {
                const double t = t0 + (T - t0) * (it / 2.0) * 0.999;
                const Eigen::VectorXd x =
                    s.domain_lo + (s.domain_hi - s.domain_lo) * (ix / 4.0);
                pol.eval(t, x, s.model->period * iy / 4.0, u1, u2);
                sup = std::max(sup, std::max(u1.cwiseAbs().maxCoeff(), u2.cwiseAbs().maxCoeff()));
            }
    if (!std::isfinite(sup))
        throw Error(Error::Kind::Validation, "control policy is unbounded on the working domain");
}

// Builds the sampling policy, verifying non-trivial subsolutions first.
ControlPolicy build_policy(const Session& s, const Subsolution& sub,
                           const HamiltonianHandle& ham) {
    const std::string type = s.cfg.get_string("subsolution.type", "zero");
    if (type == "zero") return zero_control(s.model->kappa);

    const double t0 = s.cfg.get_double("sim.t0", 0.0), T = s.cfg.get_double("sim.T", 1.0);
    VerificationReport rep = verify_subsolution(
        sub, ham, s.domain_lo, s.domain_hi, t0, T, int(s.cfg.get_long("domain.nt", 9)),
        int(s.cfg.get_long("domain.nx", 33)), s.cfg.get_double("verify.tol", 1e-8));
    write_verification(s, rep);
    if (!rep.pass)
        throw Error(Error::Kind::Validation,
                    "subsolution failed verification: worst HJB residual " +
                        std::to_string(rep.worst_hjb) + ", worst terminal slack " +
                        std::to_string(rep.worst_terminal_slack));

    ControlPolicy pol;
    switch (s.regime.tag) {
        case RegimeTag::R1:
            pol = make_control_r1(sub, std::make_shared<CellProviderR1>(*s.model, s.grid),
                                  s.model);
            break;
        case RegimeTag::R2: {
            auto cells = std::make_shared<CellProviderR2>(*s.model, s.regime.gamma, s.grid);
            auto lat = lattice_from_subsolution(sub, s.domain_lo, s.domain_hi, t0, T);
            pol = make_control_r2(sub, cells, s.model, lat);
            break;
        }
        case RegimeTag::R3: {
            auto cells = std::make_shared<CellProviderR3>(*s.model, s.grid);
            auto lat = lattice_from_subsolution(sub, s.domain_lo, s.domain_hi, t0, T);
            pol = make_control_r3(sub, cells, s.model, lat);
            break;
        }
    }
    check_policy_bounded(s, pol);
    return pol;
}

const std::vector<std::string> kReportHeader = {
    "epsilon", "delta", "n", "theta_hat", "std_err", "rel_err",
    "q_hat",   "decay_mean", "decay_2nd", "bound", "runtime_ms"};

std::vector<double> report_row(double eps, double delta, const EstimatorReport& r) {
    return {eps,     delta,        double(r.n), r.theta_hat, r.std_err, r.rel_err,
            r.q_hat, r.decay_mean, r.decay_2nd, r.bound,     r.runtime_ms};
}

// ---------------------------------------------------------------------------

int cmd_validate(const Session& s) {
    ValidationOptions opts;
    opts.x_lo = s.domain_lo;
    opts.x_hi = s.domain_hi;
    opts.solver_n = s.grid.n;
    ValidationReport rep = validate_model(*s.model, s.regime, opts);
    CsvWriter csv(s.out_dir + "/validation.csv", {"key", "value"});
    csv.row_kv("pass", rep.pass ? "1" : "0");
    csv.row_kv("periodicity_ok", rep.periodicity_ok ? "1" : "0");
    csv.row_kv("ellipticity_min", rep.ellipticity_min);
    csv.row_kv("bound_max", rep.bound_max);
    csv.row_kv("centering_residual", rep.centering_residual);
    if (!rep.pass) {
        std::cerr << "validation failed: " << rep.detail << "\n";
        return 1;
    }
    std::cout << "validation passed (ellipticity_min " << rep.ellipticity_min
              << ", bound_max " << rep.bound_max << ")\n";
    return 0;
}

int cmd_solve_cell(const Session& s) {
    const Eigen::VectorXd x0 = s.cfg.get_vector("sim.x0", Eigen::VectorXd::Zero(s.model->m));
    const Eigen::VectorXd p =
        s.cfg.get_vector("solver.p", Eigen::VectorXd::Constant(s.model->m, 1.0));
    CsvWriter summary(s.out_dir + "/summary.csv", {"key", "value"});
    if (s.regime.tag == RegimeTag::R1) {
        InvariantMeasure mu = solve_invariant_measure(*s.model, x0, s.grid);
        CellSolutionR1 cell = solve_cell_r1(*s.model, x0, s.grid, &mu);
        {
            CsvWriter csv(s.out_dir + "/measure.csv", {"y", "value"});
            for (int j = 0; j < s.grid.n; ++j) csv.row({s.grid.node(j), mu.density[j]});
        }
        std::vector<std::string> hdr{"y"};
        for (int l = 0; l < s.model->m; ++l) hdr.push_back("chi_" + std::to_string(l));
        for (int l = 0; l < s.model->m; ++l) hdr.push_back("dchi_" + std::to_string(l));
        CsvWriter csv(s.out_dir + "/cell.csv", hdr);
        for (int j = 0; j < s.grid.n; ++j) {
            std::vector<double> row{s.grid.node(j)};
            for (int l = 0; l < s.model->m; ++l) row.push_back(cell.chi(j, l));
            for (int l = 0; l < s.model->m; ++l) row.push_back(cell.dchi_dy(j, l));
            csv.row(row);
        }
        summary.row_kv("residual", cell.residual);
        summary.row_kv("stationarity_residual", mu.stationarity_residual);
    } else if (s.regime.tag == RegimeTag::R2) {
        CellSolutionR2 cell = solve_cell_r2(*s.model, x0, p, s.regime.gamma, s.grid);
        CsvWriter csv(s.out_dir + "/cell.csv", {"y", "xi", "dxi"});
        for (int j = 0; j < s.grid.n; ++j)
            csv.row({s.grid.node(j), cell.xi[j], cell.dxi_dy[j]});
        summary.row_kv("h_bar", cell.h_bar);
        summary.row_kv("h_bar_raw", cell.h_bar_raw);
        summary.row_kv("gamma", cell.gamma);
        summary.row_kv("residual", cell.residual);
    } else {
        CellSolutionR3 cell = solve_cell_r3(*s.model, x0, p, s.grid);
        CsvWriter csv(s.out_dir + "/cell.csv", {"y", "xi", "dxi"});
        for (int j = 0; j < s.grid.n; ++j)
            csv.row({s.grid.node(j), cell.xi0[j], cell.dxi0_dy[j]});
        summary.row_kv("h_bar", cell.h_bar0);
        summary.row_kv("branch", double(cell.branch));
        summary.row_kv("residual", cell.residual);
    }
    std::cout << "cell solution written to " << s.out_dir << "\n";
    return 0;
}

int cmd_effective(const Session& s) {
    const Eigen::VectorXd x0 = s.cfg.get_vector("sim.x0", Eigen::VectorXd::Zero(s.model->m));
    auto [r, q] = effective_coefficients(*s.model, x0, s.grid);
    std::vector<std::string> hdr;
    for (int d = 0; d < s.model->m; ++d) hdr.push_back("x" + std::to_string(d));
    for (int d = 0; d < s.model->m; ++d) hdr.push_back("r" + std::to_string(d));
    for (int i = 0; i < s.model->m; ++i)
        for (int j = 0; j < s.model->m; ++j)
            hdr.push_back("q" + std::to_string(i) + std::to_string(j));
    CsvWriter csv(s.out_dir + "/effective.csv", hdr);
    std::vector<double> row;
    for (int d = 0; d < s.model->m; ++d) row.push_back(x0[d]);
    for (int d = 0; d < s.model->m; ++d) row.push_back(r[d]);
    for (int i = 0; i < s.model->m; ++i)
        for (int j = 0; j < s.model->m; ++j) row.push_back(q(i, j));
    csv.row(row);
    std::cout << "r(x0) = [" << r.transpose() << "], q(x0) = [" << q << "]\n";
    return 0;
}

double compute_bound(const Session& s, const Subsolution& sub,
                     const std::function<double(const Eigen::VectorXd&)>& h) {
    const double t0 = s.cfg.get_double("sim.t0", 0.0), T = s.cfg.get_double("sim.T", 1.0);
    const Eigen::VectorXd x0 = s.cfg.get_vector("sim.x0", Eigen::VectorXd::Zero(s.model->m));
    const std::string method = s.cfg.get_string("quasipotential.method", "path_opt");
    EffectiveDynamics eff = make_effective_dynamics(s.model, s.grid);
    const double G = quasipotential_G(t0, x0, h, T, eff,
                                      method == "hopf_lax" ? QuasipotentialMethod::HopfLax
                                                           : QuasipotentialMethod::PathOpt,
                                      quasi_opts(s));
    return G + sub.u(t0, x0);
}

int cmd_quasipotential(const Session& s) {
    const double t0 = s.cfg.get_double("sim.t0", 0.0), T = s.cfg.get_double("sim.T", 1.0);
    const Eigen::VectorXd x0 = s.cfg.get_vector("sim.x0", Eigen::VectorXd::Zero(s.model->m));
    auto h = build_h(s.cfg, s.model->m);
    const std::string method = s.cfg.get_string("quasipotential.method", "path_opt");
    EffectiveDynamics eff = make_effective_dynamics(s.model, s.grid);
    const double G = quasipotential_G(t0, x0, h, T, eff,
                                      method == "hopf_lax" ? QuasipotentialMethod::HopfLax
                                                           : QuasipotentialMethod::PathOpt,
                                      quasi_opts(s));
    CsvWriter csv(s.out_dir + "/quasipotential.csv", {"t0", "x0", "G"});
    csv.row({t0, x0[0], G});
    std::cout << "G(" << t0 << ", [" << x0.transpose() << "]) = " << G << "\n";
    return 0;
}

int cmd_estimate(const Session& s) {
    const double eps = s.cfg.get_double("sim.epsilon");
    SimConfig cfg = sim_config(s, eps);
    Functional fn = build_functional(s.cfg, s.model->m);
    HamiltonianHandle ham = build_hamiltonian(s);
    Subsolution sub = build_subsolution(s, fn.h, ham);
    ControlPolicy pol = build_policy(s, sub, ham);
    double bound = std::numeric_limits<double>::quiet_NaN();
    if (s.cfg.get_bool("bound.compute", false)) bound = compute_bound(s, sub, fn.h);

    EstimatorReport rep;
    if (s.cfg.get_bool("output.per_path", false)) {
        std::vector<TrajectoryOutcome> outcomes;
        rep = estimate_with_outcomes(*s.model, cfg, pol, fn, outcomes, s.threads, bound);
        std::vector<std::string> hdr{"path"};
        for (int d = 0; d < s.model->m; ++d) hdr.push_back("x_T" + std::to_string(d));
        hdr.push_back("log_lr");
        CsvWriter csv(s.out_dir + "/paths.csv", hdr);
        for (size_t i = 0; i < outcomes.size(); ++i) {
            std::vector<double> row{double(i)};
            for (int d = 0; d < outcomes[i].x_T.size(); ++d) row.push_back(outcomes[i].x_T[d]);
            row.push_back(outcomes[i].log_lr);
            csv.row(row);
        }
    } else {
        rep = estimate(*s.model, cfg, pol, fn, s.threads, bound);
    }
    CsvWriter csv(s.out_dir + "/estimate.csv", kReportHeader);
    csv.row(report_row(cfg.epsilon, cfg.delta, rep));
    std::cout << "theta_hat = " << rep.theta_hat << " (rel_err " << rep.rel_err << ", n " << rep.n
              << ", policy " << pol.provenance << ")\n";
    return 0;
}

int cmd_sweep(const Session& s) {
    std::vector<double> eps_list = s.cfg.get_list("sim.eps_list");
    for (size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            throw ConfigError("sim.eps_list must be strictly decreasing");
    Functional fn = build_functional(s.cfg, s.model->m);
    HamiltonianHandle ham = build_hamiltonian(s);
    Subsolution sub = build_subsolution(s, fn.h, ham);
    ControlPolicy pol = build_policy(s, sub, ham);
    double bound = std::numeric_limits<double>::quiet_NaN();
    try {
        bound = compute_bound(s, sub, fn.h);
    } catch (const std::exception& e) {
        std::cerr << "warning: bound computation failed: " << e.what() << "\n";
    }
    SimConfig tmpl = sim_config(s, eps_list.front());
    auto rows = sweep_epsilon(*s.model, s.regime, [&](double) { return pol; }, eps_list, tmpl, fn,
                              s.threads, bound);
    CsvWriter csv(s.out_dir + "/sweep.csv", kReportHeader);
    CsvWriter plot(s.out_dir + "/plot_decay.csv", {"epsilon", "decay_2nd", "bound"});
    int failures = 0;
    for (const auto& row : rows) {
        if (!row.error.empty()) {
            std::cerr << "eps = " << row.epsilon << " failed: " << row.error << "\n";
            ++failures;
            continue;
        }
        csv.row(report_row(row.epsilon, row.delta, row.report));
        plot.row({row.epsilon, row.report.decay_2nd, row.report.bound});
    }
    std::cout << "sweep wrote " << (rows.size() - failures) << " rows to " << s.out_dir
              << "/sweep.csv\n";
    return failures == int(rows.size()) ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        CliArgs args = parse_args(argc, argv);
        Session s = open_session(args);
#ifdef _OPENMP
        if (s.threads > 0) omp_set_num_threads(s.threads);
#endif
        if (args.command == "validate") return cmd_validate(s);
        if (args.command == "solve-cell") return cmd_solve_cell(s);
        if (args.command == "effective") return cmd_effective(s);
        if (args.command == "quasipotential") return cmd_quasipotential(s);
        if (args.command == "estimate") return cmd_estimate(s);
        if (args.command == "sweep") return cmd_sweep(s);
        usage();
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
