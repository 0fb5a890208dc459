#include "sfis/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "sfis/torus_solver.hpp"

namespace sfis {

ScaleRegime ScaleRegime::r1(double a) {
    ScaleRegime r;
    r.tag = RegimeTag::R1;
    r.exponent_a = a;
    r.validate();
    return r;
}

ScaleRegime ScaleRegime::r2(double gamma) {
    ScaleRegime r;
    r.tag = RegimeTag::R2;
    r.gamma = gamma;
    r.validate();
    return r;
}

ScaleRegime ScaleRegime::r3(double a) {
    ScaleRegime r;
    r.tag = RegimeTag::R3;
    r.exponent_a = a;
    r.validate();
    return r;
}

double ScaleRegime::delta(double eps) const {
    if (!(eps > 0)) throw Error(Error::Kind::Domain, "epsilon must be positive");
    switch (tag) {
        case RegimeTag::R2: return eps / gamma;
        default: return std::pow(eps, exponent_a);
    }
}

void ScaleRegime::validate() const {
    switch (tag) {
        case RegimeTag::R1:
            if (!(exponent_a > 1.0))
                throw Error(Error::Kind::Domain, "Regime 1 requires delta = eps^a with a > 1");
            break;
        case RegimeTag::R2:
            if (!(gamma > 0.0))
                throw Error(Error::Kind::Domain, "Regime 2 requires gamma > 0");
            break;
        case RegimeTag::R3:
            if (!(exponent_a < 1.0) || !(exponent_a > 0.0))
                throw Error(Error::Kind::Domain, "Regime 3 requires delta = eps^a with 0 < a < 1");
            break;
    }
}

const char* regime_name(RegimeTag tag) {
    switch (tag) {
        case RegimeTag::R1: return "r1";
        case RegimeTag::R2: return "r2";
        case RegimeTag::R3: return "r3";
    }
    return "?";
}

namespace {

struct Sampler {
    const CoefficientSet& model;
    // flattened coefficient values at (x, y), with a name per block for diagnostics
    void gather(const VectorXd& x, double y, std::vector<std::pair<const char*, MatrixXd>>& out) const {
        out.clear();
        out.emplace_back("b", model.b(x, y));
        out.emplace_back("c", model.c(x, y));
        out.emplace_back("sigma", model.sigma(x, y));
        out.emplace_back("f", MatrixXd::Constant(1, 1, model.f(x, y)));
        out.emplace_back("g", MatrixXd::Constant(1, 1, model.g(x, y)));
        out.emplace_back("tau1", model.tau1(x, y));
        out.emplace_back("tau2", model.tau2(x, y));
        if (model.drift_eps) out.emplace_back("drift_eps", model.drift_eps(x, y));
    }
};

} // namespace

ValidationReport validate_model(const CoefficientSet& model, const ScaleRegime& regime,
                                const ValidationOptions& opts) {
    if (opts.n_fast < 16)
        throw Error(Error::Kind::Domain, "validation needs >= 16 fast sample points");
    if (opts.n_slow < 4)
        throw Error(Error::Kind::Domain, "validation needs >= 4 slow sample points per dimension");
    if (model.fast_dim != 1)
        throw Error(Error::Kind::Domain, "fast dimension is fixed to 1 in this artifact");
    regime.validate();

    const int m = model.m;
    VectorXd lo = opts.x_lo.size() == m ? opts.x_lo : VectorXd::Constant(m, -1.0);
    VectorXd hi = opts.x_hi.size() == m ? opts.x_hi : VectorXd::Constant(m, 1.0);

    // slow sample points: per-axis sweeps through the box midpoint
    std::vector<VectorXd> xs;
    VectorXd mid = 0.5 * (lo + hi);
    xs.push_back(mid);
    for (int d = 0; d < m; ++d)
        for (int i = 0; i < opts.n_slow; ++i) {
            VectorXd x = mid;
            x[d] = lo[d] + (hi[d] - lo[d]) * i / (opts.n_slow - 1.0);
            xs.push_back(x);
        }

    ValidationReport rep;
    rep.finite_ok = true;
    rep.periodicity_ok = model.periodic_fast;
    rep.ellipticity_min = std::numeric_limits<double>::infinity();
    rep.bound_max = 0.0;

    Sampler sampler{model};
    std::vector<std::pair<const char*, MatrixXd>> vals, vals_shift;
    double periodicity_err = 0.0;

    for (const auto& x : xs) {
        for (int i = 0; i < opts.n_fast; ++i) {
            const double y = model.period * i / opts.n_fast;
            sampler.gather(x, y, vals);
            for (auto& [name, v] : vals) {
                if (!v.allFinite()) {
                    std::ostringstream os;
                    os << "non-finite coefficient " << name << " at x = [" << x.transpose()
                       << "], y = " << y;
                    rep.finite_ok = false;
                    rep.detail = os.str();
                    throw Error(Error::Kind::NonFinite, rep.detail);
                }
                rep.bound_max = std::max(rep.bound_max, v.cwiseAbs().maxCoeff());
            }
            if (model.periodic_fast) {
                sampler.gather(x, y + model.period, vals_shift);
                for (size_t k = 0; k < vals.size(); ++k)
                    periodicity_err = std::max(
                        periodicity_err,
                        (vals[k].second - vals_shift[k].second).cwiseAbs().maxCoeff());
            }
            // uniform ellipticity of both diffusion blocks
            MatrixXd s = model.sigma(x, y);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(s * s.transpose());
            rep.ellipticity_min = std::min(rep.ellipticity_min, es.eigenvalues().minCoeff());
            RowVectorXd t1 = model.tau1(x, y), t2 = model.tau2(x, y);
            rep.ellipticity_min =
                std::min(rep.ellipticity_min, (t1 * t1.transpose() + t2 * t2.transpose())(0, 0));
        }
    }

    if (model.periodic_fast)
        rep.periodicity_ok = periodicity_err <= 1e-12 * std::max(1.0, rep.bound_max);
    rep.ellipticity_ok = rep.ellipticity_min >= opts.eps_ell;
    rep.bounded_ok = rep.bound_max <= opts.bound_limit;

    // claimed x-independence must actually hold on the sampled grid
    if (model.fast_block_x_independent || model.all_x_independent ||
        model.slow_coeffs_y_independent) {
        double dev = 0.0;
        for (int i = 0; i < opts.n_fast; i += 4) {
            const double y = model.period * i / opts.n_fast;
            const VectorXd b0 = model.b(xs[0], y);
            const double f0 = model.f(xs[0], y);
            const RowVectorXd t10 = model.tau1(xs[0], y), t20 = model.tau2(xs[0], y);
            const VectorXd c0 = model.c(xs[0], y);
            const MatrixXd s0 = model.sigma(xs[0], y);
            const double g0 = model.g(xs[0], y);
            for (size_t k = 1; k < xs.size(); k += 3) {
                dev = std::max(dev, (model.b(xs[k], y) - b0).cwiseAbs().maxCoeff());
                dev = std::max(dev, std::abs(model.f(xs[k], y) - f0));
                dev = std::max(dev, (model.tau1(xs[k], y) - t10).cwiseAbs().maxCoeff());
                dev = std::max(dev, (model.tau2(xs[k], y) - t20).cwiseAbs().maxCoeff());
                if (model.all_x_independent) {
                    dev = std::max(dev, (model.c(xs[k], y) - c0).cwiseAbs().maxCoeff());
                    dev = std::max(dev, (model.sigma(xs[k], y) - s0).cwiseAbs().maxCoeff());
                    dev = std::max(dev, std::abs(model.g(xs[k], y) - g0));
                }
            }
            if (model.slow_coeffs_y_independent) {
                dev = std::max(dev, (model.c(xs[0], y) - model.c(xs[0], 0.0)).cwiseAbs().maxCoeff());
                dev = std::max(dev, std::abs(model.g(xs[0], y) - model.g(xs[0], 0.0)));
                dev = std::max(dev,
                               (model.sigma(xs[0], y) - model.sigma(xs[0], 0.0)).cwiseAbs().maxCoeff());
                dev = std::max(dev,
                               (model.tau1(xs[0], y) - model.tau1(xs[0], 0.0)).cwiseAbs().maxCoeff());
                dev = std::max(dev,
                               (model.tau2(xs[0], y) - model.tau2(xs[0], 0.0)).cwiseAbs().maxCoeff());
            }
        }
        if (dev > 1e-12 * std::max(1.0, rep.bound_max)) {
            rep.pass = false;
            rep.detail = "model claims x-independent structure but coefficients vary with x";
            return rep;
        }
    }

    if (regime.tag == RegimeTag::R1) {
        // centering condition via the invariant measure of the frozen fast generator
        TorusGrid grid = TorusGrid::make(opts.solver_n, model.period);
        double worst = 0.0;
        for (const auto& x : xs) {
            InvariantMeasure mu = solve_invariant_measure(model, x, grid);
            VectorXd acc = VectorXd::Zero(m);
            for (int j = 0; j < grid.n; ++j)
                acc += model.b(x, grid.node(j)) * mu.density[j];
            worst = std::max(worst, (acc * grid.h).cwiseAbs().maxCoeff());
        }
        rep.centering_residual = worst;
        rep.centering_ok = worst <= opts.centering_tol;
    }

    rep.pass = rep.finite_ok && rep.ellipticity_ok && rep.bounded_ok && rep.centering_ok &&
               (rep.periodicity_ok || !model.periodic_fast);
    if (!rep.pass && rep.detail.empty()) {
        std::ostringstream os;
        if (!rep.ellipticity_ok)
            os << "ellipticity failure: min eigenvalue " << rep.ellipticity_min << " < "
               << opts.eps_ell << "; ";
        if (!rep.bounded_ok)
            os << "boundedness failure: max |coefficient| " << rep.bound_max << " > "
               << opts.bound_limit << "; ";
        if (!rep.periodicity_ok && model.periodic_fast) os << "periodicity failure; ";
        if (!rep.centering_ok)
            os << "centering residual " << rep.centering_residual << " > " << opts.centering_tol
               << "; ";
        rep.detail = os.str();
    }
    return rep;
}

} // namespace sfis
