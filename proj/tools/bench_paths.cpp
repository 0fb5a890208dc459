// Benchmark: serial reference path loop vs the OpenMP kernel, plus a
// bit-identity check between the two.

#include <chrono>
#include <cstdio>
#include <cstring>

#include "sfis/experiments.hpp"
#include "sfis/mc_engine.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace sfis;

int main(int argc, char** argv) {
    long n_paths = 20000;
    double eps = 0.125;
    for (int i = 1; i < argc; ++i) {
        if (!std::strncmp(argv[i], "--paths=", 8)) n_paths = std::atol(argv[i] + 8);
        if (!std::strncmp(argv[i], "--eps=", 6)) eps = std::atof(argv[i] + 6);
    }

    auto model = std::make_shared<CoefficientSet>(
        build_rough_langevin(RoughLangevinSpec::cosine(1.0, 1.0, 1.0)));
    ScaleRegime regime = ScaleRegime::r1(1.5);
    SimConfig cfg = SimConfig::make(regime, eps, 0.0, 1.0, n_paths, 2024,
                                    Eigen::VectorXd::Zero(1), 0.0);
    Functional fn;
    fn.type = Functional::Type::ExpCost;
    fn.h = [](const Eigen::VectorXd& x) { return (x[0] - 1.0) * (x[0] - 1.0); };
    ControlPolicy pol = zero_control(model->kappa);

    std::printf("paths %ld, steps %ld, eps %.4g, delta %.4g\n", cfg.n_paths, cfg.n_steps(),
                cfg.epsilon, cfg.delta);

    auto t0 = std::chrono::steady_clock::now();
    EstimatorReport serial = estimate_serial(*model, cfg, pol, fn);
    const double t_serial =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-18s %8.3f s   theta_hat %.12g\n", "serial reference", t_serial,
                serial.theta_hat);

    int max_threads = 1;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif
    for (int threads = 1; threads <= max_threads; threads *= 2) {
        t0 = std::chrono::steady_clock::now();
        EstimatorReport par = estimate(*model, cfg, pol, fn, threads);
        const double t_par =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool identical = par.theta_hat == serial.theta_hat && par.q_hat == serial.q_hat &&
                               par.std_err == serial.std_err;
        std::printf("openmp %2d threads  %8.3f s   speedup %5.2fx   bit-identical %s\n", threads,
                    t_par, t_serial / t_par, identical ? "yes" : "NO");
        if (!identical) return 1;
    }
    return 0;
}
