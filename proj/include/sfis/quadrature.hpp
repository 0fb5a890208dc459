#pragma once

#include <Eigen/Dense>
#include <functional>

namespace sfis {

/// Romberg integration of f over [a, b]. Converges to tol or max_level
/// extrapolation levels; throws Error::Solver on non-convergence.
double romberg(const std::function<double(double)>& f, double a, double b,
               double tol = 1e-12, int max_level = 22);

/// Gauss-Hermite rule: int_R f(t) e^{-t^2} dt  ~=  sum w_i f(t_i).
/// Nodes/weights by Golub-Welsch on the Hermite Jacobi matrix.
struct GaussHermite {
    Eigen::VectorXd nodes, weights;
    static GaussHermite make(int n);
};

} // namespace sfis
