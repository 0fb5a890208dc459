#include "sfis/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "sfis/error.hpp"

namespace sfis {

double romberg(const std::function<double(double)>& f, double a, double b, double tol,
               int max_level) {
    std::vector<double> row(max_level + 1), prev(max_level + 1);
    double h = b - a;
    prev[0] = 0.5 * h * (f(a) + f(b));
    for (int k = 1; k <= max_level; ++k) {
        h *= 0.5;
        const long pts = 1L << (k - 1);
        double s = 0.0;
        for (long i = 0; i < pts; ++i) s += f(a + (2 * i + 1) * h);
        row[0] = 0.5 * prev[0] + h * s;
        double p4 = 4.0;
        for (int j = 1; j <= k; ++j) {
            row[j] = row[j - 1] + (row[j - 1] - prev[j - 1]) / (p4 - 1.0);
            p4 *= 4.0;
        }
        if (k >= 4 && std::abs(row[k] - prev[k - 1]) <= tol * std::max(1.0, std::abs(row[k])))
            return row[k];
        std::swap(row, prev);
    }
    throw Error(Error::Kind::Solver, "Romberg quadrature failed to converge");
}

GaussHermite GaussHermite::make(int n) {
    if (n < 2) throw Error(Error::Kind::Domain, "Gauss-Hermite needs n >= 2");
    // Jacobi matrix for (physicists') Hermite polynomials: off-diagonals sqrt(k/2)
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double off = std::sqrt(k / 2.0);
        J(k, k - 1) = J(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussHermite gh;
    gh.nodes = es.eigenvalues();
    gh.weights.resize(n);
    const double mu0 = std::sqrt(M_PI); // int e^{-t^2} dt
    for (int i = 0; i < n; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        gh.weights[i] = mu0 * v0 * v0;
    }
    return gh;
}

} // namespace sfis
