#include "sfis/torus_grid.hpp"

#include <cmath>

namespace sfis {

TorusGrid TorusGrid::make(int n, double period) {
    if (n < 64 || (n & (n - 1)) != 0)
        throw Error(Error::Kind::Domain,
                    "grid size must be a power of two >= 64, got " + std::to_string(n));
    if (!(period > 0))
        throw Error(Error::Kind::Domain, "cell period must be positive");
    TorusGrid g;
    g.n = n;
    g.period = period;
    g.h = period / n;
    return g;
}

Eigen::VectorXd deriv4(const Eigen::VectorXd& v, double h) {
    const int n = int(v.size());
    Eigen::VectorXd d(n);
    for (int j = 0; j < n; ++j) {
        const int jm2 = (j - 2 + n) % n, jm1 = (j - 1 + n) % n;
        const int jp1 = (j + 1) % n, jp2 = (j + 2) % n;
        d[j] = (-v[jp2] + 8.0 * v[jp1] - 8.0 * v[jm1] + v[jm2]) / (12.0 * h);
    }
    return d;
}

Eigen::VectorXd second_deriv4(const Eigen::VectorXd& v, double h) {
    const int n = int(v.size());
    Eigen::VectorXd d(n);
    for (int j = 0; j < n; ++j) {
        const int jm2 = (j - 2 + n) % n, jm1 = (j - 1 + n) % n;
        const int jp1 = (j + 1) % n, jp2 = (j + 2) % n;
        d[j] = (-v[jp2] + 16.0 * v[jp1] - 30.0 * v[j] + 16.0 * v[jm1] - v[jm2]) / (12.0 * h * h);
    }
    return d;
}

double trapezoid(const Eigen::VectorXd& v, double h) { return v.sum() * h; }

Eigen::VectorXd cumint4(const Eigen::VectorXd& v, double h) {
    const int n = int(v.size());
    Eigen::VectorXd F(n);
    F[0] = 0.0;
    for (int j = 0; j + 1 < n; ++j) {
        const int jm1 = (j - 1 + n) % n, jp1 = (j + 1) % n, jp2 = (j + 2) % n;
        F[j + 1] = F[j] + h * (-v[jm1] + 13.0 * v[j] + 13.0 * v[jp1] - v[jp2]) / 24.0;
    }
    return F;
}

double interp_cubic_periodic(const Eigen::VectorXd& v, double period, double y) {
    const int n = int(v.size());
    const double h = period / n;
    double yy = std::fmod(y, period);
    if (yy < 0) yy += period;
    const int j = std::min(int(yy / h), n - 1);
    const double t = (yy - j * h) / h; // in [0,1)
    const double f0 = v[(j - 1 + n) % n], f1 = v[j], f2 = v[(j + 1) % n], f3 = v[(j + 2) % n];
    // Lagrange cubic through nodes at t = -1, 0, 1, 2
    const double c0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    const double c1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    const double c2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    const double c3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    return c0 * f0 + c1 * f1 + c2 * f2 + c3 * f3;
}

} // namespace sfis
