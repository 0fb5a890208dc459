#pragma once

#include <Eigen/Dense>

#include "sfis/error.hpp"

namespace sfis {

/// Uniform grid on the periodic cell [0, period). Index arithmetic is modulo n.
struct TorusGrid {
    int n = 512;
    double period = 1.0;
    double h = 1.0 / 512;

    static TorusGrid make(int n, double period);

    double node(int j) const { return wrap(j) * h; }
    int wrap(int j) const {
        int r = j % n;
        return r < 0 ? r + n : r;
    }
};

// Nodal-value helpers. All assume the vector holds samples of a periodic
// function on the grid nodes.

// 4th-order central first derivative with periodic wrap.
Eigen::VectorXd deriv4(const Eigen::VectorXd& v, double h);

// 4th-order central second derivative with periodic wrap.
Eigen::VectorXd second_deriv4(const Eigen::VectorXd& v, double h);

// Periodic trapezoid rule; spectrally accurate for smooth periodic integrands.
double trapezoid(const Eigen::VectorXd& v, double h);

// Cumulative integral F(y_j) = int_0^{y_j} v, 4th-order (integrates the local
// cubic through four neighbouring nodes over each interval). F(0) = 0.
Eigen::VectorXd cumint4(const Eigen::VectorXd& v, double h);

// Value at arbitrary y via 4-point Lagrange cubic with periodic wrap.
double interp_cubic_periodic(const Eigen::VectorXd& v, double period, double y);

} // namespace sfis
