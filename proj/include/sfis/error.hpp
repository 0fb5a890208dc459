#pragma once

#include <stdexcept>
#include <string>

namespace sfis {

// One exception type for the whole library; Kind tells callers what went wrong.
class Error : public std::runtime_error {
public:
    enum class Kind {
        Validation,          // model failed a standing-assumption check
        NonFinite,           // coefficient or state became non-finite
        Centering,           // centering condition violated, R1 cell problem inconsistent
        DegenerateGenerator, // adjoint null space not one-dimensional
        SpdFailure,          // effective diffusion not SPD
        Discretization,      // principal eigenfunction changed sign / grid too coarse
        InfeasibleHamiltonian, // no real root branch for the first-order cell problem
        BranchSwitch,        // no single root branch integrates to zero
        Domain,              // bad argument (gamma <= 0, wrong dimensions, ...)
        LatticeRange,        // control query outside the precomputed lattice
        Diverged,            // trajectory blew up
        Estimation,          // all paths diverged
        Solver,              // generic numerical failure
    };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Config-file problems carry a line number; the CLI maps them to exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = -1)
        : std::runtime_error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

} // namespace sfis
