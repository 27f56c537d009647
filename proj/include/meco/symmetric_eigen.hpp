#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace meco::linalg {

struct EigenPair {
    double value = 0.0;
    std::vector<double> vector; // unit norm
};

// Cyclic Jacobi rotation for a small dense symmetric matrix (row-major n x n).
// Returns all eigenpairs sorted by descending eigenvalue.
std::vector<EigenPair> jacobi_eigen(std::span<const double> matrix, std::size_t n);

struct PowerResult {
    std::vector<double> vector;
    double value = 0.0;
    int iterations = 0;
    double last_delta = 0.0;
    bool converged = false;
};

// Power iteration with an arbitrary symmetric PSD operator `apply(x, y)` computing y = A x.
// Converged when || v_k - v_{k-1} || < tolerance after sign alignment.
template <typename Apply>
PowerResult power_iteration(Apply && apply, std::vector<double> start, double tolerance, int max_iterations);

} // namespace meco::linalg

#include "meco/symmetric_eigen_impl.hpp"
