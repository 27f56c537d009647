#pragma once

// Data-parallel inner loops used by probe fitting and scoring.
//
// Every kernel exists twice: `serial` is the straightforward reference kept
// for testing, `omp` is the OpenMP version used by the library. Each output
// element is accumulated in the same order in both, so results are bitwise
// identical regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

namespace meco::kernels {

// Row-major n x d block of doubles.
struct RowMajor {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

namespace serial {

std::vector<double> column_mean(RowMajor x);

// Sample covariance (divided by n - 1) of the rows of x around `mean`, d x d row-major.
std::vector<double> covariance(RowMajor x, std::span<const double> mean);

// y = C v with C the sample covariance of x, without forming C.
void covariance_apply(RowMajor x, std::span<const double> mean, std::span<const double> v, std::span<double> y);

// scores[i] = <vectors[i], direction>, vectors stored n x d as float32.
std::vector<double> project(std::span<const float> vectors, std::size_t dim, std::span<const double> direction);

} // namespace serial

namespace omp {

std::vector<double> column_mean(RowMajor x);
std::vector<double> covariance(RowMajor x, std::span<const double> mean);
void covariance_apply(RowMajor x, std::span<const double> mean, std::span<const double> v, std::span<double> y);
std::vector<double> project(std::span<const float> vectors, std::size_t dim, std::span<const double> direction);

} // namespace omp

} // namespace meco::kernels
