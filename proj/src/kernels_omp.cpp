#include "meco/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>

namespace meco::kernels::omp {

// Each thread owns a slice of the output and walks the rows in order, adding
// into its own elements only. Every element therefore sums the same terms in
// the same order as the serial kernel.

namespace {

struct Range {
    std::size_t begin;
    std::size_t end;
};

Range my_slice(std::size_t total) {
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t per = total / nt;
    const std::size_t extra = total % nt;
    const std::size_t begin = t * per + std::min(t, extra);
    return {begin, begin + per + (t < extra ? 1 : 0)};
}

} // namespace

std::vector<double> column_mean(RowMajor x) {
    std::vector<double> mean(x.cols, 0.0);
#pragma omp parallel
    {
        const auto [c0, c1] = my_slice(x.cols);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double * row = x.data.data() + r * x.cols;
            for (std::size_t c = c0; c < c1; ++c) {
                mean[c] += row[c];
            }
        }
        for (std::size_t c = c0; c < c1; ++c) {
            mean[c] /= static_cast<double>(x.rows);
        }
    }
    return mean;
}

std::vector<double> covariance(RowMajor x, std::span<const double> mean) {
    const std::size_t d = x.cols;
    std::vector<double> cov(d * d, 0.0);
    const double denom = static_cast<double>(x.rows - 1);
#pragma omp parallel
    {
        // upper-triangle rows dealt round-robin to even out the work
        const auto t = static_cast<std::size_t>(omp_get_thread_num());
        const auto nt = static_cast<std::size_t>(omp_get_num_threads());
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double * row = x.data.data() + r * d;
            for (std::size_t i = t; i < d; i += nt) {
                const double a = row[i] - mean[i];
                double * out = cov.data() + i * d;
                for (std::size_t j = i; j < d; ++j) {
                    out[j] += a * (row[j] - mean[j]);
                }
            }
        }
        for (std::size_t i = t; i < d; i += nt) {
            for (std::size_t j = i; j < d; ++j) {
                cov[i * d + j] /= denom;
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            cov[j * d + i] = cov[i * d + j];
        }
    }
    return cov;
}

void covariance_apply(RowMajor x, std::span<const double> mean, std::span<const double> v, std::span<double> y) {
    const std::size_t d = x.cols;
    const auto n = static_cast<std::int64_t>(x.rows);
    std::vector<double> t(x.rows, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < n; ++r) {
        const double * row = x.data.data() + static_cast<std::size_t>(r) * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            acc += (row[c] - mean[c]) * v[c];
        }
        t[r] = acc;
    }
    const double denom = static_cast<double>(x.rows - 1);
#pragma omp parallel
    {
        const auto [c0, c1] = my_slice(d);
        for (std::size_t c = c0; c < c1; ++c) {
            y[c] = 0.0;
        }
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double * row = x.data.data() + r * d;
            const double tr = t[r];
            for (std::size_t c = c0; c < c1; ++c) {
                y[c] += (row[c] - mean[c]) * tr;
            }
        }
        for (std::size_t c = c0; c < c1; ++c) {
            y[c] /= denom;
        }
    }
}

std::vector<double> project(std::span<const float> vectors, std::size_t dim, std::span<const double> direction) {
    const std::size_t n = dim == 0 ? 0 : vectors.size() / dim;
    std::vector<double> scores(n, 0.0);
    const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < ni; ++i) {
        const float * v = vectors.data() + static_cast<std::size_t>(i) * dim;
        double acc = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            acc += static_cast<double>(v[c]) * direction[c];
        }
        scores[i] = acc;
    }
    return scores;
}

} // namespace meco::kernels::omp
