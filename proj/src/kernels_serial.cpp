#include "meco/kernels.hpp"

namespace meco::kernels::serial {

std::vector<double> column_mean(RowMajor x) {
    std::vector<double> mean(x.cols, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            mean[c] += x.data[r * x.cols + c];
        }
    }
    for (double & m : mean) {
        m /= static_cast<double>(x.rows);
    }
    return mean;
}

std::vector<double> covariance(RowMajor x, std::span<const double> mean) {
    const std::size_t d = x.cols;
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double * row = x.data.data() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                cov[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    const double denom = static_cast<double>(x.rows - 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    return cov;
}

void covariance_apply(RowMajor x, std::span<const double> mean, std::span<const double> v, std::span<double> y) {
    const std::size_t d = x.cols;
    std::vector<double> t(x.rows, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            t[r] += (x.data[r * d + c] - mean[c]) * v[c];
        }
    }
    for (std::size_t c = 0; c < d; ++c) {
        y[c] = 0.0;
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            y[c] += (x.data[r * d + c] - mean[c]) * t[r];
        }
    }
    const double denom = static_cast<double>(x.rows - 1);
    for (std::size_t c = 0; c < d; ++c) {
        y[c] /= denom;
    }
}

std::vector<double> project(std::span<const float> vectors, std::size_t dim, std::span<const double> direction) {
    const std::size_t n = dim == 0 ? 0 : vectors.size() / dim;
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dim; ++c) {
            scores[i] += static_cast<double>(vectors[i * dim + c]) * direction[c];
        }
    }
    return scores;
}

} // namespace meco::kernels::serial
