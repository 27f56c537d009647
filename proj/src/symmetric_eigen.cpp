#include "meco/symmetric_eigen.hpp"

#include <algorithm>
#include <cmath>

namespace meco::linalg {

std::vector<EigenPair> jacobi_eigen(std::span<const double> matrix, std::size_t n) {
    std::vector<double> a(matrix.begin(), matrix.end());
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        v[i * n + i] = 1.0;
    }

    auto off_diagonal = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        return s;
    };
    double scale = 0.0;
    for (double x : a) {
        scale += x * x;
    }

    for (int sweep = 0; sweep < 100; ++sweep) {
        const double off = off_diagonal();
        if (off == 0.0 || off <= 1e-32 * scale) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) {
                    continue;
                }
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<EigenPair> pairs(n);
    for (std::size_t j = 0; j < n; ++j) {
        pairs[j].value = a[j * n + j];
        pairs[j].vector.resize(n);
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            pairs[j].vector[k] = v[k * n + j];
            norm += v[k * n + j] * v[k * n + j];
        }
        norm = std::sqrt(norm);
        for (double & x : pairs[j].vector) {
            x /= norm;
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const EigenPair & l, const EigenPair & r) { return l.value > r.value; });
    return pairs;
}

} // namespace meco::linalg
