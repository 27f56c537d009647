#pragma once

#include <cmath>
#include <utility>

namespace meco::linalg {

namespace detail {

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

} // namespace detail

template <typename Apply>
PowerResult power_iteration(Apply && apply, std::vector<double> start, double tolerance, int max_iterations) {
    PowerResult out;
    const std::size_t d = start.size();
    double n0 = detail::norm2(start);
    if (n0 == 0.0) {
        return out;
    }
    for (double & x : start) {
        x /= n0;
    }
    std::vector<double> v = std::move(start);
    std::vector<double> y(d, 0.0);
    for (int it = 1; it <= max_iterations; ++it) {
        apply(std::span<const double>(v), std::span<double>(y));
        const double ny = detail::norm2(y);
        out.iterations = it;
        if (ny == 0.0) {
            out.value = 0.0;
            out.vector = v;
            return out;
        }
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            y[i] /= ny;
            dot += y[i] * v[i];
        }
        const double sign = dot < 0.0 ? -1.0 : 1.0;
        double delta = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = sign * y[i] - v[i];
            delta += diff * diff;
        }
        out.last_delta = std::sqrt(delta);
        std::swap(v, y);
        if (out.last_delta < tolerance) {
            out.converged = true;
            break;
        }
    }
    // Rayleigh quotient of the final iterate.
    apply(std::span<const double>(v), std::span<double>(y));
    double rq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        rq += v[i] * y[i];
    }
    out.value = rq;
    out.vector = std::move(v);
    return out;
}

} // namespace meco::linalg
