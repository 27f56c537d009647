#pragma once

#include "meco/activation_store.hpp"
#include "meco/rng.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

namespace meco::testing {

// Scratch directory removed on scope exit.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("meco-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir & operator=(const TempDir &) = delete;
    std::filesystem::path operator/(const std::string & name) const { return path_ / name; }
    const std::filesystem::path & path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline double dot(const std::vector<double> & a, const std::vector<double> & b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// Dense reference: top eigenvector of the explicitly formed sample covariance
// of the signed difference rows, via Eigen's self-adjoint solver.
struct DenseOracle {
    std::vector<double> direction;
    double top = 0.0;
    double second = 0.0;
};

inline DenseOracle dense_oracle(const std::vector<store::ContrastivePair> & pairs) {
    const auto n = static_cast<Eigen::Index>(pairs.size());
    const auto d = static_cast<Eigen::Index>(pairs.front().plus.size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        for (Eigen::Index c = 0; c < d; ++c) {
            x(i, c) = sign * (static_cast<double>(pairs[i].plus[c]) - static_cast<double>(pairs[i].minus[c]));
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd xc = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    DenseOracle out;
    const Eigen::VectorXd v = es.eigenvectors().col(d - 1);
    out.direction.assign(v.data(), v.data() + d);
    out.top = es.eigenvalues()(d - 1);
    out.second = d > 1 ? es.eigenvalues()(d - 2) : 0.0;
    return out;
}

// Random contrastive pairs with a planted direction of strength `signal`
// and anisotropic noise, so the top eigenvalue is well separated.
inline std::vector<store::ContrastivePair> random_pairs(Rng & rng, std::size_t n, std::size_t d, double signal) {
    std::vector<double> u(d);
    double norm = 0.0;
    for (auto & x : u) {
        x = rng.normal();
        norm += x * x;
    }
    for (auto & x : u) {
        x /= std::sqrt(norm);
    }
    std::vector<store::ContrastivePair> pairs(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto & p = pairs[i];
        p.query_id = i;
        p.truncation_index = 1;
        p.ordinal = i;
        p.plus.resize(d);
        p.minus.resize(d);
        const double amp = signal * (0.5 + rng.uniform());
        for (std::size_t c = 0; c < d; ++c) {
            const double base = rng.normal();
            p.plus[c] = static_cast<float>(base + 0.5 * amp * u[c] + 0.1 * rng.normal());
            p.minus[c] = static_cast<float>(base - 0.5 * amp * u[c] + 0.1 * rng.normal());
        }
    }
    return pairs;
}

} // namespace meco::testing
