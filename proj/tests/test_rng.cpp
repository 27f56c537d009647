#include "meco/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using meco::Rng;

TEST_CASE("engine is the standard mt19937_64") {
    // the standard pins the 10000th output of a default-seeded engine
    Rng rng(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) {
        v = rng.next();
    }
    CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("uniform uses the top 53 bits") {
    Rng rng(42);
    std::mt19937_64 ref(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u == std::ldexp(static_cast<double>(ref() >> 11), -53));
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal is Box-Muller cos branch over two uniforms") {
    Rng rng(7);
    std::mt19937_64 ref(7);
    for (int i = 0; i < 100; ++i) {
        const double u1 = std::ldexp(static_cast<double>(ref() >> 11), -53);
        const double u2 = std::ldexp(static_cast<double>(ref() >> 11), -53);
        const double expect = std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
        CHECK(rng.normal() == expect);
    }
}

TEST_CASE("normal moments") {
    Rng rng(11);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(2.0, 3.0);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
    CHECK(var == doctest::Approx(9.0).epsilon(0.02));
}

TEST_CASE("below stays in range and hits every value") {
    Rng rng(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 5000; ++i) {
        const auto v = rng.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(rng.below(1) == 0);
    CHECK(rng.below(0) == 0);
}

TEST_CASE("derive_seed is the splitmix64 output sequence") {
    // splitmix64 seeded with 0 yields 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, ...
    CHECK(meco::derive_seed(0, 0) == 0xE220A8397B1DCDAFULL);
    CHECK(meco::derive_seed(0, 1) == 0x6E789E6AA1B965F4ULL);
    CHECK(meco::derive_seed(1, 3) != meco::derive_seed(1, 4));
    CHECK(meco::derive_seed(1, 3) != meco::derive_seed(2, 3));
}

TEST_CASE("same seed, same stream") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.normal() == b.normal());
    }
}
