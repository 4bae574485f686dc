#include <doctest.h>

#include <algorithm>
#include <set>

#include "linesgd/rng.hpp"

using namespace linesgd;

TEST_CASE("splitmix64 matches the reference values") {
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(42) == 0xbdd732262feb6e95ULL);
}

TEST_CASE("same seed gives the same stream") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform01() == b.uniform01());
}

TEST_CASE("uniform01 stays in [0, 1)") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        double v = r.uniform01();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("below covers the range without bias artifacts") {
    Rng r(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        std::uint64_t v = r.below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("normal has roughly standard moments") {
    Rng r(11);
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sq / n - 1.0) < 0.03);
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
    std::vector<int> v(20), w(20);
    for (int i = 0; i < 20; ++i) v[i] = w[i] = i;
    Rng a(5), b(5);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 20; ++i) CHECK(sorted[i] == i);
}
