#include <doctest.h>

#include <set>

#include "cob/rng.hpp"

TEST_CASE("rng streams are deterministic per seed") {
    cob::Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t x = a.next_u64();
        all_equal = all_equal && x == b.next_u64();
        any_diff = any_diff || x != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("next_double lies in [0,1) and is roughly uniform") {
    cob::Rng r(7);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double x = r.next_double();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        sum += x;
    }
    CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("next_below stays under the bound and hits every residue") {
    cob::Rng r(9);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const std::uint64_t x = r.next_below(7);
        REQUIRE(x < 7);
        seen.insert(x);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("derive_seed separates streams by tag") {
    const std::uint64_t s1 = cob::derive_seed(5, 1, 2, 3);
    CHECK(s1 == cob::derive_seed(5, 1, 2, 3));
    CHECK(s1 != cob::derive_seed(5, 1, 2, 4));
    CHECK(s1 != cob::derive_seed(6, 1, 2, 3));
}

TEST_CASE("uniform respects its interval") {
    cob::Rng r(11);
    for (int i = 0; i < 1000; ++i) {
        const double x = r.uniform(-0.25, 0.75);
        REQUIRE(x >= -0.25);
        REQUIRE(x < 0.75);
    }
}
