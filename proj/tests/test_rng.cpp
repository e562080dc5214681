#include "mcsbp/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

using mcsbp::Philox;

TEST_CASE("Philox4x32-10 known-answer vectors", "[rng]")
{
    // Reference vectors from the Random123 distribution (kat_vectors).
    using A4 = std::array<std::uint32_t, 4>;
    using A2 = std::array<std::uint32_t, 2>;
    CHECK(Philox::bijection(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox::bijection(A4{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, A2{0xffffffffu, 0xffffffffu}) ==
          A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox::bijection(A4{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, A2{0xa4093822u, 0x299f31d0u}) ==
          A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and distinct", "[rng]")
{
    Philox a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    const auto x = a(), y = b();
    CHECK(x == y);
    CHECK(c() != x);
    CHECK(d() != x);

    Philox s1 = Philox(42, 7).split(1), s2 = Philox(42, 7).split(2);
    CHECK(s1() != s2());
    // split ignores how far the parent has advanced
    Philox p(42, 7);
    for (int k = 0; k < 11; ++k)
        p();
    CHECK(p.split(3)() == Philox(42, 7).split(3)());
}

TEST_CASE("uniform_open stays inside (0, 1) with the right mean", "[rng]")
{
    Philox g(1, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k)
    {
        const double u = g.uniform_open();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // 3-sigma band for the mean of n uniforms
    CHECK(std::abs(sum / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
}
