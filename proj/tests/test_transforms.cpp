// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "factorfields/transforms.hpp"

using namespace factorfields;

TEST_SUITE("transforms") {

TEST_CASE("sawtooth") {
    CHECK(sawtooth(1.25) == 0.25);
    CHECK(sawtooth(0.0) == 0.0);
    CHECK(sawtooth(-0.25) == 0.75);
    // -1e-20 mod 1 rounds to 1.0 and must wrap to 0.
    const double s = sawtooth(-1e-20);
    CHECK(s >= 0.0);
    CHECK(s < 1.0);
}

TEST_CASE("triangular") {
    CHECK(triangular(0.5) == 1.0);
    CHECK(triangular(0.0) == 0.0);
    CHECK(triangular(1.0) == 0.0);
    CHECK(triangular(0.25) == 0.5);
}

TEST_CASE("sinusoidal and sin/cos pairs") {
    CHECK(sinusoidal(0.25) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sinusoidal(0.0) == 0.5);
    const auto p = sincos_pair(0.0);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 1.0);
}

TEST_CASE("periodic transforms have period one and stay in range") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 20000; ++i) {
        // integer shifts keep x + 1 exact when |x| < 2^52
        const double x = std::round(u(rng) * 1024.0) / 1024.0;
        CHECK(sawtooth(x + 1.0) == sawtooth(x));
        CHECK(triangular(x + 1.0) == triangular(x));
        CHECK(sinusoidal(x + 1.0) == doctest::Approx(sinusoidal(x)).epsilon(1e-9));
        for (double v : {sawtooth(x), triangular(x), sinusoidal(x)}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(sawtooth(x) < 1.0);
    }
}

TEST_CASE("pyramid") {
    TransformSpec saw{TransformKind::Sawtooth, {2.0, 4.0}};
    const double x[] = {0.3};
    const auto p = pyramid(saw, x);
    REQUIRE(p.size() == 2);
    CHECK(p[0].level == 0);
    CHECK(p[1].level == 1);
    CHECK(p[0].values[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(p[1].values[0] == doctest::Approx(0.2).epsilon(1e-12));

    TransformSpec id{TransformKind::Identity, {1.5, 3.0}};
    const double y[] = {0.2, 0.7};
    const auto q = pyramid(id, y);
    CHECK(q[0].values == std::vector<double>{0.2 * 1.5, 0.7 * 1.5});
    CHECK(q[1].values == std::vector<double>{0.2 * 3.0, 0.7 * 3.0});

    TransformSpec one{TransformKind::Sawtooth, {1.0}};
    const double z[] = {0.4375};
    CHECK(pyramid(one, z)[0].values[0] == 0.4375);

    // Level l equals the single-level transform at x * f_l.
    TransformSpec tri{TransformKind::Triangular, {2.0, 3.2, 4.4}};
    const double w[] = {0.17, 0.81};
    const auto r = pyramid(tri, w);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t a = 0; a < 2; ++a) CHECK(r[l].values[a] == triangular(w[a] * tri.freqs[l]));

    TransformSpec sc{TransformKind::SinCos, {1.0}};
    const double o[] = {0.0, 0.25};
    const auto s = pyramid(sc, o);
    CHECK(s[0].values.size() == 4);
}

TEST_CASE("transform validation") {
    CHECK_THROWS(validate(TransformSpec{TransformKind::Sawtooth, {2.0, 2.0}}));
    CHECK_THROWS(validate(TransformSpec{TransformKind::Sawtooth, {-1.0}}));
    CHECK_NOTHROW(validate(TransformSpec{TransformKind::Sawtooth, {2.0, 3.2}}));
    CHECK(parse_transform_kind("triangular") == TransformKind::Triangular);
    CHECK_THROWS(parse_transform_kind("polynomial"));
}

TEST_CASE("orthogonal projection pairing") {
    const double x[] = {0.1, 0.2, 0.3};
    const auto a = orthogonal_project(x, TransformKind::Orthogonal1D);
    CHECK(a == std::vector<std::vector<double>>{{0.3}, {0.2}, {0.1}});
    const auto b = orthogonal_project(x, TransformKind::Orthogonal2D);
    CHECK(b == std::vector<std::vector<double>>{{0.1, 0.2}, {0.1, 0.3}, {0.2, 0.3}});
    // entry k of the vector list is the axis missing from plane k
    for (int k = 0; k < 3; ++k) {
        std::set<double> all{b[k][0], b[k][1], a[k][0]};
        CHECK(all.size() == 3);
    }
}

TEST_CASE("lattice corners and hashing") {
    const std::size_t ext[] = {2, 2};
    const double mid[] = {0.5, 0.5};
    const auto c = hash_index(mid, 2, 1u << 19);
    REQUIRE(c.weight.size() == 4);
    for (double w : c.weight) CHECK(w == 0.25);

    const std::size_t ext3[] = {5, 5, 5};
    const double node[] = {0.25, 0.5, 1.0};
    const auto n = lattice_corners(node, ext3);
    int ones = 0;
    for (std::size_t i = 0; i < n.weight.size(); ++i) {
        if (n.weight[i] == 1.0) {
            ++ones;
            CHECK(n.index[i] == (1 * 5 + 2) * 5 + 4);
        } else {
            CHECK(n.weight[i] == 0.0);
        }
    }
    CHECK(ones == 1);

    // Weights sum to one; indices stay in range.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.1, 1.1);
    for (int i = 0; i < 1000; ++i) {
        const double p[] = {u(rng), u(rng)};
        const auto k = lattice_corners(p, ext);
        double s = 0.0;
        for (double w : k.weight) s += w;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
        const auto h = hash_index(p, 64, 1000);
        for (auto idx : h.index) CHECK(idx < 1000);
    }
}

TEST_CASE("collision-free hashing equals dense indexing") {
    const std::size_t ext[] = {8, 8, 8};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double p[] = {u(rng), u(rng), u(rng)};
        const auto d = lattice_corners(p, ext);
        const auto h = hash_index(p, 8, 512);
        CHECK(d.index == h.index);
        CHECK(d.weight == h.weight);
    }
}

TEST_CASE("spatial hash formula") {
    const std::uint32_t cell[] = {3, 5, 7};
    const std::uint32_t expect = (3u * 1u ^ 5u * 2654435761u ^ 7u * 805459861u) % 4096u;
    CHECK(spatial_hash(cell, 4096) == expect);
}

TEST_CASE("contraction") {
    ContractionSpec lin{ContractionMode::BoundedLinear, {0, 0}, {2, 4}};
    const double x[] = {1, 1};
    CHECK(contract(lin, x) == std::vector<double>{0.5, 0.25});

    const double inside[] = {0.3, 0.4, 0.0};
    CHECK(contract_ball(inside) == std::vector<double>{0.3, 0.4, 0.0});
    const double outside[] = {2.0, 0.0, 0.0};
    CHECK(contract_ball(outside) == std::vector<double>{1.5, 0.0, 0.0});

    ContractionSpec ball{ContractionMode::UnboundedBall, {-1, -1, -1}, {1, 1, 1}};
    double last = 0.0;
    for (double r = 0.0; r < 1e4; r = r * 1.5 + 0.01) {
        const double p[] = {r * 0.6, -r * 0.8, 0.0};
        const auto q = contract(ball, p);
        double n = 0.0;
        for (double v : q) n += (v - 0.5) * (v - 0.5);
        n = std::sqrt(n);
        CHECK(n >= last - 1e-15);
        CHECK(n <= 0.5);
        last = n;
    }
}

}  // TEST_SUITE
