// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "factorfields/factors.hpp"
#include "factorfields/model.hpp"

using namespace factorfields;

namespace {

FactorSpec grid1d(std::size_t res) {
    FactorSpec f;
    f.kind = FactorKind::DenseGrid;
    f.channels = {1};
    f.res = {res};
    return f;
}

std::vector<double> eval(const FactorSpec &f, ParamStore<double> &s, const std::vector<double> &x, std::size_t dims) {
    Tape<double> t;
    auto v = eval_factor(t, f, 0, s, x, x.size() / dims, dims);
    auto out = t.value(v);
    return {out.begin(), out.end()};
}

}  // namespace

TEST_SUITE("factors") {

TEST_CASE("dense grid interpolation") {
    const auto f = grid1d(2);
    ParamStore<double> s;
    register_factor(f, 0, 1, s, 0);
    s.at("f0.g0").values = {0.0, 1.0};
    CHECK(eval(f, s, {0.25}, 1) == std::vector<double>{0.25});
    CHECK(eval(f, s, {1.0}, 1) == std::vector<double>{1.0});

    const auto g = grid1d(5);
    ParamStore<double> s5;
    register_factor(g, 0, 1, s5, 0);
    s5.at("f0.g0").values = {0.3, -0.7, 1.1, 2.5, -4.0};
    CHECK(eval(g, s5, {0.0, 0.25, 0.5, 0.75, 1.0}, 1) == std::vector<double>{0.3, -0.7, 1.1, 2.5, -4.0});
}

TEST_CASE("constant tables give constant output") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(300);
    for (auto &v : x) v = u(rng);

    FactorSpec d;
    d.kind = FactorKind::DenseGrid;
    d.channels = {2};
    d.res = {7};
    ParamStore<double> sd;
    register_factor(d, 0, 3, sd, 0);
    for (auto &v : sd.at("f0.g0").values) v = 0.625;
    for (double v : eval(d, sd, x, 3)) CHECK(v == doctest::Approx(0.625).epsilon(1e-14));

    FactorSpec h;
    h.kind = FactorKind::HashedVectors;
    h.transform.kind = TransformKind::Hashing;
    h.transform.freqs = {1.0, 2.0};
    h.transform.table_log2 = 6;
    h.channels = {2, 2};
    h.res = {16, 32};
    ParamStore<double> sh;
    register_factor(h, 0, 3, sh, 0);
    CHECK(sh.at("f0.g0").shape[0] == 64);
    for (auto &[n, t] : sh)
        for (auto &v : t.values) v = -0.25;
    for (double v : eval(h, sh, x, 3)) CHECK(v == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("collision-free hash factor equals dense grid") {
    FactorSpec h;
    h.kind = FactorKind::HashedVectors;
    h.transform.kind = TransformKind::Hashing;
    h.transform.table_log2 = 10;
    h.channels = {3};
    h.res = {10};
    FactorSpec d;
    d.kind = FactorKind::DenseGrid;
    d.channels = {3};
    d.res = {10};
    ParamStore<double> sh, sd;
    register_factor(h, 0, 3, sh, 4);
    register_factor(d, 0, 3, sd, 4);
    sd.at("f0.g0").values = sh.at("f0.g0").values;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(600);
    for (auto &v : x) v = u(rng);
    CHECK(eval(h, sh, x, 3) == eval(d, sd, x, 3));
}

TEST_CASE("mlp factor") {
    FactorSpec m;
    m.kind = FactorKind::Mlp;
    m.channels = {3};
    m.mlp_layers = 1;
    m.mlp_width = 8;
    ParamStore<double> s;
    register_factor(m, 0, 3, s, 0);
    for (auto &[n, t] : s)
        for (auto &v : t.values) v = 0.0;
    for (double v : eval(m, s, {0.1, 0.2, 0.3, 0.9, 0.8, 0.7}, 3)) CHECK(v == 0.0);

    FactorSpec id;
    id.kind = FactorKind::Mlp;
    id.channels = {3};
    id.mlp_layers = 0;
    ParamStore<double> si;
    register_factor(id, 0, 3, si, 0);
    si.at("f0.w0").values = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    si.at("f0.b0").values = {0, 0, 0};
    const std::vector<double> x{0.1, 0.2, 0.3, 0.9, 0.8, 0.7};
    CHECK(eval(id, si, x, 3) == x);
}

TEST_CASE("raw factor passes coordinates through") {
    FactorSpec r;
    r.kind = FactorKind::RawCoords;
    ParamStore<double> s;
    register_factor(r, 0, 2, s, 0);
    CHECK(s.empty());
    const std::vector<double> x{0.125, 0.5, 0.75, 1.0};
    CHECK(eval(r, s, x, 2) == x);
}

TEST_CASE("DiF output width is 18 * 2^eta") {
    for (std::size_t dims : {2u, 3u}) {
        PresetOptions o;
        o.dims = dims;
        const auto c = preset("dif_grid", o);
        const std::size_t eta = dims == 2 ? 3 : 0;
        CHECK(output_dim(c.factors[0], dims) == (18u << eta));
        CHECK(output_dim(c.factors[1], dims) == (18u << eta));
    }
}

TEST_CASE("grid continuity, locality and weight gradients") {
    FactorSpec d;
    d.kind = FactorKind::DenseGrid;
    d.channels = {2};
    d.res = {6};
    ParamStore<double> s;
    register_factor(d, 0, 2, s, 3);
    // continuity across the x = 0.4 cell boundary
    const auto a = eval(d, s, {0.4 - 1e-6, 0.33}, 2);
    const auto b = eval(d, s, {0.4 + 1e-6, 0.33}, 2);
    for (int k = 0; k < 2; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-4 * 0.1);

    // locality: node (2, 3) influences only queries within one cell of it
    auto &g = s.at("f0.g0");
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> x{u(rng), u(rng)};
        const auto before = eval(d, s, x, 2);
        g.values[(2 * 6 + 3) * 2] += 1.0;
        const auto after = eval(d, s, x, 2);
        g.values[(2 * 6 + 3) * 2] -= 1.0;
        const bool near = std::abs(x[0] * 5 - 2) < 1 && std::abs(x[1] * 5 - 3) < 1;
        if (!near) CHECK(after[0] == before[0]);
        CHECK(after[1] == before[1]);
    }

    // d output / d corner value equals the bilinear weight
    const std::vector<double> x{0.31, 0.77};
    Tape<double> t;
    auto v = eval_factor(t, d, 0, s, x, 1, 2);
    zero_grads(s);
    t.backward(t.sum(t.slice(v, 0, 1)));
    const std::size_t ext[] = {6, 6};
    const auto c = lattice_corners(x, ext);
    for (std::size_t k = 0; k < 4; ++k) CHECK(g.grad[c.index[k] * 2] == c.weight[k]);
}

TEST_CASE("orthogonal grids pair planes with the missing axis") {
    FactorSpec plane;
    plane.kind = FactorKind::DenseGrid;
    plane.transform.kind = TransformKind::Orthogonal2D;
    plane.channels = {1};
    plane.res = {2};
    FactorSpec line = plane;
    line.transform.kind = TransformKind::Orthogonal1D;
    CHECK(output_dim(plane, 3) == 3);
    CHECK(param_count(plane, 3) == 12);
    CHECK(param_count(line, 3) == 6);
    ParamStore<double> s;
    register_factor(line, 0, 3, s, 0);
    // p0 stores z, p1 y, p2 x as identity ramps
    for (int p = 0; p < 3; ++p) s.at("f0.g0.p" + std::to_string(p)).values = {0.0, 1.0};
    CHECK(eval(line, s, {0.1, 0.2, 0.3}, 3) == std::vector<double>{0.3, 0.2, 0.1});
    line.rotation = 1;
    CHECK(eval(line, s, {0.1, 0.2, 0.3}, 3) == std::vector<double>{0.2, 0.1, 0.3});
}

TEST_CASE("validation errors") {
    FactorSpec f = grid1d(1);
    CHECK_THROWS(validate(f, 2));
    FactorSpec g = grid1d(4);
    g.transform.freqs = {1.0, 2.0};
    CHECK_THROWS(validate(g, 2));
    FactorSpec h = grid1d(4);
    h.transform.kind = TransformKind::Hashing;
    CHECK_THROWS(validate(h, 2));
}

TEST_CASE("parameter counts") {
    CHECK(mlp_param_count(3, 2, 64, 1) == 3 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    FactorSpec d;
    d.kind = FactorKind::DenseGrid;
    d.channels = {4, 2};
    d.transform.kind = TransformKind::Sawtooth;
    d.transform.freqs = {2, 3};
    d.res = {5, 7};
    CHECK(param_count(d, 2) == 25 * 4 + 49 * 2);
    d.broadcast = true;
    CHECK(param_count(d, 2) == 25 + 49);
}

}  // TEST_SUITE
