// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "factorfields/params.hpp"
#include "factorfields/tape.hpp"

using namespace factorfields;

TEST_SUITE("params") {

TEST_CASE("zero_grads clears learnable and frozen tensors") {
    ParamStore<double> s;
    auto &a = s.add("a", {2});
    a.grad = {0.3, -1.2};
    auto &b = s.add("b", {1}, false);
    b.grad = {5.0};
    zero_grads(s);
    CHECK(a.grad == std::vector<double>{0.0, 0.0});
    CHECK(b.grad == std::vector<double>{0.0});

    ParamStore<double> empty;
    zero_grads(empty);
    CHECK(empty.empty());
}

TEST_CASE("store rejects duplicate names and iterates sorted") {
    ParamStore<float> s;
    s.add("z", {1});
    s.add("a", {2, 3});
    CHECK_THROWS(s.add("a", {1}));
    CHECK(s.begin()->first == "a");
    CHECK(s.total_size() == 7);
    CHECK_THROWS(s.at("missing"));
}

TEST_CASE("backward of p^2 at p = 3") {
    ParamStore<double> s;
    auto &p = s.add("p", {1});
    p.values = {3.0};
    Tape<double> t;
    auto v = t.parameter(p);
    t.backward(t.sum(t.hadamard(v, v)));
    CHECK(p.grad[0] == 6.0);
}

TEST_CASE("backward of sum(c * b)") {
    ParamStore<double> s;
    auto &c = s.add("c", {2});
    auto &b = s.add("b", {2});
    c.values = {1, 2};
    b.values = {3, 4};
    Tape<double> t;
    t.backward(t.sum(t.hadamard(t.parameter(c), t.parameter(b))));
    CHECK(c.grad == std::vector<double>{3, 4});
    CHECK(b.grad == std::vector<double>{1, 2});
}

TEST_CASE("adam with zero gradient leaves values and advances step") {
    ParamStore<double> s;
    auto &p = s.add("p", {3});
    p.values = {1, -2, 3};
    AdamState<double> st;
    adam_step(st, s);
    CHECK(p.values == std::vector<double>{1, -2, 3});
    CHECK(st.step == 1);
}

TEST_CASE("adam first step moves by lr for a unit gradient") {
    ParamStore<double> s;
    auto &p = s.add("p", {1});
    p.values = {0.5};
    p.grad = {1.0};
    AdamState<double> st;
    adam_step(st, s);
    // m_hat = 1, v_hat = 1 after bias correction.
    CHECK(p.values[0] == doctest::Approx(0.5 - 0.02).epsilon(1e-12));

    const double first = 0.02;
    const double before = p.values[0];
    p.grad = {1.0};
    adam_step(st, s);
    CHECK(std::abs(before - p.values[0]) <= first * (1.0 + 1e-6));
}

TEST_CASE("adam matches a scalar recurrence") {
    ParamStore<double> s;
    auto &p = s.add("p", {1});
    p.values = {0.0};
    AdamState<double> st;
    double x = 0.0, m = 0.0, v = 0.0;
    const double g_seq[] = {0.5, -1.5, 2.0, 0.25, -0.75};
    int t = 0;
    for (double g : g_seq) {
        ++t;
        p.grad = {g};
        adam_step(st, s);
        m = 0.9 * m + 0.1 * g;
        v = 0.99 * v + 0.01 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.99, t));
        x -= 0.02 * mh / (std::sqrt(vh) + 1e-15);
        CHECK(p.values[0] == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("adam skips frozen tensors") {
    ParamStore<float> s;
    auto &p = s.add("p", {1}, false);
    p.values = {1.0f};
    p.grad = {1.0f};
    AdamState<float> st;
    adam_step(st, s);
    CHECK(p.values[0] == 1.0f);
}

TEST_CASE("adam is invariant to registration order") {
    auto run = [](bool swap) {
        ParamStore<double> s;
        if (swap) {
            s.add("b", {2});
            s.add("a", {2});
        } else {
            s.add("a", {2});
            s.add("b", {2});
        }
        s.at("a").values = {1, 2};
        s.at("b").values = {3, 4};
        AdamState<double> st;
        for (int i = 0; i < 4; ++i) {
            s.at("a").grad = {0.1 * i, -0.2};
            s.at("b").grad = {0.3, 0.05 * i};
            adam_step(st, s);
        }
        return std::make_pair(s.at("a").values, s.at("b").values);
    };
    CHECK(run(false) == run(true));
}

TEST_CASE("dropout masks") {
    std::mt19937_64 rng(1);
    const auto none = sample_dropout_mask(16, 0.0, rng);
    CHECK(none.zeros() == 0);

    std::mt19937_64 a(7), b(7);
    const auto ma = sample_dropout_mask(10000, 0.3, a);
    const auto mb = sample_dropout_mask(10000, 0.3, b);
    CHECK(ma.mask == mb.mask);
    const double frac = double(ma.zeros()) / 10000.0;
    CHECK(frac >= 0.28);
    CHECK(frac <= 0.32);

    const auto mult = ma.multipliers<double>();
    for (std::size_t i = 0; i < mult.size(); ++i) CHECK(mult[i] == (ma.mask[i] ? 1.0 / 0.7 : 0.0));
    CHECK_THROWS(sample_dropout_mask(4, 1.0, rng));
}

TEST_CASE("dct init") {
    ParamTensor<double> g("g", {4, 2});
    dct_init(g);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.values[i * 2] == 1.0);
    const double expect[] = {0.9238795325, 0.3826834324, -0.3826834324, -0.9238795325};
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.values[i * 2 + 1] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("dct frequencies are ordered by l1 norm then lexicographically") {
    const std::size_t ext[] = {3, 3};
    const auto f = dct_frequencies(ext, 6);
    const std::vector<std::vector<int>> expect{{0, 0}, {0, 1}, {1, 0}, {0, 2}, {1, 1}, {2, 0}};
    CHECK(f == expect);
    // Wraps when more channels than frequencies.
    const std::size_t one[] = {2};
    const auto w = dct_frequencies(one, 3);
    CHECK(w == std::vector<std::vector<int>>{{0}, {1}, {0}});
}

TEST_CASE("uniform init is bounded and keyed by name") {
    ParamTensor<double> a("a", {1000}), a2("a", {1000}), b("b", {1000});
    uniform_init(a, 0.1, 3);
    uniform_init(a2, 0.1, 3);
    uniform_init(b, 0.1, 3);
    CHECK(a.values == a2.values);
    CHECK(a.values != b.values);
    for (double v : a.values) CHECK(std::abs(v) <= 0.1);
}

}  // TEST_SUITE
