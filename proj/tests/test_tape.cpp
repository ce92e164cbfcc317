// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "factorfields/tape.hpp"

using namespace factorfields;

namespace {

using Build = std::function<Tape<double>::Var(Tape<double> &)>;

double loss_of(const Build &b) {
    Tape<double> t;
    return t.value(b(t))[0];
}

/// Central differences on every entry of every tensor in `s`.
void check_gradients(ParamStore<double> &s, const Build &build, double tol = 1e-7) {
    zero_grads(s);
    {
        Tape<double> t;
        t.backward(build(t));
    }
    const double h = 1e-5;
    for (auto &[name, p] : s) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p.values[i];
            p.values[i] = keep + h;
            const double up = loss_of(build);
            p.values[i] = keep - h;
            const double dn = loss_of(build);
            p.values[i] = keep;
            const double num = (up - dn) / (2 * h);
            const double ana = p.grad[i];
            const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-3});
            INFO(name, "[", i, "] analytic ", ana, " numeric ", num);
            CHECK(rel < tol);
        }
    }
}

void fill(ParamTensor<double> &p, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto &v : p.values) v = u(rng);
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("linear, activations and mse") {
    std::mt19937_64 rng(1);
    for (Activation a : {Activation::Identity, Activation::Sigmoid, Activation::Softplus, Activation::Relu}) {
        ParamStore<double> s;
        auto &w = s.add("w", {4, 3});
        auto &b = s.add("b", {4});
        std::vector<double> x(15);
        for (auto &v : x) v = std::uniform_real_distribution<double>(-1, 1)(rng);
        fill(w, rng);
        fill(b, rng);
        // ReLU inputs stay away from 0
        if (a == Activation::Relu) b.values = {4.0, -4.0, 3.5, -3.5};
        const std::vector<double> target(20, 0.25);
        check_gradients(s, [&](Tape<double> &t) {
            auto in = t.constant(5, 3, x);
            auto y = t.activation(t.linear(in, w, &b), a);
            return t.mse(y, target);
        });
    }
}

TEST_CASE("linear input gradient via gather") {
    // A gather with unit weights exposes a table as an input matrix.
    std::mt19937_64 rng(2);
    ParamStore<double> s;
    auto &x = s.add("x", {4, 3});
    auto &w = s.add("w", {2, 3});
    fill(x, rng);
    fill(w, rng);
    check_gradients(s, [&](Tape<double> &t) {
        GatherLookup<double> lk;
        lk.table = &x;
        lk.table_channels = 3;
        lk.out_channels = 3;
        lk.corners = 1;
        lk.index = {0, 1, 2, 3};
        lk.weight = {1, 1, 1, 1};
        auto in = t.gather(4, 3, {lk});
        auto y = t.activation(t.linear(in, w, nullptr), Activation::Softplus);
        return t.sum(y);
    });
}

TEST_CASE("gather with broadcast and several corners") {
    std::mt19937_64 rng(3);
    ParamStore<double> s;
    auto &a = s.add("a", {5, 2});
    auto &b = s.add("b", {3, 1});
    fill(a, rng);
    fill(b, rng);
    check_gradients(s, [&](Tape<double> &t) {
        GatherLookup<double> la;
        la.table = &a;
        la.table_channels = 2;
        la.out_channels = 2;
        la.corners = 2;
        la.index = {0, 1, 4, 2, 3, 3};
        la.weight = {0.25, 0.75, 0.5, 0.5, 1.0, 0.0};
        GatherLookup<double> lb;
        lb.table = &b;
        lb.table_channels = 1;
        lb.out_channels = 2;
        lb.out_offset = 2;
        lb.corners = 1;
        lb.index = {2, 0, 1};
        lb.weight = {0.3, 0.6, 0.9};
        auto g = t.gather(3, 4, {la, lb});
        return t.mse(t.hadamard(g, g), std::vector<double>(12, 0.1));
    });
}

TEST_CASE("hadamard, concat, slice and scale_columns") {
    std::mt19937_64 rng(4);
    ParamStore<double> s;
    auto &a = s.add("a", {6});
    auto &b = s.add("b", {6});
    fill(a, rng);
    fill(b, rng);
    check_gradients(s, [&](Tape<double> &t) {
        auto av = t.parameter(a);
        auto bv = t.parameter(b);
        const Tape<double>::Var parts[] = {t.hadamard(av, bv), av};
        auto c = t.concat(parts);
        auto sl = t.slice(c, 3, 6);
        auto sc = t.scale_columns(sl, {1, 2, 0, -1, 0.5, 3});
        return t.mse(sc, std::vector<double>(6, 0.2));
    });
}

TEST_CASE("composite gradient and value") {
    std::mt19937_64 rng(5);
    ParamStore<double> s;
    auto &sig = s.add("sigma", {8});
    auto &col = s.add("rgb", {8, 3});
    fill(sig, rng, 0.0, 3.0);
    fill(col, rng, 0.0, 1.0);
    const std::vector<double> deltas{0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.3};
    auto build = [&](Tape<double> &t) {
        GatherLookup<double> ls;
        ls.table = &sig;
        ls.table_channels = 1;
        ls.out_channels = 1;
        ls.corners = 1;
        GatherLookup<double> lc;
        lc.table = &col;
        lc.table_channels = 3;
        lc.out_channels = 3;
        lc.corners = 1;
        for (std::uint32_t i = 0; i < 8; ++i) {
            ls.index.push_back(i);
            ls.weight.push_back(1.0);
            lc.index.push_back(i);
            lc.weight.push_back(1.0);
        }
        auto sv = t.gather(8, 1, {ls});
        auto cv = t.gather(8, 3, {lc});
        auto out = t.composite(sv, cv, deltas, 4, {0.2, 0.4, 0.6});
        return t.mse(out, std::vector<double>{0.1, 0.5, 0.9, 0.3, 0.3, 0.3});
    };
    check_gradients(s, build);
}

TEST_CASE("backward rejects non-scalar losses and empty tapes") {
    Tape<double> t;
    Tape<double>::Var none;
    CHECK_THROWS(t.backward(none));
    auto c = t.constant(1, 2, {1, 2});
    CHECK_THROWS(t.backward(c));
}

TEST_CASE("relu pattern records input signs") {
    ParamStore<double> s;
    auto &w = s.add("w", {2, 1});
    w.values = {1.0, -1.0};
    Tape<double> t;
    t.activation(t.linear(t.constant(1, 1, {2.0}), w, nullptr), Activation::Relu);
    CHECK(t.relu_pattern() == std::vector<std::uint8_t>{1, 0});
}

}  // TEST_SUITE
