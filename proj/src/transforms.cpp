// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace factorfields {

namespace {

struct KindName {
    TransformKind kind;
    std::string_view name;
};

constexpr KindName kKindNames[] = {
    {TransformKind::Identity, "identity"},         {TransformKind::Sawtooth, "sawtooth"},
    {TransformKind::Triangular, "triangular"},     {TransformKind::Sinusoidal, "sinusoidal"},
    {TransformKind::SinCos, "sincos"},             {TransformKind::Hashing, "hashing"},
    {TransformKind::Orthogonal1D, "orthogonal1d"}, {TransformKind::Orthogonal2D, "orthogonal2d"},
};

}  // namespace

std::string_view to_string(TransformKind k) {
    for (const auto &e : kKindNames)
        if (e.kind == k) return e.name;
    return "?";
}

TransformKind parse_transform_kind(std::string_view s) {
    for (const auto &e : kKindNames)
        if (e.name == s) return e.kind;
    throw std::invalid_argument("unknown transform '" + std::string(s) +
                                "' (expected identity, sawtooth, triangular, sinusoidal, sincos, hashing, "
                                "orthogonal1d or orthogonal2d)");
}

void validate(const TransformSpec &spec) {
    for (std::size_t i = 0; i < spec.freqs.size(); ++i) {
        if (!(spec.freqs[i] > 0.0) || !std::isfinite(spec.freqs[i]))
            throw std::invalid_argument("transform frequencies must be positive and finite");
        if (i > 0 && !(spec.freqs[i] > spec.freqs[i - 1]))
            throw std::invalid_argument("transform frequencies must be strictly increasing");
    }
    if (spec.kind == TransformKind::Hashing && (spec.table_log2 < 1 || spec.table_log2 > 30))
        throw std::invalid_argument("hash table_log2 must lie in [1, 30]");
}

std::size_t level_width(TransformKind kind, std::size_t dims) {
    return kind == TransformKind::SinCos ? 2 * dims : dims;
}

std::size_t output_dim(const TransformSpec &spec, std::size_t dims) {
    return level_width(spec.kind, dims) * spec.levels();
}

double sawtooth(double x) {
    const double r = x - std::floor(x);
    // x just below an integer can round r up to exactly 1
    return r < 1.0 ? r : 0.0;
}

double triangular(double x) { return 1.0 - 2.0 * std::abs(sawtooth(x) - 0.5); }

double sinusoidal(double x) { return 0.5 * (std::sin(2.0 * std::numbers::pi * x) + 1.0); }

std::array<double, 2> sincos_pair(double x) {
    const double a = 2.0 * std::numbers::pi * x;
    return {std::sin(a), std::cos(a)};
}

void transform_level(TransformKind kind, std::span<const double> x, double f, std::span<double> out) {
    const std::size_t d = x.size();
    if (out.size() != level_width(kind, d)) throw std::invalid_argument("transform_level: output width mismatch");
    for (std::size_t i = 0; i < d; ++i) {
        const double v = x[i] * f;
        switch (kind) {
            case TransformKind::Sawtooth: out[i] = sawtooth(v); break;
            case TransformKind::Triangular: out[i] = triangular(v); break;
            case TransformKind::Sinusoidal: out[i] = sinusoidal(v); break;
            case TransformKind::SinCos: {
                const auto p = sincos_pair(v);
                out[2 * i] = p[0];
                out[2 * i + 1] = p[1];
                break;
            }
            default: out[i] = v; break;
        }
    }
}

std::vector<LevelCoords> pyramid(const TransformSpec &spec, std::span<const double> x) {
    std::vector<LevelCoords> out(spec.levels());
    const std::size_t w = level_width(spec.kind, x.size());
    for (std::size_t l = 0; l < out.size(); ++l) {
        out[l].level = l;
        out[l].values.resize(w);
        transform_level(spec.kind, x, spec.freq(l), out[l].values);
    }
    return out;
}

std::vector<std::vector<double>> orthogonal_project(std::span<const double> x, TransformKind kind) {
    if (x.size() != 3) throw std::invalid_argument("orthogonal projection requires 3-D coordinates");
    if (kind == TransformKind::Orthogonal1D) return {{x[2]}, {x[1]}, {x[0]}};
    if (kind == TransformKind::Orthogonal2D) return {{x[0], x[1]}, {x[0], x[2]}, {x[1], x[2]}};
    throw std::invalid_argument("orthogonal_project: transform is not orthogonal");
}

void lattice_corners(std::span<const double> x, std::span<const std::size_t> extents, std::uint32_t *index,
                     double *weight) {
    const std::size_t d = x.size();
    if (extents.size() != d) throw std::invalid_argument("lattice_corners: dimension mismatch");
    if (d > 3 || d == 0) throw std::invalid_argument("lattice_corners: 1 to 3 dimensions supported");
    std::array<std::size_t, 3> lo{};
    std::array<double, 3> frac{};
    for (std::size_t i = 0; i < d; ++i) {
        if (extents[i] < 2) throw std::invalid_argument("lattice_corners: need at least 2 nodes per axis");
        const double m = static_cast<double>(extents[i] - 1);
        const double p = std::clamp(x[i], 0.0, 1.0) * m;
        std::size_t c = static_cast<std::size_t>(p);
        if (c >= extents[i] - 1) c = extents[i] - 2;
        lo[i] = c;
        frac[i] = p - static_cast<double>(c);
    }
    const std::size_t n = std::size_t{1} << d;
    for (std::size_t corner = 0; corner < n; ++corner) {
        std::size_t idx = 0;
        double w = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            const bool up = (corner >> (d - 1 - i)) & 1u;
            idx = idx * extents[i] + lo[i] + (up ? 1 : 0);
            w *= up ? frac[i] : 1.0 - frac[i];
        }
        index[corner] = static_cast<std::uint32_t>(idx);
        weight[corner] = w;
    }
}

Corners lattice_corners(std::span<const double> x, std::span<const std::size_t> extents) {
    Corners out;
    out.index.resize(std::size_t{1} << x.size());
    out.weight.resize(out.index.size());
    lattice_corners(x, extents, out.index.data(), out.weight.data());
    return out;
}

std::uint32_t spatial_hash(std::span<const std::uint32_t> cell, std::uint32_t table_size) {
    static constexpr std::uint32_t primes[3] = {1u, 2654435761u, 805459861u};
    std::uint32_t h = 0;
    for (std::size_t i = 0; i < cell.size(); ++i) h ^= cell[i] * primes[i % 3];
    return h % table_size;
}

void hash_index(std::span<const double> x, std::size_t resolution, std::size_t table_size, std::uint32_t *index,
                double *weight) {
    const std::size_t d = x.size();
    const std::array<std::size_t, 3> ext{resolution, resolution, resolution};
    lattice_corners(x, std::span<const std::size_t>(ext.data(), d), index, weight);
    std::size_t lattice = 1;
    for (std::size_t i = 0; i < d; ++i) lattice *= resolution;
    if (lattice <= table_size) return;
    std::array<std::uint32_t, 3> cell{};
    const std::size_t n = std::size_t{1} << d;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t rem = index[c];
        for (std::size_t i = d; i-- > 0;) {
            cell[i] = static_cast<std::uint32_t>(rem % resolution);
            rem /= resolution;
        }
        index[c] = spatial_hash(std::span<const std::uint32_t>(cell.data(), d), static_cast<std::uint32_t>(table_size));
    }
}

Corners hash_index(std::span<const double> x, std::size_t resolution, std::size_t table_size) {
    Corners out;
    out.index.resize(std::size_t{1} << x.size());
    out.weight.resize(out.index.size());
    hash_index(x, resolution, table_size, out.index.data(), out.weight.data());
    return out;
}

std::string_view to_string(ContractionMode m) { return m == ContractionMode::BoundedLinear ? "bounded" : "unbounded"; }

ContractionMode parse_contraction_mode(std::string_view s) {
    if (s == "bounded") return ContractionMode::BoundedLinear;
    if (s == "unbounded") return ContractionMode::UnboundedBall;
    throw std::invalid_argument("unknown contraction '" + std::string(s) + "' (expected bounded or unbounded)");
}

void validate(const ContractionSpec &spec, std::size_t dims) {
    if (spec.bbox_min.size() != dims || spec.bbox_max.size() != dims)
        throw std::invalid_argument("bounding box must have " + std::to_string(dims) + " components");
    for (std::size_t i = 0; i < dims; ++i)
        if (!(spec.bbox_max[i] > spec.bbox_min[i]))
            throw std::invalid_argument("bounding box max must exceed min on every axis");
}

std::vector<double> contract_ball(std::span<const double> x) {
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    std::vector<double> out(x.begin(), x.end());
    if (n2 <= 1.0) return out;
    const double n = std::sqrt(n2);
    const double s = (2.0 - 1.0 / n) / n;
    for (double &v : out) v *= s;
    return out;
}

std::vector<double> contract(const ContractionSpec &spec, std::span<const double> x) {
    const std::size_t d = x.size();
    std::vector<double> out(d);
    if (spec.mode == ContractionMode::BoundedLinear) {
        for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - spec.bbox_min[i]) / (spec.bbox_max[i] - spec.bbox_min[i]);
        return out;
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double c = 0.5 * (spec.bbox_min[i] + spec.bbox_max[i]);
        const double h = 0.5 * (spec.bbox_max[i] - spec.bbox_min[i]);
        out[i] = (x[i] - c) / h;
    }
    out = contract_ball(out);
    for (double &v : out) v = 0.5 + 0.25 * v;
    return out;
}

}  // namespace factorfields
