// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Coordinate transforms applied before a factor is evaluated, the multi-scale
// pyramid wrapper, lattice corner enumeration and space contraction.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factorfields {

enum class TransformKind {
    Identity,
    Sawtooth,
    Triangular,
    Sinusoidal,
    SinCos,  // (sin 2pi x, cos 2pi x) per axis, for coordinate MLPs
    Hashing,
    Orthogonal1D,
    Orthogonal2D,
};

std::string_view to_string(TransformKind k);
TransformKind parse_transform_kind(std::string_view s);

struct TransformSpec {
    TransformKind kind = TransformKind::Identity;
    std::vector<double> freqs;  // empty means a single level at f = 1
    int table_log2 = 19;        // Hashing only

    std::size_t levels() const { return freqs.empty() ? 1 : freqs.size(); }
    double freq(std::size_t level) const { return freqs.empty() ? 1.0 : freqs[level]; }
    bool operator==(const TransformSpec &) const = default;
};

/// Throws if frequencies are non-positive or not strictly increasing.
void validate(const TransformSpec &spec);

/// Values per level produced for a D-dimensional input: D for most kinds,
/// 2D for SinCos. Orthogonal kinds report the full 3-D coordinate.
std::size_t level_width(TransformKind kind, std::size_t dims);
/// Flattened pyramid width, level_width * levels.
std::size_t output_dim(const TransformSpec &spec, std::size_t dims);

double sawtooth(double x);
double triangular(double x);
double sinusoidal(double x);
std::array<double, 2> sincos_pair(double x);

/// Applies the scalar transform of `kind` to each coordinate of x * f and
/// writes level_width values. Hashing and orthogonal kinds pass x * f through.
void transform_level(TransformKind kind, std::span<const double> x, double f, std::span<double> out);

struct LevelCoords {
    std::size_t level = 0;
    std::vector<double> values;
};

/// One transformed coordinate per level, tagged with its level index.
std::vector<LevelCoords> pyramid(const TransformSpec &spec, std::span<const double> x);

/// The three sub-coordinates of a 3-D point. 1D yields (z), (y), (x); 2D
/// yields (x,y), (x,z), (y,z), so entry k of each list forms a matched pair.
std::vector<std::vector<double>> orthogonal_project(std::span<const double> x, TransformKind kind);

/// Corner lookups for multilinear interpolation on a lattice.
struct Corners {
    std::vector<std::uint32_t> index;
    std::vector<double> weight;
};

/// Corners of the cell containing x on a dense lattice with the given
/// per-axis node counts. Nodes sit at i / (M - 1); x is clamped to [0, 1].
/// Row-major indexing with the last axis fastest.
Corners lattice_corners(std::span<const double> x, std::span<const std::size_t> extents);
/// Allocation-free form writing 2^D entries into `index` and `weight`.
void lattice_corners(std::span<const double> x, std::span<const std::size_t> extents, std::uint32_t *index,
                     double *weight);

std::uint32_t spatial_hash(std::span<const std::uint32_t> cell, std::uint32_t table_size);

/// Corners for a hashed level. Lattices no larger than the table are indexed
/// densely and never collide.
Corners hash_index(std::span<const double> x, std::size_t resolution, std::size_t table_size);
void hash_index(std::span<const double> x, std::size_t resolution, std::size_t table_size, std::uint32_t *index,
                double *weight);

enum class ContractionMode { BoundedLinear, UnboundedBall };

std::string_view to_string(ContractionMode m);
ContractionMode parse_contraction_mode(std::string_view s);

struct ContractionSpec {
    ContractionMode mode = ContractionMode::BoundedLinear;
    std::vector<double> bbox_min;
    std::vector<double> bbox_max;
    bool operator==(const ContractionSpec &) const = default;
};

void validate(const ContractionSpec &spec, std::size_t dims);

/// The two-branch ball contraction on a point already centred and scaled:
/// identity inside the unit ball, (2 - 1/|x|) x/|x| outside.
std::vector<double> contract_ball(std::span<const double> x);

/// Maps a world point into the normalized domain. UnboundedBall centres and
/// scales by the bounding box, contracts into the radius-2 ball and remaps it
/// to the unit-diameter ball centred at 0.5.
std::vector<double> contract(const ContractionSpec &spec, std::span<const double> x);

}  // namespace factorfields
