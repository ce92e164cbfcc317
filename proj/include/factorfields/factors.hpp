// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Factors: dense feature grids, hashed feature tables, coordinate MLPs
// and raw-coordinate pass-through, each evaluated on transformed coordinates.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorfields/params.hpp"
#include "factorfields/tape.hpp"
#include "factorfields/transforms.hpp"

namespace factorfields {

enum class FactorKind { DenseGrid, HashedVectors, Mlp, RawCoords };
enum class FactorRole { Coefficient, Basis, Other };

std::string_view to_string(FactorKind k);
FactorKind parse_factor_kind(std::string_view s);
std::string_view to_string(FactorRole r);
FactorRole parse_factor_role(std::string_view s);
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

/// A factor owns G channel groups. Group g emits channels[g] features from
/// pyramid level g, or from the single level when the transform has one.
struct FactorSpec {
    FactorKind kind = FactorKind::DenseGrid;
    TransformSpec transform;
    std::vector<std::size_t> channels;  // K_g per group
    std::vector<std::size_t> res;       // nodes per axis per group (grids, hash lattices)
    bool broadcast = false;             // grids store one channel per group, repeated K_g times
    std::size_t mlp_layers = 2;         // hidden layers
    std::size_t mlp_width = 64;
    Activation mlp_activation = Activation::Relu;
    bool mlp_per_level = false;  // one MLP per group on that group's level
    FactorRole role = FactorRole::Other;
    bool shared = false;  // reused across signals in multi-signal training
    int rotation = 0;     // orthogonal kinds: block p reads projection (p + rotation) mod 3

    bool operator==(const FactorSpec &) const = default;
};

bool is_orthogonal(const FactorSpec &spec);
std::size_t total_channels(const FactorSpec &spec);

/// Throws with a description of the first inconsistency found.
void validate(const FactorSpec &spec, std::size_t dims);

/// Feature width of the factor: sum(K) for grids, tables and MLPs, three
/// times that for orthogonal grids, the flattened pyramid for raw coords.
std::size_t output_dim(const FactorSpec &spec, std::size_t dims);

/// Stored rows of the hash table of group g.
std::size_t hash_table_rows(const FactorSpec &spec, std::size_t group, std::size_t dims);

std::size_t param_count(const FactorSpec &spec, std::size_t dims);

/// Tensor name prefix of factor `index`, "f<index>".
std::string factor_prefix(std::size_t index);

/// Adds the factor's tensors to `store` and initializes them: DCT for basis
/// dense grids, uniform(0.1) for other grids and tables, uniform(1/sqrt(fan_in))
/// for MLP layers.
template <typename T>
void register_factor(const FactorSpec &spec, std::size_t index, std::size_t dims, ParamStore<T> &store,
                     std::uint64_t seed);

/// Evaluates the factor at `rows` normalized points (row-major, `dims` values
/// each) and returns a [rows x output_dim] tape node.
template <typename T>
typename Tape<T>::Var eval_factor(Tape<T> &tape, const FactorSpec &spec, std::size_t index, ParamStore<T> &store,
                                  std::span<const double> x, std::size_t rows, std::size_t dims);

/// Records a stack of affine layers with `act` after every hidden layer and
/// identity on the output. Weights are "<prefix>.w<l>" and "<prefix>.b<l>".
template <typename T>
typename Tape<T>::Var eval_mlp(Tape<T> &tape, ParamStore<T> &store, const std::string &prefix,
                               typename Tape<T>::Var input, std::size_t layers, Activation act);

/// Adds an MLP of `hidden` layers of `width` units mapping `in` to `out`.
template <typename T>
void register_mlp(ParamStore<T> &store, const std::string &prefix, std::size_t in, std::size_t hidden,
                  std::size_t width, std::size_t out, std::uint64_t seed);

std::size_t mlp_param_count(std::size_t in, std::size_t hidden, std::size_t width, std::size_t out, bool bias = true);

}  // namespace factorfields
