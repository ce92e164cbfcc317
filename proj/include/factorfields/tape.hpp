// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// A recording tape over the fixed set of batched operations a factor-field
// model is built from. Every node holds a row-major [rows x cols] value
// matrix; `backward` replays the tape in reverse with closed-form rules.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "factorfields/params.hpp"

namespace factorfields {

enum class Activation { Identity, Relu, Sigmoid, Softplus };

/// Weighted row lookup into a parameter table, written into a column range
/// of a gather node. Used for dense grids, hash tables and orthogonal planes.
template <typename T>
struct GatherLookup {
    ParamTensor<T> *table = nullptr;
    std::size_t table_channels = 0;   // values per table row
    std::size_t out_offset = 0;       // first output column
    std::size_t out_channels = 0;     // table_channels, or a broadcast of a 1-channel table
    std::size_t corners = 0;          // lookups per query row
    std::vector<std::uint32_t> index; // rows * corners
    std::vector<T> weight;            // rows * corners
};

template <typename T>
class Tape {
public:
    struct Var {
        std::size_t id = std::numeric_limits<std::size_t>::max();
        bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
    };

    Var constant(std::size_t rows, std::size_t cols, std::vector<T> values);
    /// Leaf bound to a parameter tensor, shaped [1 x size].
    Var parameter(ParamTensor<T> &p);
    Var gather(std::size_t rows, std::size_t cols, std::vector<GatherLookup<T>> lookups);
    /// y = x W^T + b with W shaped [out, in] and optional bias [out].
    Var linear(Var x, ParamTensor<T> &weight, ParamTensor<T> *bias);
    Var activation(Var x, Activation a);
    Var hadamard(Var a, Var b);
    Var concat(std::span<const Var> parts);
    Var slice(Var x, std::size_t col_begin, std::size_t col_count);
    /// Multiplies column j of every row by multipliers[j].
    Var scale_columns(Var x, std::vector<T> multipliers);
    Var sum(Var x);
    /// Mean over all elements of (pred - target)^2.
    Var mse(Var pred, std::span<const T> target);
    /// Alpha compositing of `samples_per_ray` consecutive rows per ray.
    /// density is [R*S x 1], rgb is [R*S x 3], deltas has R*S entries.
    Var composite(Var density, Var rgb, std::vector<T> deltas, std::size_t samples_per_ray,
                  std::array<T, 3> background);

    std::size_t rows(Var v) const { return node(v).rows; }
    std::size_t cols(Var v) const { return node(v).cols; }
    std::span<const T> value(Var v) const { return node(v).value; }
    std::span<const T> grad(Var v) const { return node(v).grad; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    /// Accumulates d(loss)/d(values) into the grad buffer of every learnable
    /// parameter reachable from `loss`. Throws if `loss` is not a recorded
    /// scalar node of this tape.
    void backward(Var loss);

    /// Sign of every ReLU input on the tape, in recording order. Two forward
    /// passes with equal patterns lie on the same linear piece of every ReLU.
    std::vector<std::uint8_t> relu_pattern() const;

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
        std::size_t relu_input = std::numeric_limits<std::size_t>::max();
        std::function<void(Tape &, std::size_t self)> back;
    };

    Var push(Node n);
    const Node &node(Var v) const;
    Node &node(Var v);

    std::vector<Node> nodes_;
};

}  // namespace factorfields
