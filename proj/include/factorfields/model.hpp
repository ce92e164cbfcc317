// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// The full estimator: contraction, factors, connector and projection, plus the
// named presets and parameter accounting.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorfields/factors.hpp"
#include "factorfields/params.hpp"
#include "factorfields/tape.hpp"
#include "factorfields/transforms.hpp"

namespace factorfields {

enum class Connector { Hadamard, Concat };
enum class ProjectionKind { Linear, Mlp, VolumeRender };

std::string_view to_string(Connector c);
Connector parse_connector(std::string_view s);
std::string_view to_string(ProjectionKind p);
ProjectionKind parse_projection_kind(std::string_view s);

struct ProjectionSpec {
    ProjectionKind kind = ProjectionKind::Mlp;
    std::size_t out_dim = 3;  // Q; VolumeRender always emits RGB plus density
    std::size_t layers = 2;   // hidden layers (Mlp, VolumeRender)
    std::size_t width = 64;
    Activation activation = Activation::Relu;
    std::size_t view_levels = 4;  // VolumeRender view-direction encoding
    std::array<double, 3> background{1.0, 1.0, 1.0};

    bool operator==(const ProjectionSpec &) const = default;
};

struct ModelConfig {
    std::size_t dims = 2;
    std::vector<FactorSpec> factors;
    Connector connector = Connector::Hadamard;
    ProjectionSpec projection;
    ContractionSpec contraction;

    bool operator==(const ModelConfig &) const = default;
};

void validate(const ModelConfig &config);

/// Width of the combined factor features before the projection.
std::size_t feature_dim(const ModelConfig &config);
/// Channels subject to dropout: the connector output of non-raw factors.
std::size_t dropout_dim(const ModelConfig &config);
/// Projection input width, including the view encoding for VolumeRender.
std::size_t projection_input_dim(const ModelConfig &config);
std::size_t view_encoding_dim(const ProjectionSpec &p);

struct ParamCounts {
    std::size_t projection = 0;
    std::size_t coefficient = 0;
    std::size_t basis = 0;
    std::size_t other = 0;
    std::size_t total = 0;
};

ParamCounts param_count(const ModelConfig &config);

/// Tensors of shared factors and the projection live in `shared`; the rest in
/// `local`. Single-signal models point both at one store.
template <typename T>
struct ModelParams {
    ParamStore<T> *shared = nullptr;
    ParamStore<T> *local = nullptr;

    ModelParams() = default;
    explicit ModelParams(ParamStore<T> &one) : shared(&one), local(&one) {}
    ModelParams(ParamStore<T> &s, ParamStore<T> &l) : shared(&s), local(&l) {}
    ParamStore<T> &store_for(const FactorSpec &f) const { return f.shared ? *shared : *local; }
};

/// Registers and initializes every tensor of the model.
template <typename T>
void init_params(const ModelConfig &config, ModelParams<T> params, std::uint64_t seed);

/// Registers only the per-signal tensors.
template <typename T>
void init_local_params(const ModelConfig &config, ParamStore<T> &local, std::uint64_t seed);

template <typename T>
struct ForwardResult {
    typename Tape<T>::Var features;  // connector output after dropout
    typename Tape<T>::Var output;    // [rows x Q]; VolumeRender: [rows x 4] = density, r, g, b
    typename Tape<T>::Var density;   // VolumeRender only, [rows x 1]
    typename Tape<T>::Var rgb;       // VolumeRender only, [rows x 3]
};

/// Evaluates the model at `rows` world-space points (row-major). `dirs` holds
/// one unit view direction per row for VolumeRender and is ignored otherwise.
/// `mask` is applied during training only; pass nullptr to evaluate.
template <typename T>
ForwardResult<T> forward(Tape<T> &tape, const ModelConfig &config, ModelParams<T> params, std::span<const double> x,
                         std::size_t rows, const DropoutMask *mask = nullptr, std::span<const double> dirs = {});

/// Batched evaluation over frozen parameters on `threads` workers.
/// Output is [rows x Q] (VolumeRender: [rows x 4]) and independent of the
/// thread count.
template <typename T>
std::vector<T> evaluate(const ModelConfig &config, ModelParams<T> params, std::span<const double> x, std::size_t rows,
                        std::span<const double> dirs = {}, unsigned threads = 1, std::size_t chunk = 8192);

/// Output width of `forward`.
std::size_t output_width(const ModelConfig &config);

/// Knobs that shape the presets. Unset values take the defaults for `dims`.
struct PresetOptions {
    std::size_t dims = 2;
    std::optional<int> eta;
    std::optional<std::size_t> levels;
    std::optional<std::vector<double>> freqs;
    std::optional<std::size_t> coef_res;
    std::optional<std::vector<std::size_t>> basis_res;
    std::optional<double> basis_extent;
    std::optional<std::string> coef_layout;  // per_channel | per_level
    std::optional<int> table_log2;

    bool operator==(const PresetOptions &) const = default;
};

const std::vector<std::string> &preset_names();

/// Channel counts per level, [4,4,4,2,2,2] * 2^eta for six levels.
std::vector<std::size_t> default_channels(std::size_t levels, int eta);
std::vector<double> default_freqs(std::size_t levels);
/// round(linspace(32, 128, L) * extent / 1024), at least 2.
std::vector<std::size_t> default_basis_res(std::size_t levels, double extent);
int default_eta(std::size_t dims);
std::size_t default_coef_res(std::size_t dims);
double default_basis_extent(std::size_t dims);

/// Builds the named configuration. Throws listing valid names if unknown.
ModelConfig preset(std::string_view name, const PresetOptions &opts);

}  // namespace factorfields
