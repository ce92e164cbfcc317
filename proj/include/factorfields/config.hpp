// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// key=value run configuration with [factor.N] sections.
//
//   preset=dif_grid
//   dims=2
//   eta=3
//   steps=5000
//   [factor.1]
//   transform=triangular
//
// Top-level keys select and shape a preset, override model-wide settings and
// set the training schedule. A [factor.N] section overrides fields of factor
// N of the preset; N equal to the factor count appends a new factor.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factorfields/model.hpp"

namespace factorfields {

enum class TaskKind { Image, Sdf, Radiance };

std::string_view to_string(TaskKind t);
TaskKind parse_task_kind(std::string_view s);

struct Schedule {
    double lr = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-15;
    double mu = 0.1;
    std::size_t batch = 4096;
    std::size_t steps = 5000;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t ray_samples = 512;
    double psnr_ceiling = 99.0;

    AdamConfig adam() const { return AdamConfig{lr, beta1, beta2, eps}; }
    bool operator==(const Schedule &) const = default;
};

struct RunConfig {
    std::string preset = "dif_grid";
    TaskKind task = TaskKind::Image;
    std::optional<std::size_t> dims;
    PresetOptions options;  // options.dims is filled from `dims` on resolution

    std::optional<Connector> connector;
    std::optional<ProjectionKind> projection;
    std::optional<std::size_t> proj_layers;
    std::optional<std::size_t> proj_width;
    std::optional<std::size_t> out_dim;
    std::optional<std::size_t> view_levels;
    std::optional<std::array<double, 3>> background;
    std::optional<ContractionMode> contraction;
    std::optional<std::vector<double>> bbox_min;
    std::optional<std::vector<double>> bbox_max;

    struct Setting {
        std::string value;
        std::size_t line = 0;
    };
    /// Per-factor field overrides: factor -> field -> value.
    std::map<std::size_t, std::map<std::string, Setting>> factor_overrides;

    Schedule schedule;

    std::size_t resolved_dims() const;
};

/// Error carrying the 1-based line of the offending entry (0 for overrides
/// given outside a file).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string &msg);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

RunConfig parse_config(std::string_view text);

/// Applies one setting. `key` is a top-level key or "factor.N.field".
void apply_setting(RunConfig &cfg, std::string_view key, std::string_view value, std::size_t line = 0);
/// Parses "key=value" and applies it.
void apply_override(RunConfig &cfg, std::string_view assignment);

/// Builds the model: preset, then model-wide overrides, then factor sections.
ModelConfig resolve_model(const RunConfig &cfg);

/// Canonical, fully explicit text: every schedule value, every model-wide
/// value and one complete section per resolved factor.
/// resolve_model(parse_config(serialize(c))) == resolve_model(c).
std::string serialize(const RunConfig &cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace factorfields
