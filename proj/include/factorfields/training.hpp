// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Training loops: direct regression (images, SDF samples), inverse volume
// rendering from posed views, and joint training of several signals that
// share basis factors and the projection.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "factorfields/config.hpp"
#include "factorfields/io.hpp"
#include "factorfields/model.hpp"
#include "factorfields/rendering.hpp"

namespace factorfields {

/// Coordinate/target pairs for direct regression.
struct DirectData {
    std::size_t dims = 0;
    std::size_t out_dim = 0;
    std::vector<double> x;  // dims per sample
    std::vector<float> y;   // out_dim per sample

    std::size_t size() const { return out_dim == 0 ? 0 : y.size() / out_dim; }
};

/// Pixel centres ((i + 0.5) / W, (j + 0.5) / H) for a row-major W x H grid.
std::vector<double> pixel_coords(std::size_t width, std::size_t height);

/// One sample per pixel; with `keep`, only pixels whose entry is nonzero.
DirectData image_data(const Image &img, const std::vector<std::uint8_t> *keep = nullptr);
DirectData sdf_data(const SdfSamples &s);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t step, double loss);
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Called after every optimizer step with the 1-based step, loss and the
/// wall time of the step in milliseconds.
using StepCallback = std::function<void(std::size_t step, double loss, double ms)>;

struct TrainReport {
    std::vector<double> losses;  // one per step
    double seconds = 0.0;
    std::size_t steps = 0;
    double final_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

/// Minimizes MSE over random batches (with replacement) with dropout on the
/// factor product. Both stores of `params` are updated unless frozen.
template <typename T>
TrainReport train_direct(const ModelConfig &config, ModelParams<T> params, const DirectData &data,
                         const Schedule &schedule, const StepCallback &on_step = {});

/// Minimizes MSE between rendered and target colours of random rays
/// (`rays.rgb` must be set), `schedule.ray_samples` stratified samples each.
template <typename T>
TrainReport train_radiance(const ModelConfig &config, ModelParams<T> params, const RayBatch &rays,
                           const Schedule &schedule, const StepCallback &on_step = {});

/// All rays of a set of views, clipped to the model's bounding box.
RayBatch view_rays(std::span<const View> views, const ModelConfig &config);

/// Throws std::invalid_argument unless every config has the same shared
/// factors (position and spec) and the same projection.
void check_shared_compatible(std::span<const ModelConfig> configs);

/// Joint training. Every signal owns a generator seeded with `seed`, so
/// signals of equal size see the same batch indices and dropout masks.
/// Each step visits all signals in order. Shared tensors
/// accumulate gradients from every signal; `locals[i]` only from signal i.
/// `locals` must already hold initialized per-signal tensors.
template <typename T>
TrainReport train_shared(std::span<const ModelConfig> configs, ParamStore<T> &shared, std::span<ParamStore<T>> locals,
                         std::span<const DirectData> signals, const Schedule &schedule,
                         const StepCallback &on_step = {});

/// Sets every coefficient tensor of `local` to the element-wise mean of the
/// same tensor across `pretrained`.
template <typename T>
void init_coefficients_from_mean(const ModelConfig &config, std::span<const ParamStore<T>> pretrained,
                                 ParamStore<T> &local);

/// Model output at pixel centres as an image with `out_dim` channels.
template <typename T>
Image render_image(const ModelConfig &config, ModelParams<T> params, std::size_t width, std::size_t height,
                   unsigned threads = 1);

/// Model output at arbitrary points as floats.
template <typename T>
std::vector<float> predict(const ModelConfig &config, ModelParams<T> params, std::span<const double> x,
                           unsigned threads = 1);

}  // namespace factorfields
