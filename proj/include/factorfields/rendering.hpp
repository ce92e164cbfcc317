// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, ray batches, sampling along rays and alpha compositing.
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "factorfields/io.hpp"
#include "factorfields/model.hpp"

namespace factorfields {

struct RayBatch {
    std::vector<double> origins;  // 3 per ray
    std::vector<double> dirs;     // 3 per ray, unit length
    std::vector<double> near;
    std::vector<double> far;
    std::vector<float> rgb;  // 3 per ray when targets are known

    std::size_t size() const { return near.size(); }
    void append(const RayBatch &other, std::size_t index);
};

/// Camera at `eye` looking at `target`; `fov_y` in degrees.
Camera look_at(const std::array<double, 3> &eye, const std::array<double, 3> &target, const std::array<double, 3> &up,
               std::size_t width, std::size_t height, double fov_y);

/// Entry and exit distances of a ray through an axis-aligned box, or
/// {0, 0} when the ray misses it.
std::array<double, 2> ray_box(const double *origin, const double *dir, std::span<const double> bmin,
                              std::span<const double> bmax);

/// One ray per pixel centre, row-major. near/far are clipped to the box when
/// one is given; rays missing the box get near == far.
RayBatch camera_rays(const Camera &cam, std::span<const double> bmin = {}, std::span<const double> bmax = {});

/// Sample positions along rays. Every ray gets `n` samples in equal bins of
/// [near, far]: at bin centres, or uniformly jittered within each bin when
/// `rng` is given. delta is the bin width.
struct RaySamples {
    std::vector<double> points;  // 3 per sample, ray-major
    std::vector<double> dirs;    // 3 per sample
    std::vector<double> deltas;  // 1 per sample
    std::size_t per_ray = 0;
};

RaySamples sample_rays(const RayBatch &rays, std::span<const std::size_t> which, std::size_t n,
                       std::mt19937_64 *rng);

double alpha_from_density(double sigma, double delta);

struct Composite {
    std::vector<double> rgb;       // 3 per ray
    std::vector<double> weights;   // T_i * alpha_i per sample
    std::vector<double> residual;  // T_{N+1} per ray
};

/// c = sum_i T_i alpha_i c_i + T_{N+1} background, T_i = prod_{j<i} (1 - alpha_j).
Composite composite_alpha(std::span<const double> alpha, std::span<const double> rgb, std::size_t per_ray,
                          const std::array<double, 3> &background);
Composite composite_density(std::span<const double> sigma, std::span<const double> rgb,
                            std::span<const double> deltas, std::size_t per_ray,
                            const std::array<double, 3> &background);

/// Ground-truth radiance field: density and colour at a world point.
using RadianceField = std::function<void(const double *x, double &sigma, double rgb[3])>;

/// Renders every ray of `rays` through an analytic field with midpoint samples.
std::vector<float> render_field(const RadianceField &field, const RayBatch &rays, std::size_t n_samples,
                                const std::array<double, 3> &background);

/// Renders rays through a model with a VolumeRender projection. Stratified
/// when `rng` is given, bin centres otherwise.
template <typename T>
std::vector<float> render_rays(const ModelConfig &config, ModelParams<T> params, const RayBatch &rays,
                               std::size_t n_samples, std::mt19937_64 *rng = nullptr, unsigned threads = 1);

}  // namespace factorfields
