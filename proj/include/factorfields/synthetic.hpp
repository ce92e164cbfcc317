// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural test signals with known ground truth: band-limited images,
// texture families built from shared periodic patterns, analytic SDF shapes
// and a small emissive radiance scene.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "factorfields/io.hpp"
#include "factorfields/rendering.hpp"

namespace factorfields {

/// Sum of random plane waves with integer frequencies up to `max_freq`
/// cycles per image side, rescaled per channel to [0.05, 0.95].
Image band_limited_image(std::size_t size, std::size_t channels, std::uint64_t seed, int max_freq = 24);

/// `count` RGB textures of size x size. Every texture mixes the same set of
/// periodic patterns with its own smooth per-channel weights, so the family
/// shares structure at fixed spatial frequencies.
std::vector<Image> texture_family(std::size_t count, std::size_t size, std::uint64_t seed);

/// Per-pixel flags, 1 for masked; exactly round(fraction * pixels) are set.
std::vector<std::uint8_t> random_pixel_mask(std::size_t pixels, double fraction, std::uint64_t seed);

enum class Shape { Sphere, Torus };

Shape parse_shape(std::string_view name);
std::string_view to_string(Shape s);

/// Half extent of the cube samples are drawn from.
inline constexpr double kSdfHalfExtent = 1.25;

/// Unit sphere, or a torus about the z axis with radii 0.8 and 0.3.
double analytic_sdf(Shape shape, const double *x);

/// `near_fraction` of the samples lie near the surface (surface point plus a
/// normal offset with standard deviation 0.01 of the box diagonal), the rest
/// are uniform in the box.
SdfSamples make_sdf_samples(Shape shape, std::size_t count, std::uint64_t seed, double near_fraction = 0.8);

/// Soft emissive ball of radius 0.6 with a smoothly varying colour.
void toy_field(const double *x, double &sigma, double rgb[3]);

struct ToyScene {
    std::vector<View> train;
    std::vector<View> test;
};

/// Views on a sphere of radius 3 around the origin, rendered from
/// `toy_field` over [-1, 1]^3 with `gt_samples` midpoint samples per ray on
/// a white background. Held-out views use directions disjoint from training.
ToyScene make_toy_scene(std::size_t train_views, std::size_t test_views, std::size_t resolution,
                        std::size_t gt_samples, std::uint64_t seed);

}  // namespace factorfields
