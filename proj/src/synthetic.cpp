// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace factorfields {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
    double kx, ky, amp, phase;
};

std::vector<Wave> random_waves(std::size_t n, int max_freq, double falloff, std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> fk(-max_freq, max_freq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Wave> w;
    while (w.size() < n) {
        const int kx = fk(rng), ky = fk(rng);
        if (kx == 0 && ky == 0) continue;
        const double k = std::hypot(kx, ky);
        w.push_back({double(kx), double(ky), (0.5 + u(rng)) / (1.0 + k / falloff), kTwoPi * u(rng)});
    }
    return w;
}

double eval_waves(const std::vector<Wave> &w, double x, double y) {
    double s = 0.0;
    for (const auto &v : w) s += v.amp * std::cos(kTwoPi * (v.kx * x + v.ky * y) + v.phase);
    return s;
}

void rescale_channels(Image &img, double lo, double hi) {
    for (std::size_t c = 0; c < img.channels; ++c) {
        float mn = INFINITY, mx = -INFINITY;
        for (std::size_t p = 0; p < img.width * img.height; ++p) {
            mn = std::min(mn, img.values[p * img.channels + c]);
            mx = std::max(mx, img.values[p * img.channels + c]);
        }
        const double span = mx > mn ? mx - mn : 1.0;
        for (std::size_t p = 0; p < img.width * img.height; ++p) {
            float &v = img.values[p * img.channels + c];
            v = static_cast<float>(lo + (hi - lo) * (v - mn) / span);
        }
    }
}

}  // namespace

Image band_limited_image(std::size_t size, std::size_t channels, std::uint64_t seed, int max_freq) {
    if (size == 0 || channels == 0 || max_freq < 1) throw std::invalid_argument("band_limited_image: bad arguments");
    std::mt19937_64 rng(seed);
    Image img(size, size, channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto waves = random_waves(96, max_freq, 6.0, rng);
        for (std::size_t j = 0; j < size; ++j)
            for (std::size_t i = 0; i < size; ++i) {
                const double x = (i + 0.5) / double(size), y = (j + 0.5) / double(size);
                img.at(i, j, c) = static_cast<float>(eval_waves(waves, x, y));
            }
    }
    rescale_channels(img, 0.05, 0.95);
    return img;
}

std::vector<Image> texture_family(std::size_t count, std::size_t size, std::uint64_t seed) {
    if (count == 0 || size == 0) throw std::invalid_argument("texture_family: bad arguments");
    // Shared patterns tile the unit square `period` times per side.
    constexpr std::array<double, 3> period{4.0, 8.0, 16.0};
    std::mt19937_64 family(seed);
    std::vector<std::vector<Wave>> patterns;
    for (std::size_t l = 0; l < period.size(); ++l) patterns.push_back(random_waves(6, 3, 2.0, family));

    std::vector<Image> out;
    for (std::size_t t = 0; t < count; ++t) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (t + 1)));
        // Smooth weights: one low-frequency field per pattern and channel.
        std::vector<std::vector<Wave>> weights;
        std::uniform_real_distribution<double> bias(-0.6, 0.6);
        std::vector<double> offsets;
        for (std::size_t k = 0; k < period.size() * 3; ++k) {
            weights.push_back(random_waves(3, 1, 1.0, rng));
            offsets.push_back(bias(rng));
        }
        Image img(size, size, 3);
        for (std::size_t j = 0; j < size; ++j)
            for (std::size_t i = 0; i < size; ++i) {
                const double x = (i + 0.5) / double(size), y = (j + 0.5) / double(size);
                for (std::size_t c = 0; c < 3; ++c) {
                    double v = 0.0;
                    for (std::size_t l = 0; l < period.size(); ++l) {
                        const double w = offsets[l * 3 + c] + 0.5 * eval_waves(weights[l * 3 + c], x, y);
                        v += w * eval_waves(patterns[l], period[l] * x, period[l] * y);
                    }
                    img.at(i, j, c) = static_cast<float>(v);
                }
            }
        rescale_channels(img, 0.05, 0.95);
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<std::uint8_t> random_pixel_mask(std::size_t pixels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("mask fraction must lie in [0, 1]");
    std::vector<std::size_t> order(pixels);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pixels)));
    std::vector<std::uint8_t> mask(pixels, 0);
    for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
    return mask;
}

Shape parse_shape(std::string_view name) {
    if (name == "sphere") return Shape::Sphere;
    if (name == "torus") return Shape::Torus;
    throw std::invalid_argument("unknown shape '" + std::string(name) + "' (expected sphere or torus)");
}

std::string_view to_string(Shape s) { return s == Shape::Sphere ? "sphere" : "torus"; }

namespace {
constexpr double kTorusMajor = 0.8;
constexpr double kTorusMinor = 0.3;
}  // namespace

double analytic_sdf(Shape shape, const double *x) {
    if (shape == Shape::Sphere) return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) - 1.0;
    const double q = std::hypot(x[0], x[1]) - kTorusMajor;
    return std::hypot(q, x[2]) - kTorusMinor;
}

SdfSamples make_sdf_samples(Shape shape, std::size_t count, std::uint64_t seed, double near_fraction) {
    if (!(near_fraction >= 0.0 && near_fraction <= 1.0)) throw std::invalid_argument("near fraction must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> box(-kSdfHalfExtent, kSdfHalfExtent);
    const double sigma = 0.01 * 2.0 * kSdfHalfExtent * std::sqrt(3.0);
    const auto n_near = static_cast<std::size_t>(std::llround(near_fraction * static_cast<double>(count)));

    SdfSamples s;
    s.points.reserve(3 * count);
    s.sdf.reserve(count);
    s.near.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double p[3];
        const bool near = i < n_near;
        if (near) {
            double surf[3], normal[3];
            if (shape == Shape::Sphere) {
                double g[3] = {gauss(rng), gauss(rng), gauss(rng)};
                const double n = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                for (int a = 0; a < 3; ++a) surf[a] = normal[a] = g[a] / n;
            } else {
                // Area-uniform on the torus: accept v with probability (R + r cos v) / (R + r).
                double th, ph;
                do {
                    th = kTwoPi * u01(rng);
                    ph = kTwoPi * u01(rng);
                } while (u01(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(ph));
                normal[0] = std::cos(ph) * std::cos(th);
                normal[1] = std::cos(ph) * std::sin(th);
                normal[2] = std::sin(ph);
                surf[0] = kTorusMajor * std::cos(th) + kTorusMinor * normal[0];
                surf[1] = kTorusMajor * std::sin(th) + kTorusMinor * normal[1];
                surf[2] = kTorusMinor * normal[2];
            }
            const double off = sigma * gauss(rng);
            for (int a = 0; a < 3; ++a) p[a] = surf[a] + off * normal[a];
        } else {
            for (double &v : p) v = box(rng);
        }
        for (double v : p) s.points.push_back(static_cast<float>(v));
        // Value at the stored (float) point.
        const double q[3] = {s.points[3 * i], s.points[3 * i + 1], s.points[3 * i + 2]};
        s.sdf.push_back(static_cast<float>(analytic_sdf(shape, q)));
        s.near.push_back(near ? 1 : 0);
    }
    // Interleave near and uniform samples so any prefix keeps the split.
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    SdfSamples out;
    out.points.resize(3 * count);
    out.sdf.resize(count);
    out.near.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (int a = 0; a < 3; ++a) out.points[3 * i + a] = s.points[3 * order[i] + a];
        out.sdf[i] = s.sdf[order[i]];
        out.near[i] = s.near[order[i]];
    }
    return out;
}

void toy_field(const double *x, double &sigma, double rgb[3]) {
    const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    sigma = 30.0 / (1.0 + std::exp(-(0.6 - r) / 0.05));
    rgb[0] = 0.5 + 0.4 * std::sin(3.0 * x[0]);
    rgb[1] = 0.5 + 0.4 * std::sin(3.0 * x[1] + 1.0);
    rgb[2] = 0.5 + 0.4 * std::sin(3.0 * x[2] + 2.0);
}

namespace {

/// Fibonacci-sphere direction i of n, rotated about z by `twist`.
std::array<double, 3> fib_dir(std::size_t i, std::size_t n, double twist) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden * static_cast<double>(i) + twist;
    return {rxy * std::cos(th), rxy * std::sin(th), z};
}

View render_toy_view(const std::array<double, 3> &dir, std::size_t res, std::size_t gt_samples) {
    constexpr double kRadius = 3.0;
    const std::array<double, 3> eye{kRadius * dir[0], kRadius * dir[1], kRadius * dir[2]};
    // Up vector away from the view axis.
    const std::array<double, 3> up = std::abs(dir[2]) > 0.9 ? std::array<double, 3>{0, 1, 0} : std::array<double, 3>{0, 0, 1};
    View v;
    v.camera = look_at(eye, {0, 0, 0}, up, res, res, 40.0);
    v.camera.near = kRadius - std::sqrt(3.0);
    v.camera.far = kRadius + std::sqrt(3.0);
    const std::vector<double> bmin{-1, -1, -1}, bmax{1, 1, 1};
    const RayBatch rays = camera_rays(v.camera, bmin, bmax);
    v.rgb = render_field(toy_field, rays, gt_samples, {1.0, 1.0, 1.0});
    return v;
}

}  // namespace

ToyScene make_toy_scene(std::size_t train_views, std::size_t test_views, std::size_t resolution,
                        std::size_t gt_samples, std::uint64_t seed) {
    if (train_views == 0 || resolution == 0 || gt_samples == 0) throw std::invalid_argument("make_toy_scene: bad arguments");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    ToyScene scene;
    const double twist = u(rng);
    for (std::size_t i = 0; i < train_views; ++i)
        scene.train.push_back(render_toy_view(fib_dir(i, train_views, twist), resolution, gt_samples));
    // Held-out directions sit on a second spiral offset by half a turn step.
    for (std::size_t i = 0; i < test_views; ++i)
        scene.test.push_back(render_toy_view(fib_dir(i, test_views, twist + 0.5 * std::numbers::pi / double(test_views) + 1.0),
                                             resolution, gt_samples));
    return scene;
}

}  // namespace factorfields
