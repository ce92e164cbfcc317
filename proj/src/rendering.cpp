// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace factorfields {

void RayBatch::append(const RayBatch &other, std::size_t i) {
    origins.insert(origins.end(), other.origins.begin() + 3 * i, other.origins.begin() + 3 * i + 3);
    dirs.insert(dirs.end(), other.dirs.begin() + 3 * i, other.dirs.begin() + 3 * i + 3);
    near.push_back(other.near[i]);
    far.push_back(other.far[i]);
    if (!other.rgb.empty()) rgb.insert(rgb.end(), other.rgb.begin() + 3 * i, other.rgb.begin() + 3 * i + 3);
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(const Vec3 &a, const Vec3 &b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3 &a, const Vec3 &b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalize(const Vec3 &a) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    if (!(n > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
    return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace

Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, std::size_t width, std::size_t height,
               double fov_y) {
    const Vec3 back = normalize(sub(eye, target));  // camera +z
    const Vec3 right = normalize(cross(up, back));
    const Vec3 cam_up = cross(back, right);
    Camera c;
    c.width = width;
    c.height = height;
    c.fy = 0.5 * static_cast<double>(height) / std::tan(0.5 * fov_y * std::numbers::pi / 180.0);
    c.fx = c.fy;
    c.cx = 0.5 * static_cast<double>(width);
    c.cy = 0.5 * static_cast<double>(height);
    for (int r = 0; r < 3; ++r) {
        c.pose[r * 4 + 0] = right[r];
        c.pose[r * 4 + 1] = cam_up[r];
        c.pose[r * 4 + 2] = back[r];
        c.pose[r * 4 + 3] = eye[r];
    }
    c.near = 0.0;
    c.far = 2.0 * std::sqrt(eye[0] * eye[0] + eye[1] * eye[1] + eye[2] * eye[2]);
    return c;
}

std::array<double, 2> ray_box(const double *o, const double *d, std::span<const double> bmin,
                              std::span<const double> bmax) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < bmin[a] || o[a] > bmax[a]) return {0.0, 0.0};
            continue;
        }
        double ta = (bmin[a] - o[a]) / d[a];
        double tb = (bmax[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) return {0.0, 0.0};
    return {t0, t1};
}

RayBatch camera_rays(const Camera &cam, std::span<const double> bmin, std::span<const double> bmax) {
    RayBatch rays;
    const std::size_t n = cam.width * cam.height;
    rays.origins.resize(3 * n);
    rays.dirs.resize(3 * n);
    rays.near.resize(n);
    rays.far.resize(n);
    const auto &P = cam.pose;
    for (std::size_t j = 0; j < cam.height; ++j)
        for (std::size_t i = 0; i < cam.width; ++i) {
            const std::size_t r = j * cam.width + i;
            const Vec3 dc{(static_cast<double>(i) + 0.5 - cam.cx) / cam.fx,
                          -(static_cast<double>(j) + 0.5 - cam.cy) / cam.fy, -1.0};
            Vec3 dw{};
            for (int a = 0; a < 3; ++a) dw[a] = P[a * 4] * dc[0] + P[a * 4 + 1] * dc[1] + P[a * 4 + 2] * dc[2];
            dw = normalize(dw);
            for (int a = 0; a < 3; ++a) {
                rays.origins[3 * r + a] = P[a * 4 + 3];
                rays.dirs[3 * r + a] = dw[a];
            }
            double nr = cam.near, fr = cam.far;
            if (!bmin.empty()) {
                const auto t = ray_box(&rays.origins[3 * r], &rays.dirs[3 * r], bmin, bmax);
                nr = std::max(nr, t[0]);
                fr = std::min(fr, t[1]);
                if (fr < nr) fr = nr;
            }
            rays.near[r] = nr;
            rays.far[r] = fr;
        }
    return rays;
}

RaySamples sample_rays(const RayBatch &rays, std::span<const std::size_t> which, std::size_t n, std::mt19937_64 *rng) {
    if (n == 0) throw std::invalid_argument("sample_rays: need at least one sample per ray");
    RaySamples s;
    s.per_ray = n;
    const std::size_t total = which.size() * n;
    s.points.resize(3 * total);
    s.dirs.resize(3 * total);
    s.deltas.resize(total);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t k = 0; k < which.size(); ++k) {
        const std::size_t r = which[k];
        const double nr = rays.near[r], fr = rays.far[r];
        const double bin = (fr - nr) / static_cast<double>(n);
        const double *o = &rays.origins[3 * r];
        const double *d = &rays.dirs[3 * r];
        for (std::size_t i = 0; i < n; ++i) {
            const double jitter = rng ? u(*rng) : 0.5;
            const double t = nr + (static_cast<double>(i) + jitter) * bin;
            const std::size_t q = k * n + i;
            for (int a = 0; a < 3; ++a) {
                s.points[3 * q + a] = o[a] + t * d[a];
                s.dirs[3 * q + a] = d[a];
            }
            s.deltas[q] = bin;
        }
    }
    return s;
}

double alpha_from_density(double sigma, double delta) { return 1.0 - std::exp(-sigma * delta); }

Composite composite_alpha(std::span<const double> alpha, std::span<const double> rgb, std::size_t per_ray,
                          const std::array<double, 3> &background) {
    if (per_ray == 0 || alpha.size() % per_ray != 0 || rgb.size() != 3 * alpha.size())
        throw std::invalid_argument("composite: sample buffers do not form whole rays");
    const std::size_t rays = alpha.size() / per_ray;
    Composite c;
    c.rgb.assign(3 * rays, 0.0);
    c.weights.resize(alpha.size());
    c.residual.resize(rays);
    for (std::size_t r = 0; r < rays; ++r) {
        double t = 1.0;
        for (std::size_t i = 0; i < per_ray; ++i) {
            const std::size_t s = r * per_ray + i;
            const double w = t * alpha[s];
            c.weights[s] = w;
            for (int a = 0; a < 3; ++a) c.rgb[3 * r + a] += w * rgb[3 * s + a];
            t *= 1.0 - alpha[s];
        }
        c.residual[r] = t;
        for (int a = 0; a < 3; ++a) c.rgb[3 * r + a] += t * background[a];
    }
    return c;
}

Composite composite_density(std::span<const double> sigma, std::span<const double> rgb, std::span<const double> deltas,
                            std::size_t per_ray, const std::array<double, 3> &background) {
    if (deltas.size() != sigma.size()) throw std::invalid_argument("composite: one delta per sample required");
    std::vector<double> alpha(sigma.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = alpha_from_density(sigma[i], deltas[i]);
    return composite_alpha(alpha, rgb, per_ray, background);
}

std::vector<float> render_field(const RadianceField &field, const RayBatch &rays, std::size_t n_samples,
                                const std::array<double, 3> &background) {
    std::vector<std::size_t> all(rays.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const RaySamples s = sample_rays(rays, all, n_samples, nullptr);
    const std::size_t total = s.deltas.size();
    std::vector<double> sigma(total), rgb(3 * total);
    for (std::size_t q = 0; q < total; ++q) field(&s.points[3 * q], sigma[q], &rgb[3 * q]);
    const Composite c = composite_density(sigma, rgb, s.deltas, n_samples, background);
    return std::vector<float>(c.rgb.begin(), c.rgb.end());
}

template <typename T>
std::vector<float> render_rays(const ModelConfig &config, ModelParams<T> params, const RayBatch &rays,
                               std::size_t n_samples, std::mt19937_64 *rng, unsigned threads) {
    if (config.projection.kind != ProjectionKind::VolumeRender)
        throw std::invalid_argument("render_rays requires a volume projection");
    std::vector<float> out;
    out.reserve(3 * rays.size());
    // Chunk rays so sample buffers stay bounded.
    const std::size_t chunk = std::max<std::size_t>(1, 65536 / n_samples);
    std::vector<std::size_t> which;
    for (std::size_t r0 = 0; r0 < rays.size(); r0 += chunk) {
        which.clear();
        for (std::size_t r = r0; r < std::min(rays.size(), r0 + chunk); ++r) which.push_back(r);
        const RaySamples s = sample_rays(rays, which, n_samples, rng);
        const std::size_t total = s.deltas.size();
        const auto v = evaluate(config, params, s.points, total, s.dirs, threads);
        std::vector<double> sigma(total), rgb(3 * total);
        for (std::size_t q = 0; q < total; ++q) {
            sigma[q] = v[4 * q];
            for (int a = 0; a < 3; ++a) rgb[3 * q + a] = v[4 * q + 1 + a];
        }
        const Composite c = composite_density(sigma, rgb, s.deltas, n_samples, config.projection.background);
        for (double x : c.rgb) out.push_back(static_cast<float>(x));
    }
    return out;
}

template std::vector<float> render_rays<float>(const ModelConfig &, ModelParams<float>, const RayBatch &, std::size_t,
                                               std::mt19937_64 *, unsigned);
template std::vector<float> render_rays<double>(const ModelConfig &, ModelParams<double>, const RayBatch &,
                                                std::size_t, std::mt19937_64 *, unsigned);

}  // namespace factorfields
