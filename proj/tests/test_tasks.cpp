// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "factorfields/metrics.hpp"
#include "factorfields/rendering.hpp"
#include "factorfields/synthetic.hpp"
#include "factorfields/training.hpp"

using namespace factorfields;

namespace {

ModelConfig small_image_model(std::size_t channels = 3) {
    PresetOptions o;
    o.dims = 2;
    o.eta = 0;
    o.coef_res = 8;
    o.basis_res = std::vector<std::size_t>{4, 5, 6, 7, 8, 9};
    ModelConfig m = preset("dif_grid", o);
    m.projection.out_dim = channels;
    m.projection.width = 16;
    return m;
}

Schedule quick(std::size_t steps, std::size_t batch = 256) {
    Schedule s;
    s.steps = steps;
    s.batch = batch;
    s.seed = 11;
    return s;
}

template <typename T>
bool stores_equal(const ParamStore<T> &a, const ParamStore<T> &b) {
    if (a.tensor_count() != b.tensor_count()) return false;
    for (const auto &[name, t] : a) {
        const auto *o = b.find(name);
        if (!o || o->values != t.values) return false;
    }
    return true;
}

RayBatch single_ray(double near, double far) {
    RayBatch r;
    r.origins = {0, 0, 0};
    r.dirs = {0, 0, -1};
    r.near = {near};
    r.far = {far};
    return r;
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("psnr examples") {
    CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(psnr_from_mse(1.0) == 0.0);
    CHECK(psnr_from_mse(0.0) == 99.0);
    CHECK(psnr_from_mse(0.0, 60.0) == 60.0);
    const std::vector<float> a{0.1f, 0.5f, 0.9f};
    CHECK(psnr(a, a) == 99.0);
    const std::vector<float> zeros(4, 0.0f), ones(4, 1.0f);
    CHECK(psnr(zeros, ones) == 0.0);
    const std::vector<float> p{0.1f, 0.1f}, t{0.0f, 0.2f};
    CHECK(psnr(p, t) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("giou examples") {
    const std::vector<float> s{1, 2, -1, 3, -2, 4};
    CHECK(giou(s, s) == 1.0);
    const std::vector<float> disjoint{-1, -2, 1, -3, 2, -4};
    CHECK(giou(disjoint, s) == 0.0);
    // positive on half of the truth's positive set, nothing else
    const std::vector<float> truth{1, 1, 1, 1, -1, -1};
    const std::vector<float> half{1, 1, -1, -1, -1, -1};
    CHECK(giou(half, truth) == 0.5);
    const std::vector<float> none{-1, -1};
    CHECK(giou(none, none) == 1.0);
}

TEST_CASE("giou is symmetric and sign based") {
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n;
    std::vector<float> a(500), b(500);
    for (auto &v : a) v = n(rng);
    for (auto &v : b) v = n(rng);
    CHECK(giou(a, b) == giou(b, a));
    auto scaled = a;
    for (auto &v : scaled) v *= 37.5f;
    CHECK(giou(scaled, b) == giou(a, b));
}

TEST_CASE("compositing with zero density returns the background") {
    const std::vector<double> sigma(8, 0.0), rgb(24, 0.3), deltas(8, 0.25);
    const auto c = composite_density(sigma, rgb, deltas, 4, {0.2, 0.4, 0.6});
    CHECK(c.rgb == std::vector<double>{0.2, 0.4, 0.6, 0.2, 0.4, 0.6});
    for (double w : c.weights) CHECK(w == 0.0);
    CHECK(c.residual == std::vector<double>{1.0, 1.0});
}

TEST_CASE("one opaque sample gives its colour") {
    const std::vector<double> sigma{1e30, 0.0}, rgb{0.1, 0.7, 0.3, 0.9, 0.9, 0.9}, deltas{0.5, 0.5};
    const auto c = composite_density(sigma, rgb, deltas, 2, {1, 1, 1});
    CHECK(c.weights[0] == 1.0);
    CHECK(c.rgb == std::vector<double>{0.1, 0.7, 0.3});
    CHECK(c.residual[0] == 0.0);
}

TEST_CASE("two samples with alpha 0.5 and 1") {
    const std::vector<double> alpha{0.5, 1.0}, rgb{1, 0, 0, 0, 1, 0};
    const auto c = composite_alpha(alpha, rgb, 2, {0, 0, 0});
    CHECK(c.rgb == std::vector<double>{0.5, 0.5, 0.0});
    CHECK(c.weights == std::vector<double>{0.5, 0.5});
}

TEST_CASE("compositing conserves transmittance") {
    std::mt19937_64 rng(9);
    std::exponential_distribution<double> dens(0.3);
    std::uniform_real_distribution<double> u;
    const std::size_t rays = 200, n = 64;
    std::vector<double> sigma(rays * n), rgb(3 * rays * n), deltas(rays * n);
    for (auto &v : sigma) v = dens(rng);
    for (auto &v : rgb) v = u(rng);
    for (auto &v : deltas) v = u(rng);
    const auto c = composite_density(sigma, rgb, deltas, n, {1, 1, 1});
    for (std::size_t r = 0; r < rays; ++r) {
        double s = c.residual[r];
        for (std::size_t i = 0; i < n; ++i) s += c.weights[r * n + i];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("single-sample rendering is monotone in density") {
    const std::vector<double> rgb{0.0, 0.0, 0.0}, deltas{1.0};
    double last = 2.0;
    for (double s : {0.0, 0.1, 0.5, 1.0, 4.0, 20.0}) {
        const std::vector<double> sigma{s};
        const auto c = composite_density(sigma, rgb, deltas, 1, {1, 1, 1});
        CHECK(c.rgb[0] < last);
        last = c.rgb[0];
    }
}

TEST_CASE("alpha from density") {
    CHECK(alpha_from_density(0.0, 1.0) == 0.0);
    CHECK(alpha_from_density(2.0, 0.5) == doctest::Approx(1.0 - std::exp(-1.0)));
}

TEST_CASE("sample_rays uses equal bins") {
    const RayBatch r = single_ray(1.0, 3.0);
    const std::vector<std::size_t> which{0};
    const RaySamples mid = sample_rays(r, which, 4, nullptr);
    REQUIRE(mid.deltas.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(mid.deltas[i] == 0.5);
        CHECK(mid.points[3 * i + 2] == doctest::Approx(-(1.25 + 0.5 * static_cast<double>(i))));
        CHECK(mid.dirs[3 * i + 2] == -1.0);
    }
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const RaySamples s = sample_rays(r, which, 4, &rng);
        for (std::size_t i = 0; i < 4; ++i) {
            const double t = -s.points[3 * i + 2];
            CHECK(t >= 1.0 + 0.5 * static_cast<double>(i));
            CHECK(t <= 1.5 + 0.5 * static_cast<double>(i));
        }
    }
}

TEST_CASE("camera rays are unit length and aimed") {
    const Camera cam = look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 9, 7, 40.0);
    const RayBatch r = camera_rays(cam);
    REQUIRE(r.size() == 63);
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double n = std::hypot(r.dirs[3 * i], r.dirs[3 * i + 1], r.dirs[3 * i + 2]);
        CHECK(n == doctest::Approx(1.0).epsilon(1e-14));
    }
    const std::size_t centre = 3 * 9 + 4;
    CHECK(r.dirs[3 * centre + 2] == doctest::Approx(-1.0));
    CHECK(r.origins[3 * centre + 2] == 3.0);
    // row 0 is the top of the image
    CHECK(r.dirs[1] > 0.0);
    const std::vector<double> lo{-1, -1, -1}, hi{1, 1, 1};
    const RayBatch clipped = camera_rays(cam, lo, hi);
    CHECK(clipped.near[centre] == doctest::Approx(2.0));
    CHECK(clipped.far[centre] == doctest::Approx(4.0));
}

TEST_CASE("ray_box misses") {
    const double o[3] = {0, 5, 3}, d[3] = {0, 0, -1};
    const std::vector<double> lo{-1, -1, -1}, hi{1, 1, 1};
    const auto t = ray_box(o, d, lo, hi);
    CHECK(t[0] == t[1]);
}

TEST_CASE("analytic field renders background where empty") {
    const RayBatch r = single_ray(0.0, 1.0);
    const auto rgb = render_field([](const double *, double &s, double c[3]) { s = 0; c[0] = c[1] = c[2] = 0; }, r, 16,
                                  {0.25, 0.5, 0.75});
    CHECK(rgb == std::vector<float>{0.25f, 0.5f, 0.75f});
}

TEST_CASE("pixel centres") {
    const auto x = pixel_coords(4, 2);
    CHECK(x[0] == 0.125);
    CHECK(x[1] == 0.25);
    CHECK(x[2 * 7] == 0.875);
    CHECK(x[2 * 7 + 1] == 0.75);
}

TEST_CASE("image_data keeps unmasked pixels") {
    Image img(3, 1, 1);
    img.values = {0.1f, 0.2f, 1.5f};
    const std::vector<std::uint8_t> keep{1, 0, 1};
    const DirectData d = image_data(img, &keep);
    CHECK(d.size() == 2);
    CHECK(d.y == std::vector<float>{0.1f, 1.0f});
}

TEST_CASE("constant-zero image is fit") {
    const ModelConfig m = small_image_model(1);
    ParamStore<double> p;
    init_params(m, ModelParams<double>(p), 1);
    Image img(16, 16, 1);
    const auto report = train_direct(m, ModelParams<double>(p), image_data(img), quick(400));
    CHECK(report.final_loss() < 1e-6);
    const Image out = render_image(m, ModelParams<double>(p), 16, 16);
    CHECK(psnr(out.values, img.values) > 60.0);
    CHECK(psnr(out.values, img.values) <= 99.0);
}

TEST_CASE("training is deterministic") {
    const ModelConfig m = small_image_model();
    const DirectData d = image_data(band_limited_image(16, 3, 1, 4));
    ParamStore<float> a, b;
    init_params(m, ModelParams<float>(a), 3);
    init_params(m, ModelParams<float>(b), 3);
    const auto ra = train_direct(m, ModelParams<float>(a), d, quick(20));
    const auto rb = train_direct(m, ModelParams<float>(b), d, quick(20));
    CHECK(ra.losses == rb.losses);
    CHECK(stores_equal(a, b));
}

TEST_CASE("non-finite loss aborts") {
    const ModelConfig m = small_image_model(1);
    ParamStore<double> p;
    init_params(m, ModelParams<double>(p), 1);
    DirectData d;
    d.dims = 2;
    d.out_dim = 1;
    d.x = {0.5, 0.5};
    d.y = {std::numeric_limits<float>::quiet_NaN()};
    try {
        (void)train_direct(m, ModelParams<double>(p), d, quick(5, 4));
        FAIL("expected divergence");
    } catch (const TrainingDiverged &e) {
        CHECK(e.step() == 1);
    }
}

TEST_CASE("data shape is checked") {
    const ModelConfig m = small_image_model(3);
    ParamStore<double> p;
    init_params(m, ModelParams<double>(p), 1);
    Image gray(4, 4, 1);
    CHECK_THROWS_AS((void)train_direct(m, ModelParams<double>(p), image_data(gray), quick(1)), std::invalid_argument);
}

TEST_CASE("shared training with one signal matches direct training") {
    const ModelConfig m = small_image_model();
    const DirectData d = image_data(band_limited_image(16, 3, 2, 4));
    ParamStore<double> shared_a, local_a, shared_b, local_b, merged;
    init_params(m, ModelParams<double>(shared_a, local_a), 5);
    init_params(m, ModelParams<double>(shared_b, local_b), 5);
    init_params(m, ModelParams<double>(merged), 5);
    REQUIRE(shared_a.tensor_count() > 0);
    REQUIRE(local_a.tensor_count() > 0);

    const Schedule s = quick(30);
    const auto direct = train_direct(m, ModelParams<double>(shared_a, local_a), d, s);
    const auto one = train_direct(m, ModelParams<double>(merged), d, s);
    const std::vector<ModelConfig> configs{m};
    const std::vector<DirectData> data{d};
    std::vector<ParamStore<double>> locals{local_b};
    const auto shared = train_shared<double>(configs, shared_b, locals, data, s);
    CHECK(direct.losses == shared.losses);
    CHECK(one.losses == shared.losses);
    CHECK(stores_equal(shared_a, shared_b));
    CHECK(stores_equal(local_a, locals[0]));
    for (const auto &[name, t] : merged) {
        const auto *o = shared_b.contains(name) ? shared_b.find(name) : locals[0].find(name);
        REQUIRE(o != nullptr);
        CHECK(o->values == t.values);
    }
}

TEST_CASE("identical signals reach near-identical coefficients") {
    const ModelConfig m = small_image_model();
    const DirectData d = image_data(band_limited_image(16, 3, 4, 4));
    ParamStore<double> shared;
    std::vector<ParamStore<double>> locals(2);
    init_params(m, ModelParams<double>(shared, locals[0]), 8);
    init_local_params(m, locals[1], 8);
    Schedule s = quick(1500);
    s.mu = 0.0;
    const std::vector<ModelConfig> configs{m, m};
    const std::vector<DirectData> data{d, d};
    (void)train_shared<double>(configs, shared, locals, data, s);
    double worst = 0.0;
    for (const auto &[name, t] : locals[0]) {
        const auto &o = locals[1].at(name);
        for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(t.values[i] - o.values[i]));
    }
    CHECK(worst < 1e-2);
}

TEST_CASE("frozen shared basis stays fixed during fine-tuning") {
    const ModelConfig m = small_image_model();
    ParamStore<float> shared, local;
    init_params(m, ModelParams<float>(shared, local), 1);
    const ParamStore<float> before_shared = shared, before_local = local;
    shared.set_learnable(false);
    const DirectData d = image_data(band_limited_image(16, 3, 9, 4));
    (void)train_direct(m, ModelParams<float>(shared, local), d, quick(25));
    CHECK(stores_equal(shared, before_shared));
    CHECK_FALSE(stores_equal(local, before_local));
}

TEST_CASE("mismatched shared specs are rejected") {
    const ModelConfig a = small_image_model();
    ModelConfig b = a;
    b.factors[1].res[0] += 1;
    CHECK_THROWS_AS(check_shared_compatible(std::vector<ModelConfig>{a, b}), std::invalid_argument);
    ModelConfig c = a;
    c.projection.width = 8;
    CHECK_THROWS_AS(check_shared_compatible(std::vector<ModelConfig>{a, c}), std::invalid_argument);
    ModelConfig local_res = a;
    local_res.factors[0].res.assign(6, 5);
    CHECK_NOTHROW(check_shared_compatible(std::vector<ModelConfig>{a, local_res}));
}

TEST_CASE("mean coefficient initialization is per cell") {
    const ModelConfig m = small_image_model();
    std::vector<ParamStore<double>> pre(2);
    ParamStore<double> shared;
    init_params(m, ModelParams<double>(shared, pre[0]), 1);
    init_local_params(m, pre[1], 2);
    ParamStore<double> target;
    init_local_params(m, target, 3);
    init_coefficients_from_mean<double>(m, pre, target);
    for (const auto &[name, t] : target)
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(t.values[i] == (pre[0].at(name).values[i] + pre[1].at(name).values[i]) / 2.0);
}

TEST_CASE("zero-density scene trains toward the background") {
    PresetOptions o;
    o.dims = 3;
    o.eta = 0;
    o.coef_res = 6;
    o.basis_res = std::vector<std::size_t>{4, 4, 4, 4, 4, 4};
    ModelConfig m = preset("dif_grid", o);
    m.projection.kind = ProjectionKind::VolumeRender;
    m.projection.out_dim = 3;
    m.projection.width = 16;
    m.projection.view_levels = 1;
    m.contraction.bbox_min.assign(3, -1.0);
    m.contraction.bbox_max.assign(3, 1.0);
    std::vector<View> views(1);
    views[0].camera = look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 8, 8, 40.0);
    views[0].rgb.assign(8 * 8 * 3, 1.0f);
    const RayBatch rays = view_rays(views, m);
    ParamStore<float> p;
    init_params(m, ModelParams<float>(p), 1);
    Schedule s = quick(150, 64);
    s.ray_samples = 16;
    (void)train_radiance(m, ModelParams<float>(p), rays, s);
    const auto rgb = render_rays(m, ModelParams<float>(p), rays, 16);
    std::vector<float> white(rgb.size(), 1.0f);
    CHECK(psnr(rgb, white) > 30.0);
}

}  // TEST_SUITE
