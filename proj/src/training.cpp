// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <string>

namespace factorfields {

std::vector<double> pixel_coords(std::size_t width, std::size_t height) {
    std::vector<double> x(2 * width * height);
    for (std::size_t j = 0; j < height; ++j)
        for (std::size_t i = 0; i < width; ++i) {
            const std::size_t p = j * width + i;
            x[2 * p] = (static_cast<double>(i) + 0.5) / static_cast<double>(width);
            x[2 * p + 1] = (static_cast<double>(j) + 0.5) / static_cast<double>(height);
        }
    return x;
}

DirectData image_data(const Image &img, const std::vector<std::uint8_t> *keep) {
    const std::size_t n = img.width * img.height;
    if (n == 0) throw std::invalid_argument("image_data: empty image");
    if (keep && keep->size() != n) throw std::invalid_argument("image_data: mask size does not match the image");
    const auto coords = pixel_coords(img.width, img.height);
    DirectData d;
    d.dims = 2;
    d.out_dim = img.channels;
    for (std::size_t p = 0; p < n; ++p) {
        if (keep && !(*keep)[p]) continue;
        d.x.push_back(coords[2 * p]);
        d.x.push_back(coords[2 * p + 1]);
        for (std::size_t c = 0; c < img.channels; ++c) d.y.push_back(std::clamp(img.values[p * img.channels + c], 0.0f, 1.0f));
    }
    return d;
}

DirectData sdf_data(const SdfSamples &s) {
    if (s.size() == 0) throw std::invalid_argument("sdf_data: no samples");
    DirectData d;
    d.dims = 3;
    d.out_dim = 1;
    d.x.assign(s.points.begin(), s.points.end());
    d.y = s.sdf;
    return d;
}

TrainingDiverged::TrainingDiverged(std::size_t step, double loss)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": loss " + std::to_string(loss)),
      step_(step) {}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_data(const ModelConfig &config, const DirectData &data) {
    if (data.size() == 0) throw std::invalid_argument("training data is empty");
    if (data.dims != config.dims)
        throw std::invalid_argument("data has " + std::to_string(data.dims) + "-D coordinates, model expects " +
                                    std::to_string(config.dims));
    if (data.out_dim != output_width(config))
        throw std::invalid_argument("data has " + std::to_string(data.out_dim) + " channels, model outputs " +
                                    std::to_string(output_width(config)));
}

/// Batch coordinates and targets; advances `rng` by exactly `batch` draws.
template <typename T>
void draw_batch(const DirectData &data, std::size_t batch, std::mt19937_64 &rng, std::vector<double> &x,
                std::vector<T> &y) {
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    x.resize(batch * data.dims);
    y.resize(batch * data.out_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t i = pick(rng);
        for (std::size_t a = 0; a < data.dims; ++a) x[b * data.dims + a] = data.x[i * data.dims + a];
        for (std::size_t c = 0; c < data.out_dim; ++c) y[b * data.out_dim + c] = static_cast<T>(data.y[i * data.out_dim + c]);
    }
}

std::optional<DropoutMask> draw_mask(const ModelConfig &config, double mu, std::mt19937_64 &rng) {
    const std::size_t k = dropout_dim(config);
    if (!(mu > 0.0) || k == 0) return std::nullopt;
    return sample_dropout_mask(k, mu, rng);
}

/// Forward, loss and backward for one signal; returns the loss.
template <typename T>
double accumulate_step(const ModelConfig &config, ModelParams<T> params, const DirectData &data,
                       const Schedule &schedule, std::mt19937_64 &rng, std::vector<double> &x, std::vector<T> &y) {
    draw_batch(data, schedule.batch, rng, x, y);
    const auto mask = draw_mask(config, schedule.mu, rng);
    Tape<T> tape;
    const auto res = forward(tape, config, params, x, schedule.batch, mask ? &*mask : nullptr);
    const auto loss = tape.mse(res.output, y);
    tape.backward(loss);
    return static_cast<double>(tape.value(loss)[0]);
}

void finish_step(TrainReport &report, std::size_t step, double loss, Clock::time_point t0,
                 const StepCallback &on_step) {
    if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);
    report.losses.push_back(loss);
    report.steps = step;
    if (on_step) on_step(step, loss, ms_since(t0));
}

}  // namespace

template <typename T>
TrainReport train_direct(const ModelConfig &config, ModelParams<T> params, const DirectData &data,
                         const Schedule &schedule, const StepCallback &on_step) {
    check_data(config, data);
    if (schedule.batch == 0) throw std::invalid_argument("batch size must be positive");
    const auto start = Clock::now();
    std::mt19937_64 rng(schedule.seed);
    AdamState<T> shared_state(schedule.adam()), local_state(schedule.adam());
    const bool split = params.shared != params.local;
    TrainReport report;
    std::vector<double> x;
    std::vector<T> y;
    for (std::size_t step = 1; step <= schedule.steps; ++step) {
        const auto t0 = Clock::now();
        zero_grads(*params.shared);
        if (split) zero_grads(*params.local);
        const double loss = accumulate_step(config, params, data, schedule, rng, x, y);
        if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);
        adam_step(shared_state, *params.shared);
        if (split) adam_step(local_state, *params.local);
        finish_step(report, step, loss, t0, on_step);
    }
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

RayBatch view_rays(std::span<const View> views, const ModelConfig &config) {
    RayBatch all;
    for (const auto &v : views) {
        RayBatch r = camera_rays(v.camera, config.contraction.bbox_min, config.contraction.bbox_max);
        r.rgb = v.rgb;
        for (std::size_t i = 0; i < r.size(); ++i) all.append(r, i);
    }
    return all;
}

template <typename T>
TrainReport train_radiance(const ModelConfig &config, ModelParams<T> params, const RayBatch &rays,
                           const Schedule &schedule, const StepCallback &on_step) {
    if (config.projection.kind != ProjectionKind::VolumeRender)
        throw std::invalid_argument("radiance training requires a volume projection");
    if (rays.size() == 0) throw std::invalid_argument("no training rays");
    if (rays.rgb.size() != 3 * rays.size()) throw std::invalid_argument("training rays need target colours");
    if (schedule.batch == 0 || schedule.ray_samples == 0)
        throw std::invalid_argument("batch size and ray samples must be positive");
    const auto start = Clock::now();
    std::mt19937_64 rng(schedule.seed);
    AdamState<T> shared_state(schedule.adam()), local_state(schedule.adam());
    const bool split = params.shared != params.local;
    const std::array<T, 3> bg{static_cast<T>(config.projection.background[0]),
                              static_cast<T>(config.projection.background[1]),
                              static_cast<T>(config.projection.background[2])};
    std::uniform_int_distribution<std::size_t> pick(0, rays.size() - 1);
    std::vector<std::size_t> which(schedule.batch);
    std::vector<T> target(3 * schedule.batch);
    TrainReport report;
    for (std::size_t step = 1; step <= schedule.steps; ++step) {
        const auto t0 = Clock::now();
        for (std::size_t b = 0; b < schedule.batch; ++b) {
            which[b] = pick(rng);
            for (int a = 0; a < 3; ++a) target[3 * b + a] = static_cast<T>(rays.rgb[3 * which[b] + a]);
        }
        const RaySamples s = sample_rays(rays, which, schedule.ray_samples, &rng);
        const auto mask = draw_mask(config, schedule.mu, rng);
        zero_grads(*params.shared);
        if (split) zero_grads(*params.local);
        Tape<T> tape;
        const std::size_t rows = s.deltas.size();
        const auto res = forward(tape, config, params, s.points, rows, mask ? &*mask : nullptr, s.dirs);
        std::vector<T> deltas(s.deltas.begin(), s.deltas.end());
        const auto rgb = tape.composite(res.density, res.rgb, std::move(deltas), schedule.ray_samples, bg);
        const auto loss_var = tape.mse(rgb, target);
        tape.backward(loss_var);
        const double loss = static_cast<double>(tape.value(loss_var)[0]);
        if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);
        adam_step(shared_state, *params.shared);
        if (split) adam_step(local_state, *params.local);
        finish_step(report, step, loss, t0, on_step);
    }
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

void check_shared_compatible(std::span<const ModelConfig> configs) {
    if (configs.empty()) throw std::invalid_argument("shared training needs at least one signal");
    const ModelConfig &ref = configs.front();
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const ModelConfig &c = configs[i];
        const std::string who = "signal " + std::to_string(i) + ": ";
        if (c.dims != ref.dims) throw std::invalid_argument(who + "dimension differs from signal 0");
        if (c.factors.size() != ref.factors.size()) throw std::invalid_argument(who + "factor count differs from signal 0");
        for (std::size_t f = 0; f < c.factors.size(); ++f) {
            if (c.factors[f].shared != ref.factors[f].shared)
                throw std::invalid_argument(who + "factor " + std::to_string(f) + " sharing differs from signal 0");
            if (c.factors[f].shared && !(c.factors[f] == ref.factors[f]))
                throw std::invalid_argument(who + "shared factor " + std::to_string(f) + " spec differs from signal 0");
            if (!c.factors[f].shared && output_dim(c.factors[f], c.dims) != output_dim(ref.factors[f], ref.dims))
                throw std::invalid_argument(who + "factor " + std::to_string(f) + " width differs from signal 0");
        }
        if (!(c.projection == ref.projection)) throw std::invalid_argument(who + "projection differs from signal 0");
        if (c.connector != ref.connector) throw std::invalid_argument(who + "connector differs from signal 0");
    }
}

template <typename T>
TrainReport train_shared(std::span<const ModelConfig> configs, ParamStore<T> &shared, std::span<ParamStore<T>> locals,
                         std::span<const DirectData> signals, const Schedule &schedule, const StepCallback &on_step) {
    if (configs.size() != signals.size() || locals.size() != signals.size())
        throw std::invalid_argument("shared training: one config and one local store per signal");
    check_shared_compatible(configs);
    for (std::size_t i = 0; i < signals.size(); ++i) check_data(configs[i], signals[i]);
    if (schedule.batch == 0) throw std::invalid_argument("batch size must be positive");
    const auto start = Clock::now();
    std::vector<std::mt19937_64> rngs;
    std::vector<AdamState<T>> local_states;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        rngs.emplace_back(schedule.seed);
        local_states.emplace_back(schedule.adam());
    }
    AdamState<T> shared_state(schedule.adam());
    TrainReport report;
    std::vector<double> x;
    std::vector<T> y;
    for (std::size_t step = 1; step <= schedule.steps; ++step) {
        const auto t0 = Clock::now();
        zero_grads(shared);
        for (auto &l : locals) zero_grads(l);
        double total = 0.0;
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const double loss =
                accumulate_step(configs[i], ModelParams<T>(shared, locals[i]), signals[i], schedule, rngs[i], x, y);
            if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);
            total += loss;
        }
        adam_step(shared_state, shared);
        for (std::size_t i = 0; i < locals.size(); ++i) adam_step(local_states[i], locals[i]);
        finish_step(report, step, total / static_cast<double>(signals.size()), t0, on_step);
    }
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

template <typename T>
void init_coefficients_from_mean(const ModelConfig &config, std::span<const ParamStore<T>> pretrained,
                                 ParamStore<T> &local) {
    if (pretrained.empty()) throw std::invalid_argument("no pretrained coefficient fields");
    for (std::size_t f = 0; f < config.factors.size(); ++f) {
        const FactorSpec &spec = config.factors[f];
        if (spec.role != FactorRole::Coefficient || spec.shared) continue;
        const std::string prefix = factor_prefix(f);
        for (auto &[name, t] : local) {
            if (name.compare(0, prefix.size(), prefix) != 0 ||
                (name.size() > prefix.size() && name[prefix.size()] != '.'))
                continue;
            std::vector<double> acc(t.size(), 0.0);
            for (const auto &p : pretrained) {
                const auto &src = p.at(name);
                if (src.shape != t.shape) throw std::invalid_argument("pretrained tensor '" + name + "' has another shape");
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(src.values[i]);
            }
            for (std::size_t i = 0; i < acc.size(); ++i)
                t.values[i] = static_cast<T>(acc[i] / static_cast<double>(pretrained.size()));
        }
    }
}

template <typename T>
std::vector<float> predict(const ModelConfig &config, ModelParams<T> params, std::span<const double> x,
                           unsigned threads) {
    const std::size_t rows = x.size() / config.dims;
    const auto v = evaluate(config, params, x, rows, {}, threads);
    return std::vector<float>(v.begin(), v.end());
}

template <typename T>
Image render_image(const ModelConfig &config, ModelParams<T> params, std::size_t width, std::size_t height,
                   unsigned threads) {
    if (config.dims != 2) throw std::invalid_argument("render_image needs a 2-D model");
    const auto coords = pixel_coords(width, height);
    Image img(width, height, output_width(config));
    img.values = predict(config, params, coords, threads);
    return img;
}

#define FF_INSTANTIATE(T)                                                                                             \
    template TrainReport train_direct<T>(const ModelConfig &, ModelParams<T>, const DirectData &, const Schedule &,  \
                                         const StepCallback &);                                                       \
    template TrainReport train_radiance<T>(const ModelConfig &, ModelParams<T>, const RayBatch &, const Schedule &,  \
                                           const StepCallback &);                                                     \
    template TrainReport train_shared<T>(std::span<const ModelConfig>, ParamStore<T> &, std::span<ParamStore<T>>,    \
                                         std::span<const DirectData>, const Schedule &, const StepCallback &);       \
    template void init_coefficients_from_mean<T>(const ModelConfig &, std::span<const ParamStore<T>>,                \
                                                 ParamStore<T> &);                                                    \
    template std::vector<float> predict<T>(const ModelConfig &, ModelParams<T>, std::span<const double>, unsigned);  \
    template Image render_image<T>(const ModelConfig &, ModelParams<T>, std::size_t, std::size_t, unsigned);

FF_INSTANTIATE(float)
FF_INSTANTIATE(double)

}  // namespace factorfields
