// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "factorfields/config.hpp"
#include "factorfields/io.hpp"
#include "factorfields/metrics.hpp"
#include "factorfields/model.hpp"
#include "factorfields/rendering.hpp"
#include "factorfields/synthetic.hpp"
#include "factorfields/training.hpp"

namespace factorfields {

namespace {

namespace fs = std::filesystem;
using Real = float;

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    unsigned threads = 1;
};

void add_common(CLI::App *cmd, Common &c, bool training) {
    cmd->add_option("--config", c.config_path, "key=value configuration file");
    cmd->add_option("--set", c.sets, "override key=value, applied after the file (repeatable)");
    if (training) {
        cmd->add_option("--seed", c.seed, "random seed (default 0)");
        cmd->add_option("--out", c.out_dir, "output directory");
    }
    cmd->add_option("--threads", c.threads, "worker threads for batch evaluation")->check(CLI::PositiveNumber);
}

RunConfig load_run_config(const Common &c, std::optional<TaskKind> task) {
    RunConfig cfg;
    if (!c.config_path.empty()) {
        const auto bytes = read_file(c.config_path);
        try {
            cfg = parse_config(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
        } catch (const ConfigError &e) {
            throw ConfigError(e.line(), c.config_path + ": " + e.what());
        }
    }
    if (task) cfg.task = *task;
    for (const auto &s : c.sets) apply_override(cfg, s);
    if (c.seed) cfg.schedule.seed = *c.seed;
    return cfg;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

fs::path prepare_out(const std::string &dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

/// Runs the training loop callback into the metric log.
StepCallback log_steps(MetricLog &log, const Schedule &s) {
    return [&log, &s](std::size_t step, double loss, double ms) {
        if (step % std::max<std::size_t>(1, s.log_every) == 0 || step == s.steps) log.step(step, loss, ms);
    };
}

std::string summary(const std::string &cmd, const FinalMetrics &m) {
    std::string line = cmd;
    if (m.psnr) line += " psnr=" + fmt(*m.psnr);
    if (m.giou) line += " giou=" + fmt(*m.giou, 6);
    if (m.masked_psnr) line += " masked_psnr=" + fmt(*m.masked_psnr);
    line += " loss=" + format_double(m.loss) + " steps=" + std::to_string(m.steps) + " seconds=" + fmt(m.seconds, 2) +
            " params=" + std::to_string(m.params.total);
    return line;
}

// ---------------------------------------------------------------------------
// Evaluation shared by the fit commands and `eval`.

double image_psnr(const ModelConfig &model, ParamStore<Real> &store, const Image &img, const Schedule &s,
                  unsigned threads, Image *recon = nullptr) {
    Image r = render_image(model, ModelParams<Real>(store), img.width, img.height, threads);
    const double p = psnr(r.values, img.values, s.psnr_ceiling);
    if (recon) *recon = std::move(r);
    return p;
}

double sdf_giou(const ModelConfig &model, ParamStore<Real> &store, const SdfSamples &samples, unsigned threads) {
    std::vector<double> x(samples.points.begin(), samples.points.end());
    const auto pred = predict(model, ModelParams<Real>(store), x, threads);
    return giou(pred, samples.sdf);
}

double views_psnr(const ModelConfig &model, ParamStore<Real> &store, const std::vector<View> &views, const Schedule &s,
                  unsigned threads, std::vector<std::vector<float>> *renders = nullptr) {
    const RayBatch rays = view_rays(views, model);
    const auto rgb = render_rays(model, ModelParams<Real>(store), rays, s.ray_samples, nullptr, threads);
    if (renders) {
        const std::size_t per = views.empty() ? 0 : 3 * views[0].camera.width * views[0].camera.height;
        for (std::size_t v = 0; v < views.size(); ++v)
            renders->emplace_back(rgb.begin() + v * per, rgb.begin() + (v + 1) * per);
    }
    return psnr(rgb, rays.rgb, s.psnr_ceiling);
}

std::vector<View> load_views(const std::string &path) {
    try {
        return decode_cameras(read_file(path));
    } catch (const FormatError &e) {
        throw FormatError(path + ": " + e.what());
    }
}

void save_views(const fs::path &dir, const std::vector<View> &views, const std::vector<std::vector<float>> &renders) {
    for (std::size_t v = 0; v < renders.size(); ++v) {
        Image img(views[v].camera.width, views[v].camera.height, 3);
        img.values = renders[v];
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", v);
        save_image(dir / name, img);
    }
}

/// Three axis-aligned slices through the origin; inside is dark, outside
/// light, shaded by distance.
void save_sdf_slices(const fs::path &dir, const ModelConfig &model, ParamStore<Real> &store, unsigned threads) {
    constexpr std::size_t n = 256;
    const char *names[3] = {"slice_xy.png", "slice_xz.png", "slice_yz.png"};
    const int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    const auto &lo = model.contraction.bbox_min;
    const auto &hi = model.contraction.bbox_max;
    for (int s = 0; s < 3; ++s) {
        std::vector<double> x(3 * n * n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t p = j * n + i;
                const int a = axes[s][0], b = axes[s][1];
                x[3 * p + a] = lo[a] + (hi[a] - lo[a]) * (i + 0.5) / double(n);
                x[3 * p + b] = hi[b] - (hi[b] - lo[b]) * (j + 0.5) / double(n);
            }
        const auto v = predict(model, ModelParams<Real>(store), x, threads);
        Image img(n, n, 1);
        for (std::size_t p = 0; p < n * n; ++p) {
            const float shade = 0.5f * std::exp(-4.0f * std::abs(v[p]));
            img.values[p] = v[p] < 0.0f ? 0.35f - 0.3f * (1.0f - shade * 2.0f) : 0.65f + shade;
        }
        save_image(dir / names[s], img);
    }
}

void write_outputs(const fs::path &out, MetricLog &log, const RunConfig &cfg, ParamStore<Real> &store,
                   const FinalMetrics &m) {
    log.final(m.to_json());
    save_checkpoint(out / "model.ffld", serialize(cfg), store);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_fit_image(const Common &c, const std::string &image_path, std::ostream &out) {
    const Image img = load_image(image_path);
    RunConfig cfg = load_run_config(c, TaskKind::Image);
    if (!cfg.options.basis_extent) cfg.options.basis_extent = static_cast<double>(std::min(img.width, img.height));
    if (!cfg.out_dim) cfg.out_dim = img.channels;
    const ModelConfig model = resolve_model(cfg);
    const fs::path dir = prepare_out(c.out_dir);
    MetricLog log(dir / "metrics.log");
    log.run("fit-image", cfg.schedule.seed, serialize(cfg));

    ParamStore<Real> store;
    init_params(model, ModelParams<Real>(store), cfg.schedule.seed);
    const auto report = train_direct(model, ModelParams<Real>(store), image_data(img), cfg.schedule,
                                     log_steps(log, cfg.schedule));
    Image recon;
    FinalMetrics m;
    m.psnr = image_psnr(model, store, img, cfg.schedule, c.threads, &recon);
    m.loss = report.final_loss();
    m.seconds = report.seconds;
    m.steps = report.steps;
    m.params = param_count(model);
    save_image(dir / (fs::path(image_path).stem().string() + "_recon.png"), recon);
    write_outputs(dir, log, cfg, store, m);
    out << summary("fit-image", m) << "\n";
    return 0;
}

int cmd_fit_sdf(const Common &c, const std::string &path, const std::string &test_path, std::ostream &out) {
    const SdfSamples samples = load_sdf_samples(path);
    const SdfSamples test = test_path.empty() ? samples : load_sdf_samples(test_path);
    RunConfig cfg = load_run_config(c, TaskKind::Sdf);
    const ModelConfig model = resolve_model(cfg);
    const fs::path dir = prepare_out(c.out_dir);
    MetricLog log(dir / "metrics.log");
    log.run("fit-sdf", cfg.schedule.seed, serialize(cfg));

    ParamStore<Real> store;
    init_params(model, ModelParams<Real>(store), cfg.schedule.seed);
    const auto report =
        train_direct(model, ModelParams<Real>(store), sdf_data(samples), cfg.schedule, log_steps(log, cfg.schedule));
    FinalMetrics m;
    m.giou = sdf_giou(model, store, test, c.threads);
    m.loss = report.final_loss();
    m.seconds = report.seconds;
    m.steps = report.steps;
    m.params = param_count(model);
    save_sdf_slices(dir, model, store, c.threads);
    write_outputs(dir, log, cfg, store, m);
    out << summary("fit-sdf", m) << "\n";
    return 0;
}

int cmd_fit_rf(const Common &c, const std::string &path, const std::string &test_path, std::ostream &out) {
    const auto train = load_views(path);
    const auto test = test_path.empty() ? train : load_views(test_path);
    RunConfig cfg = load_run_config(c, TaskKind::Radiance);
    const ModelConfig model = resolve_model(cfg);
    const fs::path dir = prepare_out(c.out_dir);
    MetricLog log(dir / "metrics.log");
    log.run("fit-rf", cfg.schedule.seed, serialize(cfg));

    ParamStore<Real> store;
    init_params(model, ModelParams<Real>(store), cfg.schedule.seed);
    const auto report = train_radiance(model, ModelParams<Real>(store), view_rays(train, model), cfg.schedule,
                                       log_steps(log, cfg.schedule));
    std::vector<std::vector<float>> renders;
    FinalMetrics m;
    m.psnr = views_psnr(model, store, test, cfg.schedule, c.threads, &renders);
    m.loss = report.final_loss();
    m.seconds = report.seconds;
    m.steps = report.steps;
    m.params = param_count(model);
    save_views(dir, test, renders);
    write_outputs(dir, log, cfg, store, m);
    out << summary("fit-rf", m) << "\n";
    return 0;
}

int cmd_train_shared(const Common &c, const std::vector<std::string> &paths, std::ostream &out) {
    if (paths.size() < 2) throw std::invalid_argument("train-shared needs at least two images");
    std::vector<Image> images;
    for (const auto &p : paths) images.push_back(load_image(p));
    RunConfig cfg = load_run_config(c, TaskKind::Image);
    if (!cfg.options.basis_extent)
        cfg.options.basis_extent = static_cast<double>(std::min(images[0].width, images[0].height));
    if (!cfg.out_dim) cfg.out_dim = images[0].channels;
    const ModelConfig model = resolve_model(cfg);
    const fs::path dir = prepare_out(c.out_dir);
    MetricLog log(dir / "metrics.log");
    log.run("train-shared", cfg.schedule.seed, serialize(cfg));

    const std::vector<ModelConfig> configs(images.size(), model);
    std::vector<DirectData> data;
    for (const auto &img : images) data.push_back(image_data(img));
    ParamStore<Real> shared;
    std::vector<ParamStore<Real>> locals(images.size());
    init_params(model, ModelParams<Real>(shared, locals[0]), cfg.schedule.seed);
    for (std::size_t i = 1; i < locals.size(); ++i) init_local_params(model, locals[i], cfg.schedule.seed + i);
    const auto report = train_shared<Real>(configs, shared, locals, data, cfg.schedule, log_steps(log, cfg.schedule));

    FinalMetrics m;
    double sum = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        ParamStore<Real> merged;
        for (const auto &[name, t] : shared) merged.insert(t);
        for (const auto &[name, t] : locals[i]) merged.insert(t);
        Image recon;
        sum += image_psnr(model, merged, images[i], cfg.schedule, c.threads, &recon);
        const std::string stem = "signal_" + std::to_string(i);
        save_image(dir / (stem + ".png"), recon);
        save_checkpoint(dir / (stem + ".ffld"), serialize(cfg), merged);
    }
    m.psnr = sum / static_cast<double>(images.size());
    m.loss = report.final_loss();
    m.seconds = report.seconds;
    m.steps = report.steps;
    m.params = param_count(model);
    log.final(m.to_json());
    save_checkpoint(dir / "shared.ffld", serialize(cfg), shared);
    out << summary("train-shared", m) << "\n";
    return 0;
}

struct Loaded {
    RunConfig cfg;
    ModelConfig model;
    ParamStore<Real> store;
};

Loaded load_model(const std::string &path) {
    Checkpoint<Real> ck = load_checkpoint<Real>(path);
    Loaded l;
    l.cfg = parse_config(ck.config);
    l.model = resolve_model(l.cfg);
    l.store = std::move(ck.params);
    // The stored tensors must be exactly the ones the config registers.
    ParamStore<Real> expect;
    init_params(l.model, ModelParams<Real>(expect), 0);
    for (const auto &[name, t] : expect) {
        const auto *have = l.store.find(name);
        if (!have) throw FormatError(path + ": checkpoint lacks tensor '" + name + "'");
        if (have->shape != t.shape) throw FormatError(path + ": tensor '" + name + "' has the wrong shape");
    }
    return l;
}

int cmd_eval(const Common &c, const std::string &ckpt, const std::string &data, std::ostream &out) {
    Loaded l = load_model(ckpt);
    std::string line = "eval";
    switch (l.cfg.task) {
        case TaskKind::Image:
            line += " psnr=" + fmt(image_psnr(l.model, l.store, load_image(data), l.cfg.schedule, c.threads));
            break;
        case TaskKind::Sdf:
            line += " giou=" + fmt(sdf_giou(l.model, l.store, load_sdf_samples(data), c.threads), 6);
            break;
        case TaskKind::Radiance:
            line += " psnr=" + fmt(views_psnr(l.model, l.store, load_views(data), l.cfg.schedule, c.threads));
            break;
    }
    out << line << "\n";
    return 0;
}

int cmd_render(const Common &c, const std::string &ckpt, const std::string &cameras, std::size_t size,
               std::ostream &out) {
    Loaded l = load_model(ckpt);
    const fs::path dir = prepare_out(c.out_dir);
    switch (l.cfg.task) {
        case TaskKind::Image:
            save_image(dir / "render.png", render_image(l.model, ModelParams<Real>(l.store), size, size, c.threads));
            out << "render wrote " << (dir / "render.png").string() << "\n";
            break;
        case TaskKind::Sdf:
            save_sdf_slices(dir, l.model, l.store, c.threads);
            out << "render wrote slice_xy.png slice_xz.png slice_yz.png to " << dir.string() << "\n";
            break;
        case TaskKind::Radiance: {
            if (cameras.empty()) throw std::invalid_argument("render of a radiance model needs --cameras");
            const auto views = load_views(cameras);
            std::vector<std::vector<float>> renders;
            const double p = views_psnr(l.model, l.store, views, l.cfg.schedule, c.threads, &renders);
            save_views(dir, views, renders);
            out << "render wrote " << renders.size() << " views psnr=" << fmt(p) << "\n";
            break;
        }
    }
    return 0;
}

int cmd_info(const Common &c, std::ostream &out) {
    const RunConfig cfg = load_run_config(c, std::nullopt);
    const ModelConfig model = resolve_model(cfg);
    const ParamCounts p = param_count(model);
    out << "projection=" << p.projection << " coefficient=" << p.coefficient << " basis=" << p.basis
        << " other=" << p.other << " total=" << p.total << "\n";
    return 0;
}

int cmd_make_synthetic(const std::string &kind, const std::string &target, std::size_t count, std::size_t size,
                       std::uint64_t seed, std::ostream &out) {
    const fs::path path(target);
    if (kind == "image") {
        save_image(path, band_limited_image(size ? size : 256, 3, seed));
        out << "make-synthetic wrote " << path.string() << "\n";
    } else if (kind == "textures") {
        fs::create_directories(path);
        const auto tex = texture_family(count ? count : 5, size ? size : 64, seed);
        for (std::size_t i = 0; i < tex.size(); ++i) save_image(path / ("texture_" + std::to_string(i) + ".png"), tex[i]);
        out << "make-synthetic wrote " << tex.size() << " textures to " << path.string() << "\n";
    } else if (kind == "sphere-sdf" || kind == "torus-sdf") {
        const Shape shape = parse_shape(kind.substr(0, kind.size() - 4));
        const SdfSamples s = make_sdf_samples(shape, count ? count : 800000, seed);
        save_sdf_samples(path, s);
        out << "make-synthetic wrote " << s.size() << " samples to " << path.string() << "\n";
    } else if (kind == "rf-scene") {
        fs::create_directories(path);
        const ToyScene scene = make_toy_scene(count ? count : 64, 8, size ? size : 32, 512, seed);
        write_file(path / "train.cam", encode_cameras(scene.train));
        write_file(path / "test.cam", encode_cameras(scene.test));
        out << "make-synthetic wrote train.cam and test.cam to " << path.string() << "\n";
    } else {
        throw std::invalid_argument("unknown synthetic kind '" + kind +
                                    "' (expected image, textures, sphere-sdf, torus-sdf or rf-scene)");
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Factor-field signal fitting"};
    app.name("factorfields");
    app.require_subcommand(1);

    Common c;
    std::string input, test, ckpt, data, cameras, kind, target;
    std::vector<std::string> inputs;
    std::size_t size = 0, count = 0;
    std::uint64_t seed = 0;

    auto *fit_image = app.add_subcommand("fit-image", "fit a 2-D image");
    add_common(fit_image, c, true);
    fit_image->add_option("image", input, "PNG or PPM image")->required();

    auto *fit_sdf = app.add_subcommand("fit-sdf", "fit signed distances");
    add_common(fit_sdf, c, true);
    fit_sdf->add_option("samples", input, "SDF sample file")->required();
    fit_sdf->add_option("--test", test, "held-out SDF samples for the final gIoU");

    auto *fit_rf = app.add_subcommand("fit-rf", "fit a radiance field to posed views");
    add_common(fit_rf, c, true);
    fit_rf->add_option("cameras", input, "training camera file")->required();
    fit_rf->add_option("--test", test, "held-out camera file for the final PSNR");

    auto *shared = app.add_subcommand("train-shared", "fit several images with shared basis factors");
    add_common(shared, c, true);
    shared->add_option("images", inputs, "images")->required()->expected(2, -1);

    auto *eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("checkpoint", ckpt)->required();
    eval->add_option("data", data, "image, SDF sample or camera file")->required();
    eval->add_option("--threads", c.threads)->check(CLI::PositiveNumber);

    auto *render = app.add_subcommand("render", "render a checkpoint");
    render->add_option("checkpoint", ckpt)->required();
    render->add_option("--cameras", cameras, "camera file (radiance models)");
    render->add_option("--size", size, "image side (image models)")->default_val(256);
    render->add_option("--out", c.out_dir, "output directory");
    render->add_option("--threads", c.threads)->check(CLI::PositiveNumber);

    auto *info = app.add_subcommand("info", "print parameter counts");
    add_common(info, c, false);

    auto *synth = app.add_subcommand("make-synthetic", "generate synthetic data");
    synth->add_option("kind", kind, "image | textures | sphere-sdf | torus-sdf | rf-scene")->required();
    synth->add_option("out", target, "output file or directory")->required();
    synth->add_option("--count", count, "samples, textures or training views");
    synth->add_option("--size", size, "image side");
    synth->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*fit_image) return cmd_fit_image(c, input, out);
        if (*fit_sdf) return cmd_fit_sdf(c, input, test, out);
        if (*fit_rf) return cmd_fit_rf(c, input, test, out);
        if (*shared) return cmd_train_shared(c, inputs, out);
        if (*eval) return cmd_eval(c, ckpt, data, out);
        if (*render) return cmd_render(c, ckpt, cameras, size, out);
        if (*info) return cmd_info(c, out);
        if (*synth) return cmd_make_synthetic(kind, target, count, size, seed, out);
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace factorfields
