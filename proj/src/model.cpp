// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace factorfields {

std::string_view to_string(Connector c) { return c == Connector::Hadamard ? "product" : "concat"; }

Connector parse_connector(std::string_view s) {
    if (s == "product") return Connector::Hadamard;
    if (s == "concat") return Connector::Concat;
    throw std::invalid_argument("unknown connector '" + std::string(s) + "' (expected product or concat)");
}

std::string_view to_string(ProjectionKind p) {
    switch (p) {
        case ProjectionKind::Linear: return "linear";
        case ProjectionKind::Mlp: return "mlp";
        case ProjectionKind::VolumeRender: return "volume";
    }
    return "?";
}

ProjectionKind parse_projection_kind(std::string_view s) {
    if (s == "linear") return ProjectionKind::Linear;
    if (s == "mlp") return ProjectionKind::Mlp;
    if (s == "volume") return ProjectionKind::VolumeRender;
    throw std::invalid_argument("unknown projection '" + std::string(s) + "' (expected linear, mlp or volume)");
}

void validate(const ModelConfig &config) {
    if (config.dims < 1 || config.dims > 3) throw std::invalid_argument("dims must be 1, 2 or 3");
    if (config.factors.empty()) throw std::invalid_argument("model needs at least one factor");
    std::size_t width = 0;
    for (std::size_t i = 0; i < config.factors.size(); ++i) {
        const auto &f = config.factors[i];
        try {
            validate(f, config.dims);
        } catch (const std::invalid_argument &e) {
            throw std::invalid_argument("factor " + std::to_string(i) + ": " + e.what());
        }
        if (f.kind == FactorKind::RawCoords || config.connector != Connector::Hadamard) continue;
        const std::size_t w = output_dim(f, config.dims);
        if (width != 0 && w != width)
            throw std::invalid_argument("product connector needs equal factor widths, factor " + std::to_string(i) +
                                        " emits " + std::to_string(w) + " but earlier factors emit " +
                                        std::to_string(width));
        width = w;
    }
    validate(config.contraction, config.dims);
    const auto &p = config.projection;
    if (p.out_dim == 0) throw std::invalid_argument("projection out_dim must be positive");
    if (p.kind == ProjectionKind::VolumeRender && config.dims != 3)
        throw std::invalid_argument("volume projection requires dims=3");
    if (p.kind != ProjectionKind::Linear && p.layers > 0 && p.width == 0)
        throw std::invalid_argument("projection width must be positive");
}

std::size_t dropout_dim(const ModelConfig &config) {
    std::size_t w = 0;
    for (const auto &f : config.factors) {
        if (f.kind == FactorKind::RawCoords) continue;
        const std::size_t fw = output_dim(f, config.dims);
        w = config.connector == Connector::Hadamard ? fw : w + fw;
    }
    return w;
}

std::size_t feature_dim(const ModelConfig &config) {
    std::size_t w = dropout_dim(config);
    for (const auto &f : config.factors)
        if (f.kind == FactorKind::RawCoords) w += output_dim(f, config.dims);
    return w;
}

std::size_t view_encoding_dim(const ProjectionSpec &p) { return 3 + 6 * p.view_levels; }

std::size_t projection_input_dim(const ModelConfig &config) {
    const std::size_t w = feature_dim(config);
    return config.projection.kind == ProjectionKind::VolumeRender ? w + view_encoding_dim(config.projection) : w;
}

std::size_t output_width(const ModelConfig &config) {
    return config.projection.kind == ProjectionKind::VolumeRender ? 4 : config.projection.out_dim;
}

ParamCounts param_count(const ModelConfig &config) {
    ParamCounts c;
    const auto &p = config.projection;
    const std::size_t in = projection_input_dim(config);
    switch (p.kind) {
        case ProjectionKind::Linear: c.projection = p.out_dim * in; break;
        case ProjectionKind::Mlp: c.projection = mlp_param_count(in, p.layers, p.width, p.out_dim); break;
        case ProjectionKind::VolumeRender: c.projection = mlp_param_count(in, p.layers, p.width, 4); break;
    }
    for (const auto &f : config.factors) {
        const std::size_t n = param_count(f, config.dims);
        switch (f.role) {
            case FactorRole::Coefficient: c.coefficient += n; break;
            case FactorRole::Basis: c.basis += n; break;
            case FactorRole::Other: c.other += n; break;
        }
    }
    c.total = c.projection + c.coefficient + c.basis + c.other;
    return c;
}

template <typename T>
void init_params(const ModelConfig &config, ModelParams<T> params, std::uint64_t seed) {
    validate(config);
    for (std::size_t i = 0; i < config.factors.size(); ++i)
        register_factor(config.factors[i], i, config.dims, params.store_for(config.factors[i]), seed);
    const auto &p = config.projection;
    const std::size_t in = projection_input_dim(config);
    if (p.kind == ProjectionKind::Linear) {
        auto &w = params.shared->add("proj.w0", {p.out_dim, in});
        uniform_init(w, 1.0 / std::sqrt(static_cast<double>(in)), seed);
    } else {
        const std::size_t out = p.kind == ProjectionKind::VolumeRender ? 4 : p.out_dim;
        register_mlp(*params.shared, "proj", in, p.layers, p.width, out, seed);
    }
}

template <typename T>
void init_local_params(const ModelConfig &config, ParamStore<T> &local, std::uint64_t seed) {
    validate(config);
    for (std::size_t i = 0; i < config.factors.size(); ++i)
        if (!config.factors[i].shared) register_factor(config.factors[i], i, config.dims, local, seed);
}

template <typename T>
ForwardResult<T> forward(Tape<T> &tape, const ModelConfig &config, ModelParams<T> params, std::span<const double> x,
                         std::size_t rows, const DropoutMask *mask, std::span<const double> dirs) {
    using Var = typename Tape<T>::Var;
    const std::size_t d = config.dims;
    if (x.size() != rows * d) throw std::invalid_argument("forward: coordinate buffer does not match rows");
    std::vector<double> xn(rows * d);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto c = contract(config.contraction, x.subspan(r * d, d));
        std::copy(c.begin(), c.end(), xn.begin() + static_cast<std::ptrdiff_t>(r * d));
    }

    std::vector<Var> parts;
    std::vector<Var> raws;
    Var combined;
    for (std::size_t i = 0; i < config.factors.size(); ++i) {
        const auto &f = config.factors[i];
        Var out = eval_factor(tape, f, i, params.store_for(f), xn, rows, d);
        if (f.kind == FactorKind::RawCoords) {
            raws.push_back(out);
        } else if (config.connector == Connector::Hadamard) {
            combined = combined.valid() ? tape.hadamard(combined, out) : out;
        } else {
            parts.push_back(out);
        }
    }
    if (!parts.empty()) combined = parts.size() == 1 ? parts[0] : tape.concat(parts);
    if (combined.valid() && mask != nullptr) {
        if (mask->k != tape.cols(combined))
            throw std::invalid_argument("dropout mask has " + std::to_string(mask->k) + " channels, features have " +
                                        std::to_string(tape.cols(combined)));
        if (mask->mu > 0.0) combined = tape.scale_columns(combined, mask->template multipliers<T>());
    }
    std::vector<Var> feats;
    if (combined.valid()) feats.push_back(combined);
    feats.insert(feats.end(), raws.begin(), raws.end());
    Var features = feats.size() == 1 ? feats[0] : tape.concat(feats);

    ForwardResult<T> res;
    res.features = features;
    const auto &p = config.projection;
    switch (p.kind) {
        case ProjectionKind::Linear:
            res.output = tape.linear(features, params.shared->at("proj.w0"), nullptr);
            break;
        case ProjectionKind::Mlp:
            res.output = eval_mlp(tape, *params.shared, "proj", features, p.layers, p.activation);
            break;
        case ProjectionKind::VolumeRender: {
            if (dirs.size() != rows * 3) throw std::invalid_argument("forward: volume projection needs one direction per row");
            const std::size_t vw = view_encoding_dim(p);
            std::vector<T> enc(rows * vw);
            for (std::size_t r = 0; r < rows; ++r) {
                T *e = enc.data() + r * vw;
                for (std::size_t a = 0; a < 3; ++a) e[a] = T(dirs[r * 3 + a]);
                for (std::size_t l = 0; l < p.view_levels; ++l)
                    for (std::size_t a = 0; a < 3; ++a) {
                        const auto sc = sincos_pair(dirs[r * 3 + a] * std::ldexp(1.0, static_cast<int>(l)));
                        e[3 + l * 6 + 2 * a] = T(sc[0]);
                        e[3 + l * 6 + 2 * a + 1] = T(sc[1]);
                    }
            }
            const Var view = tape.constant(rows, vw, std::move(enc));
            const std::array<Var, 2> in{features, view};
            const Var head = eval_mlp(tape, *params.shared, "proj", tape.concat(in), p.layers, p.activation);
            res.density = tape.activation(tape.slice(head, 0, 1), Activation::Softplus);
            res.rgb = tape.activation(tape.slice(head, 1, 3), Activation::Sigmoid);
            const std::array<Var, 2> out{res.density, res.rgb};
            res.output = tape.concat(out);
            break;
        }
    }
    return res;
}

template <typename T>
std::vector<T> evaluate(const ModelConfig &config, ModelParams<T> params, std::span<const double> x, std::size_t rows,
                        std::span<const double> dirs, unsigned threads, std::size_t chunk) {
    const std::size_t d = config.dims;
    const std::size_t q = output_width(config);
    const bool volume = config.projection.kind == ProjectionKind::VolumeRender;
    if (x.size() != rows * d) throw std::invalid_argument("evaluate: coordinate buffer does not match rows");
    if (volume && dirs.size() != rows * 3)
        throw std::invalid_argument("evaluate: volume projection needs one direction per row");
    std::vector<T> out(rows * q);
    if (rows == 0) return out;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t chunks = (rows + chunk - 1) / chunk;
    auto work = [&](std::size_t first, std::size_t stride) {
        Tape<T> tape;
        for (std::size_t c = first; c < chunks; c += stride) {
            const std::size_t r0 = c * chunk;
            const std::size_t n = std::min(chunk, rows - r0);
            tape.clear();
            std::span<const double> dv = volume ? dirs.subspan(r0 * 3, n * 3) : std::span<const double>{};
            auto res = forward(tape, config, params, x.subspan(r0 * d, n * d), n, nullptr, dv);
            const auto v = tape.value(res.output);
            std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(r0 * q));
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
    if (threads == 1) {
        work(0, 1);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                work(t, threads);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto &th : pool) th.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Presets

const std::vector<std::string> &preset_names() {
    static const std::vector<std::string> names = {"occnet",     "nerf",       "dvgo",     "eg3d",
                                                   "ingp",       "tensorf_vm", "tensorf_cp", "dif_grid",
                                                   "dif_mlp_b",  "dif_mlp_c",  "dif_no_c",   "dif_sl"};
    return names;
}

std::vector<std::size_t> default_channels(std::size_t levels, int eta) {
    if (eta < 0 || eta > 10) throw std::invalid_argument("eta must lie in [0, 10]");
    const std::size_t scale = std::size_t{1} << eta;
    std::vector<std::size_t> k(levels);
    for (std::size_t l = 0; l < levels; ++l) k[l] = (2 * l < levels ? 4 : 2) * scale;
    return k;
}

std::vector<double> default_freqs(std::size_t levels) {
    if (levels == 1) return {2.0};
    std::vector<double> f(levels);
    for (std::size_t l = 0; l < levels; ++l) f[l] = 2.0 + 6.0 * static_cast<double>(l) / static_cast<double>(levels - 1);
    return f;
}

std::vector<std::size_t> default_basis_res(std::size_t levels, double extent) {
    std::vector<std::size_t> r(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        const double t = levels == 1 ? 1.0 : static_cast<double>(l) / static_cast<double>(levels - 1);
        const double m = (32.0 + 96.0 * t) * extent / 1024.0;
        r[l] = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(m)));
    }
    return r;
}

int default_eta(std::size_t dims) { return dims == 2 ? 3 : 0; }
std::size_t default_coef_res(std::size_t dims) { return dims == 3 ? 48 : 128; }
double default_basis_extent(std::size_t dims) { return dims == 3 ? 688.0 : 1024.0; }

namespace {

struct Resolved {
    std::size_t dims;
    std::size_t levels;
    int eta;
    std::vector<double> freqs;
    std::vector<std::size_t> channels;
    std::size_t coef_res;
    std::vector<std::size_t> basis_res;
    bool per_level_coef;
    int table_log2;
};

Resolved resolve(const PresetOptions &o, std::size_t default_levels) {
    Resolved r;
    r.dims = o.dims;
    r.eta = o.eta.value_or(default_eta(o.dims));
    if (o.freqs && o.levels && o.freqs->size() != *o.levels)
        throw std::invalid_argument("freqs lists " + std::to_string(o.freqs->size()) + " values but levels=" +
                                    std::to_string(*o.levels));
    r.levels = o.freqs ? o.freqs->size() : o.levels.value_or(default_levels);
    if (r.levels == 0) throw std::invalid_argument("levels must be positive");
    r.freqs = o.freqs ? *o.freqs : default_freqs(r.levels);
    r.channels = default_channels(r.levels, r.eta);
    r.coef_res = o.coef_res.value_or(default_coef_res(o.dims));
    r.basis_res = o.basis_res ? *o.basis_res
                              : default_basis_res(r.levels, o.basis_extent.value_or(default_basis_extent(o.dims)));
    if (r.basis_res.size() == 1 && r.levels > 1) r.basis_res.assign(r.levels, r.basis_res[0]);
    if (r.basis_res.size() != r.levels)
        throw std::invalid_argument("basis_res lists " + std::to_string(r.basis_res.size()) + " values for " +
                                    std::to_string(r.levels) + " levels");
    const std::string layout = o.coef_layout.value_or("per_channel");
    if (layout != "per_channel" && layout != "per_level")
        throw std::invalid_argument("coef_layout must be per_channel or per_level");
    r.per_level_coef = layout == "per_level";
    r.table_log2 = o.table_log2.value_or(19);
    return r;
}

std::size_t sum(const std::vector<std::size_t> &v) {
    std::size_t s = 0;
    for (auto x : v) s += x;
    return s;
}

FactorSpec coefficient_grid(const Resolved &r) {
    FactorSpec f;
    f.kind = FactorKind::DenseGrid;
    f.transform.kind = TransformKind::Identity;
    f.channels = r.channels;
    f.res.assign(r.levels, r.coef_res);
    f.broadcast = r.per_level_coef;
    f.role = FactorRole::Coefficient;
    return f;
}

FactorSpec basis_grid(const Resolved &r) {
    FactorSpec f;
    f.kind = FactorKind::DenseGrid;
    f.transform.kind = TransformKind::Sawtooth;
    f.transform.freqs = r.freqs;
    f.channels = r.channels;
    f.res = r.basis_res;
    f.role = FactorRole::Basis;
    f.shared = true;
    return f;
}

FactorSpec single_grid(const Resolved &r, TransformKind tk, std::size_t res) {
    FactorSpec f;
    f.kind = FactorKind::DenseGrid;
    f.transform.kind = tk;
    f.channels = {sum(r.channels)};
    f.res = {res};
    return f;
}

}  // namespace

ModelConfig preset(std::string_view name, const PresetOptions &opts) {
    if (opts.dims < 2 || opts.dims > 3) throw std::invalid_argument("presets are defined for dims 2 and 3");
    ModelConfig c;
    c.dims = opts.dims;
    c.contraction.bbox_min.assign(c.dims, c.dims == 3 ? -1.25 : 0.0);
    c.contraction.bbox_max.assign(c.dims, c.dims == 3 ? 1.25 : 1.0);
    c.projection.out_dim = c.dims == 3 ? 1 : 3;

    if (name == "occnet") {
        FactorSpec f;
        f.kind = FactorKind::RawCoords;
        c.factors = {f};
    } else if (name == "nerf") {
        const std::size_t levels = opts.levels.value_or(10);
        FactorSpec f;
        f.kind = FactorKind::RawCoords;
        f.transform.kind = TransformKind::SinCos;
        if (opts.freqs) {
            f.transform.freqs = *opts.freqs;
        } else {
            for (std::size_t l = 0; l < levels; ++l) f.transform.freqs.push_back(std::ldexp(1.0, static_cast<int>(l)));
        }
        c.factors = {f};
    } else if (name == "dvgo") {
        const Resolved r = resolve(opts, 6);
        c.factors = {single_grid(r, TransformKind::Identity, r.coef_res)};
    } else if (name == "eg3d" || name == "tensorf_vm" || name == "tensorf_cp") {
        if (opts.dims != 3) throw std::invalid_argument(std::string(name) + " preset requires dims=3");
        const Resolved r = resolve(opts, 6);
        const std::size_t m = *std::max_element(r.basis_res.begin(), r.basis_res.end());
        if (name == "eg3d") {
            c.factors = {single_grid(r, TransformKind::Orthogonal2D, m)};
        } else if (name == "tensorf_vm") {
            c.factors = {single_grid(r, TransformKind::Orthogonal2D, m), single_grid(r, TransformKind::Orthogonal1D, m)};
        } else {
            for (int k = 0; k < 3; ++k) {
                auto f = single_grid(r, TransformKind::Orthogonal1D, m);
                f.rotation = k;
                c.factors.push_back(f);
            }
        }
    } else if (name == "ingp") {
        const std::size_t levels = opts.levels.value_or(16);
        FactorSpec f;
        f.kind = FactorKind::HashedVectors;
        f.transform.kind = TransformKind::Hashing;
        f.transform.table_log2 = opts.table_log2.value_or(opts.dims == 3 ? 19 : 18);
        f.channels.assign(levels, 2);
        const double lo = 16.0, hi = opts.dims == 3 ? 512.0 : 1024.0;
        for (std::size_t l = 0; l < levels; ++l) {
            const double t = levels == 1 ? 0.0 : static_cast<double>(l) / static_cast<double>(levels - 1);
            f.res.push_back(static_cast<std::size_t>(std::floor(lo * std::pow(hi / lo, t))));
        }
        if (opts.basis_res) f.res = *opts.basis_res;
        c.factors = {f};
    } else if (name == "dif_grid" || name == "dif_no_c") {
        const Resolved r = resolve(opts, 6);
        if (name == "dif_grid") c.factors.push_back(coefficient_grid(r));
        c.factors.push_back(basis_grid(r));
    } else if (name == "dif_mlp_b") {
        const Resolved r = resolve(opts, 6);
        FactorSpec b;
        b.kind = FactorKind::Mlp;
        b.transform.kind = TransformKind::Sawtooth;
        b.transform.freqs = r.freqs;
        b.channels = r.channels;
        b.mlp_layers = 2;
        b.mlp_width = 32;
        b.mlp_per_level = true;
        b.role = FactorRole::Basis;
        b.shared = true;
        c.factors = {coefficient_grid(r), b};
    } else if (name == "dif_mlp_c") {
        const Resolved r = resolve(opts, 6);
        FactorSpec a;
        a.kind = FactorKind::Mlp;
        a.transform.kind = TransformKind::Identity;
        a.channels = r.channels;
        a.role = FactorRole::Coefficient;
        c.factors = {a, basis_grid(r)};
    } else if (name == "dif_sl") {
        PresetOptions o = opts;
        // One level carrying all channels at the finest basis resolution.
        const Resolved full = resolve(opts, 6);
        o.levels = 1;
        o.freqs = std::vector<double>{opts.freqs && opts.freqs->size() == 1 ? opts.freqs->front() : 2.0};
        o.basis_res = std::vector<std::size_t>{*std::max_element(full.basis_res.begin(), full.basis_res.end())};
        Resolved r = resolve(o, 1);
        r.channels = {sum(full.channels)};
        c.factors = {coefficient_grid(r), basis_grid(r)};
    } else {
        std::string list;
        for (const auto &n : preset_names()) list += (list.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown preset '" + std::string(name) + "' (valid: " + list + ")");
    }
    validate(c);
    return c;
}

#define FF_INSTANTIATE(T)                                                                                         \
    template void init_params<T>(const ModelConfig &, ModelParams<T>, std::uint64_t);                             \
    template void init_local_params<T>(const ModelConfig &, ParamStore<T> &, std::uint64_t);                      \
    template ForwardResult<T> forward<T>(Tape<T> &, const ModelConfig &, ModelParams<T>, std::span<const double>, \
                                         std::size_t, const DropoutMask *, std::span<const double>);             \
    template std::vector<T> evaluate<T>(const ModelConfig &, ModelParams<T>, std::span<const double>, std::size_t, \
                                        std::span<const double>, unsigned, std::size_t);

FF_INSTANTIATE(float)
FF_INSTANTIATE(double)

}  // namespace factorfields
