// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/factors.hpp"

#include <cmath>
#include <stdexcept>

namespace factorfields {

std::string_view to_string(FactorKind k) {
    switch (k) {
        case FactorKind::DenseGrid: return "grid";
        case FactorKind::HashedVectors: return "hash";
        case FactorKind::Mlp: return "mlp";
        case FactorKind::RawCoords: return "raw";
    }
    return "?";
}

FactorKind parse_factor_kind(std::string_view s) {
    if (s == "grid") return FactorKind::DenseGrid;
    if (s == "hash") return FactorKind::HashedVectors;
    if (s == "mlp") return FactorKind::Mlp;
    if (s == "raw") return FactorKind::RawCoords;
    throw std::invalid_argument("unknown factor kind '" + std::string(s) + "' (expected grid, hash, mlp or raw)");
}

std::string_view to_string(FactorRole r) {
    switch (r) {
        case FactorRole::Coefficient: return "coefficient";
        case FactorRole::Basis: return "basis";
        case FactorRole::Other: return "other";
    }
    return "?";
}

FactorRole parse_factor_role(std::string_view s) {
    if (s == "coefficient") return FactorRole::Coefficient;
    if (s == "basis") return FactorRole::Basis;
    if (s == "other") return FactorRole::Other;
    throw std::invalid_argument("unknown factor role '" + std::string(s) + "' (expected coefficient, basis or other)");
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
    }
    return "?";
}

Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softplus") return Activation::Softplus;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

bool is_orthogonal(const FactorSpec &spec) {
    return spec.transform.kind == TransformKind::Orthogonal1D || spec.transform.kind == TransformKind::Orthogonal2D;
}

std::size_t total_channels(const FactorSpec &spec) {
    std::size_t k = 0;
    for (std::size_t c : spec.channels) k += c;
    return k;
}

namespace {

std::size_t ipow(std::size_t b, std::size_t e) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < e; ++i) r *= b;
    return r;
}

std::size_t groups(const FactorSpec &spec) { return spec.channels.size(); }

std::size_t level_of(const FactorSpec &spec, std::size_t group) {
    return spec.transform.levels() == 1 ? 0 : group;
}

std::size_t stored_channels(const FactorSpec &spec, std::size_t group) {
    return spec.broadcast ? 1 : spec.channels[group];
}

// Spatial dimensionality of the grid a factor indexes.
std::size_t grid_dims(const FactorSpec &spec, std::size_t dims) {
    if (spec.transform.kind == TransformKind::Orthogonal1D) return 1;
    if (spec.transform.kind == TransformKind::Orthogonal2D) return 2;
    return dims;
}

std::string group_name(std::size_t index, std::size_t g) { return factor_prefix(index) + ".g" + std::to_string(g); }

}  // namespace

std::string factor_prefix(std::size_t index) { return "f" + std::to_string(index); }

void validate(const FactorSpec &spec, std::size_t dims) {
    validate(spec.transform);
    if (dims < 1 || dims > 3) throw std::invalid_argument("factors support 1 to 3 input dimensions");
    const auto &tk = spec.transform.kind;
    if (spec.kind == FactorKind::RawCoords) {
        if (tk == TransformKind::Hashing || is_orthogonal(spec))
            throw std::invalid_argument("raw factor cannot use a hashing or orthogonal transform");
        return;
    }
    if (spec.channels.empty()) throw std::invalid_argument("factor needs at least one channel group");
    for (std::size_t c : spec.channels)
        if (c == 0) throw std::invalid_argument("factor channel counts must be positive");
    const std::size_t levels = spec.transform.levels();
    const bool needs_levels = spec.kind != FactorKind::Mlp || spec.mlp_per_level;
    if (needs_levels && levels != 1 && levels != groups(spec))
        throw std::invalid_argument("factor has " + std::to_string(groups(spec)) + " channel groups but " +
                                    std::to_string(levels) + " transform levels");
    if (is_orthogonal(spec) && dims != 3) throw std::invalid_argument("orthogonal transforms require 3-D input");
    if (tk == TransformKind::SinCos && spec.kind != FactorKind::Mlp)
        throw std::invalid_argument("sincos transform feeds coordinate MLPs and raw factors only");
    switch (spec.kind) {
        case FactorKind::DenseGrid:
        case FactorKind::HashedVectors:
            if (spec.res.size() != groups(spec))
                throw std::invalid_argument("factor needs one resolution per channel group");
            for (std::size_t r : spec.res)
                if (r < 2) throw std::invalid_argument("grid resolutions must be at least 2");
            if (spec.kind == FactorKind::HashedVectors && tk != TransformKind::Hashing)
                throw std::invalid_argument("hash factor requires the hashing transform");
            if (spec.kind == FactorKind::DenseGrid && tk == TransformKind::Hashing)
                throw std::invalid_argument("hashing transform requires a hash factor");
            break;
        case FactorKind::Mlp:
            if (tk == TransformKind::Hashing || is_orthogonal(spec))
                throw std::invalid_argument("mlp factor cannot use a hashing or orthogonal transform");
            if (spec.mlp_width == 0 && spec.mlp_layers > 0) throw std::invalid_argument("mlp width must be positive");
            break;
        case FactorKind::RawCoords: break;
    }
    if (spec.rotation < 0 || spec.rotation > 2) throw std::invalid_argument("rotation must be 0, 1 or 2");
}

std::size_t output_dim(const FactorSpec &spec, std::size_t dims) {
    if (spec.kind == FactorKind::RawCoords) return output_dim(spec.transform, dims);
    return (is_orthogonal(spec) ? 3 : 1) * total_channels(spec);
}

std::size_t hash_table_rows(const FactorSpec &spec, std::size_t group, std::size_t dims) {
    const std::size_t lattice = ipow(spec.res[group], dims);
    const std::size_t cap = std::size_t{1} << spec.transform.table_log2;
    return lattice < cap ? lattice : cap;
}

std::size_t mlp_param_count(std::size_t in, std::size_t hidden, std::size_t width, std::size_t out, bool bias) {
    std::size_t n = 0;
    std::size_t prev = in;
    for (std::size_t l = 0; l < hidden; ++l) {
        n += width * prev + (bias ? width : 0);
        prev = width;
    }
    return n + out * prev + (bias ? out : 0);
}

std::size_t param_count(const FactorSpec &spec, std::size_t dims) {
    std::size_t n = 0;
    switch (spec.kind) {
        case FactorKind::RawCoords: return 0;
        case FactorKind::DenseGrid: {
            const std::size_t gd = grid_dims(spec, dims);
            const std::size_t blocks = is_orthogonal(spec) ? 3 : 1;
            for (std::size_t g = 0; g < groups(spec); ++g)
                n += blocks * ipow(spec.res[g], gd) * stored_channels(spec, g);
            return n;
        }
        case FactorKind::HashedVectors:
            for (std::size_t g = 0; g < groups(spec); ++g) n += hash_table_rows(spec, g, dims) * stored_channels(spec, g);
            return n;
        case FactorKind::Mlp:
            if (spec.mlp_per_level) {
                const std::size_t in = level_width(spec.transform.kind, dims);
                for (std::size_t g = 0; g < groups(spec); ++g)
                    n += mlp_param_count(in, spec.mlp_layers, spec.mlp_width, spec.channels[g]);
                return n;
            }
            return mlp_param_count(output_dim(spec.transform, dims), spec.mlp_layers, spec.mlp_width,
                                   total_channels(spec));
    }
    return n;
}

template <typename T>
void register_mlp(ParamStore<T> &store, const std::string &prefix, std::size_t in, std::size_t hidden,
                  std::size_t width, std::size_t out, std::uint64_t seed) {
    std::size_t prev = in;
    for (std::size_t l = 0; l <= hidden; ++l) {
        const std::size_t o = l == hidden ? out : width;
        const double s = 1.0 / std::sqrt(static_cast<double>(prev));
        auto &w = store.add(prefix + ".w" + std::to_string(l), {o, prev});
        uniform_init(w, s, seed);
        auto &b = store.add(prefix + ".b" + std::to_string(l), {o});
        uniform_init(b, s, seed);
        prev = o;
    }
}

template <typename T>
void register_factor(const FactorSpec &spec, std::size_t index, std::size_t dims, ParamStore<T> &store,
                     std::uint64_t seed) {
    validate(spec, dims);
    const std::size_t gd = grid_dims(spec, dims);
    switch (spec.kind) {
        case FactorKind::RawCoords: return;
        case FactorKind::DenseGrid:
            for (std::size_t g = 0; g < groups(spec); ++g) {
                std::vector<std::size_t> shape(gd, spec.res[g]);
                shape.push_back(stored_channels(spec, g));
                const std::size_t blocks = is_orthogonal(spec) ? 3 : 1;
                for (std::size_t p = 0; p < blocks; ++p) {
                    std::string name = group_name(index, g);
                    if (is_orthogonal(spec)) name += ".p" + std::to_string(p);
                    auto &t = store.add(name, shape);
                    if (spec.role == FactorRole::Basis && !is_orthogonal(spec))
                        dct_init(t);
                    else
                        uniform_init(t, 0.1, seed);
                }
            }
            return;
        case FactorKind::HashedVectors:
            for (std::size_t g = 0; g < groups(spec); ++g) {
                auto &t = store.add(group_name(index, g), {hash_table_rows(spec, g, dims), stored_channels(spec, g)});
                uniform_init(t, 0.1, seed);
            }
            return;
        case FactorKind::Mlp:
            if (spec.mlp_per_level) {
                const std::size_t in = level_width(spec.transform.kind, dims);
                for (std::size_t g = 0; g < groups(spec); ++g)
                    register_mlp(store, group_name(index, g), in, spec.mlp_layers, spec.mlp_width, spec.channels[g],
                                 seed);
            } else {
                register_mlp(store, factor_prefix(index), output_dim(spec.transform, dims), spec.mlp_layers,
                             spec.mlp_width, total_channels(spec), seed);
            }
            return;
    }
}

template <typename T>
typename Tape<T>::Var eval_mlp(Tape<T> &tape, ParamStore<T> &store, const std::string &prefix,
                               typename Tape<T>::Var input, std::size_t layers, Activation act) {
    typename Tape<T>::Var h = input;
    for (std::size_t l = 0; l <= layers; ++l) {
        auto &w = store.at(prefix + ".w" + std::to_string(l));
        auto *b = store.find(prefix + ".b" + std::to_string(l));
        h = tape.linear(h, w, b);
        if (l < layers && act != Activation::Identity) h = tape.activation(h, act);
    }
    return h;
}

namespace {

// Transformed coordinates of every row at one pyramid level, row-major.
std::vector<double> level_coords(const TransformSpec &spec, std::size_t level, std::span<const double> x,
                                 std::size_t rows, std::size_t dims) {
    const std::size_t w = level_width(spec.kind, dims);
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        transform_level(spec.kind, x.subspan(r * dims, dims), spec.freq(level), std::span<double>(out.data() + r * w, w));
    return out;
}

template <typename T>
GatherLookup<T> make_lookup(ParamTensor<T> &table, std::size_t stored, std::size_t offset, std::size_t channels,
                            std::size_t rows, std::size_t corners) {
    GatherLookup<T> lk;
    lk.table = &table;
    lk.table_channels = stored;
    lk.out_offset = offset;
    lk.out_channels = channels;
    lk.corners = corners;
    lk.index.resize(rows * corners);
    lk.weight.resize(rows * corners);
    return lk;
}

}  // namespace

template <typename T>
typename Tape<T>::Var eval_factor(Tape<T> &tape, const FactorSpec &spec, std::size_t index, ParamStore<T> &store,
                                  std::span<const double> x, std::size_t rows, std::size_t dims) {
    if (x.size() != rows * dims) throw std::invalid_argument("eval_factor: coordinate buffer does not match rows");
    const TransformSpec &tf = spec.transform;
    const std::size_t out_cols = output_dim(spec, dims);
    std::vector<std::vector<double>> cache(tf.levels());
    auto coords_for = [&](std::size_t level) -> const std::vector<double> & {
        if (cache[level].empty()) cache[level] = level_coords(tf, level, x, rows, dims);
        return cache[level];
    };
    std::vector<double> wbuf(8);

    switch (spec.kind) {
        case FactorKind::RawCoords: {
            const std::size_t w = level_width(tf.kind, dims);
            std::vector<T> vals(rows * out_cols);
            for (std::size_t l = 0; l < tf.levels(); ++l) {
                const auto &c = coords_for(l);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) vals[r * out_cols + l * w + j] = T(c[r * w + j]);
            }
            return tape.constant(rows, out_cols, std::move(vals));
        }
        case FactorKind::DenseGrid: {
            std::vector<GatherLookup<T>> lookups;
            std::size_t offset = 0;
            for (std::size_t g = 0; g < groups(spec); ++g) {
                const auto &c = coords_for(level_of(spec, g));
                const std::size_t kg = spec.channels[g];
                const std::size_t st = stored_channels(spec, g);
                if (!is_orthogonal(spec)) {
                    const std::vector<std::size_t> ext(dims, spec.res[g]);
                    const std::size_t corners = std::size_t{1} << dims;
                    auto lk = make_lookup(store.at(group_name(index, g)), st, offset, kg, rows, corners);
                    for (std::size_t r = 0; r < rows; ++r) {
                        lattice_corners(std::span<const double>(c.data() + r * dims, dims), ext,
                                        lk.index.data() + r * corners, wbuf.data());
                        for (std::size_t k = 0; k < corners; ++k) lk.weight[r * corners + k] = T(wbuf[k]);
                    }
                    lookups.push_back(std::move(lk));
                    offset += kg;
                    continue;
                }
                const std::size_t gd = grid_dims(spec, dims);
                const std::vector<std::size_t> ext(gd, spec.res[g]);
                const std::size_t corners = std::size_t{1} << gd;
                for (std::size_t p = 0; p < 3; ++p) {
                    const std::size_t q = (p + static_cast<std::size_t>(spec.rotation)) % 3;
                    auto &table = store.at(group_name(index, g) + ".p" + std::to_string(q));
                    auto lk = make_lookup(table, st, 3 * offset + p * kg, kg, rows, corners);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const auto sub = orthogonal_project(std::span<const double>(c.data() + r * dims, dims), tf.kind);
                        lattice_corners(sub[q], ext, lk.index.data() + r * corners, wbuf.data());
                        for (std::size_t k = 0; k < corners; ++k) lk.weight[r * corners + k] = T(wbuf[k]);
                    }
                    lookups.push_back(std::move(lk));
                }
                offset += kg;
            }
            return tape.gather(rows, out_cols, std::move(lookups));
        }
        case FactorKind::HashedVectors: {
            std::vector<GatherLookup<T>> lookups;
            std::size_t offset = 0;
            const std::size_t corners = std::size_t{1} << dims;
            for (std::size_t g = 0; g < groups(spec); ++g) {
                const auto &c = coords_for(level_of(spec, g));
                const std::size_t kg = spec.channels[g];
                const std::size_t table_rows = hash_table_rows(spec, g, dims);
                auto lk = make_lookup(store.at(group_name(index, g)), stored_channels(spec, g), offset, kg, rows, corners);
                for (std::size_t r = 0; r < rows; ++r) {
                    hash_index(std::span<const double>(c.data() + r * dims, dims), spec.res[g], table_rows,
                               lk.index.data() + r * corners, wbuf.data());
                    for (std::size_t k = 0; k < corners; ++k) lk.weight[r * corners + k] = T(wbuf[k]);
                }
                lookups.push_back(std::move(lk));
                offset += kg;
            }
            return tape.gather(rows, out_cols, std::move(lookups));
        }
        case FactorKind::Mlp: {
            const std::size_t w = level_width(tf.kind, dims);
            if (spec.mlp_per_level) {
                std::vector<typename Tape<T>::Var> outs;
                for (std::size_t g = 0; g < groups(spec); ++g) {
                    const auto &c = coords_for(level_of(spec, g));
                    std::vector<T> vals(c.begin(), c.end());
                    auto in = tape.constant(rows, w, std::move(vals));
                    outs.push_back(eval_mlp(tape, store, group_name(index, g), in, spec.mlp_layers, spec.mlp_activation));
                }
                return outs.size() == 1 ? outs[0] : tape.concat(outs);
            }
            const std::size_t in_cols = output_dim(tf, dims);
            std::vector<T> vals(rows * in_cols);
            for (std::size_t l = 0; l < tf.levels(); ++l) {
                const auto &c = coords_for(l);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) vals[r * in_cols + l * w + j] = T(c[r * w + j]);
            }
            auto in = tape.constant(rows, in_cols, std::move(vals));
            return eval_mlp(tape, store, factor_prefix(index), in, spec.mlp_layers, spec.mlp_activation);
        }
    }
    throw std::logic_error("eval_factor: unhandled factor kind");
}

#define FF_INSTANTIATE(T)                                                                                          \
    template void register_factor<T>(const FactorSpec &, std::size_t, std::size_t, ParamStore<T> &, std::uint64_t); \
    template Tape<T>::Var eval_factor<T>(Tape<T> &, const FactorSpec &, std::size_t, ParamStore<T> &,             \
                                         std::span<const double>, std::size_t, std::size_t);                     \
    template Tape<T>::Var eval_mlp<T>(Tape<T> &, ParamStore<T> &, const std::string &, Tape<T>::Var, std::size_t,  \
                                      Activation);                                                                 \
    template void register_mlp<T>(ParamStore<T> &, const std::string &, std::size_t, std::size_t, std::size_t,     \
                                  std::size_t, std::uint64_t);

FF_INSTANTIATE(float)
FF_INSTANTIATE(double)

}  // namespace factorfields
