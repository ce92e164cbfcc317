// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace factorfields {

std::size_t shape_size(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extents must be positive");
        n *= e;
    }
    return n;
}

template <typename T>
ParamTensor<T>::ParamTensor(std::string n, std::vector<std::size_t> s, bool l)
    : name(std::move(n)), shape(std::move(s)), learnable(l) {
    const std::size_t count = shape_size(shape);
    values.assign(count, T(0));
    grad.assign(count, T(0));
}

template <typename T>
ParamTensor<T> &ParamStore<T>::add(std::string name, std::vector<std::size_t> shape, bool learnable) {
    return insert(ParamTensor<T>(std::move(name), std::move(shape), learnable));
}

template <typename T>
ParamTensor<T> &ParamStore<T>::insert(ParamTensor<T> tensor) {
    if (tensor.values.size() != tensor.grad.size() || tensor.values.size() != shape_size(tensor.shape))
        throw std::invalid_argument("tensor '" + tensor.name + "' has inconsistent buffers");
    auto [it, inserted] = tensors_.try_emplace(tensor.name);
    if (!inserted) throw std::invalid_argument("duplicate parameter tensor '" + tensor.name + "'");
    it->second = std::move(tensor);
    return it->second;
}

template <typename T>
ParamTensor<T> *ParamStore<T>::find(std::string_view name) {
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
}

template <typename T>
const ParamTensor<T> *ParamStore<T>::find(std::string_view name) const {
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
}

template <typename T>
ParamTensor<T> &ParamStore<T>::at(std::string_view name) {
    if (auto *p = find(name)) return *p;
    throw std::out_of_range("no parameter tensor named '" + std::string(name) + "'");
}

template <typename T>
const ParamTensor<T> &ParamStore<T>::at(std::string_view name) const {
    if (const auto *p = find(name)) return *p;
    throw std::out_of_range("no parameter tensor named '" + std::string(name) + "'");
}

template <typename T>
std::size_t ParamStore<T>::total_size() const {
    std::size_t n = 0;
    for (const auto &[name, t] : tensors_) n += t.size();
    return n;
}

template <typename T>
void ParamStore<T>::set_learnable(bool learnable) {
    for (auto &[name, t] : tensors_) t.learnable = learnable;
}

template <typename T>
void zero_grads(ParamStore<T> &params) {
    for (auto &[name, t] : params) std::fill(t.grad.begin(), t.grad.end(), T(0));
}

template <typename T>
void zero_grads(std::span<ParamTensor<T> *const> params) {
    for (ParamTensor<T> *t : params) std::fill(t->grad.begin(), t->grad.end(), T(0));
}

template <typename T>
void adam_step(AdamState<T> &state, ParamStore<T> &params) {
    state.step += 1;
    const AdamConfig &c = state.config;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = T(c.beta1), b2 = T(c.beta2);
    const T one_b1 = T(1.0 - c.beta1), one_b2 = T(1.0 - c.beta2);
    const T step_size = T(c.lr / bc1);
    const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
    const T eps = T(c.eps);

    for (auto &[name, p] : params) {
        if (!p.learnable) continue;
        auto &mom = state.moments[name];
        if (mom.m.size() != p.size()) {
            mom.m.assign(p.size(), T(0));
            mom.v.assign(p.size(), T(0));
        }
        T *__restrict v_ = mom.v.data();
        T *__restrict m_ = mom.m.data();
        T *__restrict x_ = p.values.data();
        const T *__restrict g_ = p.grad.data();
        const std::size_t n = p.size();
        for (std::size_t i = 0; i < n; ++i) {
            const T g = g_[i];
            m_[i] = b1 * m_[i] + one_b1 * g;
            v_[i] = b2 * v_[i] + one_b2 * (g * g);
            const T denom = std::sqrt(v_[i]) * inv_sqrt_bc2 + eps;
            x_[i] -= step_size * (m_[i] / denom);
        }
    }
}

std::size_t DropoutMask::zeros() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

template <typename T>
std::vector<T> DropoutMask::multipliers() const {
    const T keep = mu > 0.0 ? T(1.0 / (1.0 - mu)) : T(1);
    std::vector<T> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = mask[i] ? keep : T(0);
    return out;
}

template std::vector<float> DropoutMask::multipliers<float>() const;
template std::vector<double> DropoutMask::multipliers<double>() const;

DropoutMask sample_dropout_mask(std::size_t k, double mu, std::mt19937_64 &rng) {
    if (!(mu >= 0.0 && mu < 1.0))
        throw std::invalid_argument("dropout probability must lie in [0, 1), got " + std::to_string(mu));
    DropoutMask m;
    m.k = k;
    m.mu = mu;
    m.mask.assign(k, 1);
    if (mu == 0.0) return m;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) m.mask[i] = u(rng) < mu ? 0 : 1;
    return m;
}

namespace {

// All index vectors of dimension `dims` with components < extents and L1 norm `norm`,
// in lexicographic order.
void enumerate_norm(std::span<const std::size_t> extents, std::size_t dim, int remaining, std::vector<int> &cur,
                    std::vector<std::vector<int>> &out) {
    if (dim + 1 == extents.size()) {
        if (static_cast<std::size_t>(remaining) < extents[dim]) {
            cur[dim] = remaining;
            out.push_back(cur);
        }
        return;
    }
    for (int v = 0; v <= remaining && static_cast<std::size_t>(v) < extents[dim]; ++v) {
        cur[dim] = v;
        enumerate_norm(extents, dim + 1, remaining - v, cur, out);
    }
}

}  // namespace

std::vector<std::vector<int>> dct_frequencies(std::span<const std::size_t> extents, std::size_t count) {
    if (extents.empty()) throw std::invalid_argument("dct_frequencies: need at least one spatial dimension");
    std::vector<std::vector<int>> all;
    int max_norm = 0;
    for (std::size_t e : extents) max_norm += static_cast<int>(e) - 1;
    std::vector<int> cur(extents.size(), 0);
    for (int norm = 0; norm <= max_norm && all.size() < count; ++norm) enumerate_norm(extents, 0, norm, cur, all);
    std::vector<std::vector<int>> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(all[i % all.size()]);
    return out;
}

template <typename T>
void dct_init(ParamTensor<T> &grid) {
    if (grid.shape.size() < 2) throw std::invalid_argument("dct_init: grid '" + grid.name + "' needs spatial dims and a channel dim");
    const std::size_t dims = grid.shape.size() - 1;
    const std::size_t channels = grid.shape.back();
    std::span<const std::size_t> extents(grid.shape.data(), dims);
    const auto freqs = dct_frequencies(extents, channels);

    const std::size_t nodes = grid.size() / channels;
    std::vector<std::size_t> idx(dims, 0);
    for (std::size_t node = 0; node < nodes; ++node) {
        // row-major node index, last spatial axis fastest
        std::size_t rem = node;
        for (std::size_t d = dims; d-- > 0;) {
            idx[d] = rem % extents[d];
            rem /= extents[d];
        }
        for (std::size_t k = 0; k < channels; ++k) {
            double v = 1.0;
            for (std::size_t d = 0; d < dims; ++d) {
                const double m = static_cast<double>(extents[d]);
                v *= std::cos(std::numbers::pi * freqs[k][d] * (2.0 * static_cast<double>(idx[d]) + 1.0) / (2.0 * m));
            }
            grid.values[node * channels + k] = T(v);
        }
    }
}

std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : name) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    // splitmix64 finalizer
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

template <typename T>
void uniform_init(ParamTensor<T> &tensor, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(tensor_seed(seed, tensor.name));
    std::uniform_real_distribution<double> u(-scale, scale);
    for (T &v : tensor.values) v = T(u(rng));
}

#define FF_INSTANTIATE(T)                                                   \
    template struct ParamTensor<T>;                                         \
    template class ParamStore<T>;                                           \
    template void zero_grads<T>(ParamStore<T> &);                           \
    template void zero_grads<T>(std::span<ParamTensor<T> *const>);          \
    template void adam_step<T>(AdamState<T> &, ParamStore<T> &);            \
    template void dct_init<T>(ParamTensor<T> &);                            \
    template void uniform_init<T>(ParamTensor<T> &, double, std::uint64_t);

FF_INSTANTIATE(float)
FF_INSTANTIATE(double)

}  // namespace factorfields
