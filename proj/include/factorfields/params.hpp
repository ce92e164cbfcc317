// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Learnable parameter storage, the Adam optimizer, dropout masks and the
// initializers used for coefficient, basis and projection parameters.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factorfields {

/// A named, shaped, learnable array with a gradient buffer of identical size.
template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool learnable = true;

    ParamTensor() = default;
    ParamTensor(std::string name, std::vector<std::size_t> shape, bool learnable = true);

    std::size_t size() const { return values.size(); }
};

std::size_t shape_size(std::span<const std::size_t> shape);

/// Name-keyed tensor table. Iteration order is sorted by name and tensor
/// addresses are stable for the lifetime of the store.
template <typename T>
class ParamStore {
public:
    using Map = std::map<std::string, ParamTensor<T>, std::less<>>;

    ParamTensor<T> &add(std::string name, std::vector<std::size_t> shape, bool learnable = true);
    ParamTensor<T> &insert(ParamTensor<T> tensor);

    ParamTensor<T> *find(std::string_view name);
    const ParamTensor<T> *find(std::string_view name) const;
    ParamTensor<T> &at(std::string_view name);
    const ParamTensor<T> &at(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::size_t tensor_count() const { return tensors_.size(); }
    std::size_t total_size() const;
    bool empty() const { return tensors_.empty(); }

    void set_learnable(bool learnable);

    typename Map::iterator begin() { return tensors_.begin(); }
    typename Map::iterator end() { return tensors_.end(); }
    typename Map::const_iterator begin() const { return tensors_.begin(); }
    typename Map::const_iterator end() const { return tensors_.end(); }

private:
    Map tensors_;
};

template <typename T>
void zero_grads(ParamStore<T> &params);
template <typename T>
void zero_grads(std::span<ParamTensor<T> *const> params);

struct AdamConfig {
    double lr = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-15;
};

template <typename T>
struct AdamState {
    struct Moments {
        std::vector<T> m;
        std::vector<T> v;
    };

    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, Moments, std::less<>> moments;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update of every learnable tensor in `params`.
/// Non-learnable tensors are left untouched.
template <typename T>
void adam_step(AdamState<T> &state, ParamStore<T> &params);

struct DropoutMask {
    std::size_t k = 0;
    double mu = 0.0;
    std::vector<std::uint8_t> mask;

    std::size_t zeros() const;
    /// Multipliers applied to the factor product: kept channels are scaled
    /// by 1/(1-mu) so the expected product is unchanged.
    template <typename T>
    std::vector<T> multipliers() const;
};

DropoutMask sample_dropout_mask(std::size_t k, double mu, std::mt19937_64 &rng);

/// Low-frequency DCT-II index vectors for a grid with the given spatial
/// extents, ordered by increasing L1 norm with lexicographic tie-break.
/// The list wraps around when `count` exceeds the available frequencies.
std::vector<std::vector<int>> dct_frequencies(std::span<const std::size_t> extents, std::size_t count);

/// Fills a basis grid of shape [M_0, ..., M_{D-1}, K] with separable DCT-II
/// patterns, one frequency vector per channel.
template <typename T>
void dct_init(ParamTensor<T> &grid);

/// Uniform in [-scale, scale], seeded from (seed, tensor name) so that the
/// result does not depend on which other tensors exist.
template <typename T>
void uniform_init(ParamTensor<T> &tensor, double scale, std::uint64_t seed);

std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name);

}  // namespace factorfields
