// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// File formats. Every multi-byte field is little-endian.
//
//   Image       8-bit PNG (gray, gray+alpha, RGB, RGBA) or binary PPM/PGM (P6/P5).
//   SDF samples "SDF1", u64 count, count x {f32 x, y, z, sdf}.
//   Cameras     "CAM1", u32 views, u32 width, u32 height, then per view
//               f32 fx, fy, cx, cy, f32[12] world-from-camera pose (row-major
//               3x4), f32 near, far, f32[width*height*3] RGB.
//   Checkpoint  "FFLD", u32 version, u64 config length, config bytes,
//               u32 tensor count, then per tensor in name order: u32 name
//               length, name, u8 dtype (1 = f32, 2 = f64), u32 rank,
//               u64[rank] extents, raw values.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "factorfields/params.hpp"

namespace factorfields {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);

/// Row-major, channel-interleaved pixels in [0, 1].
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<float> values;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c) : width(w), height(h), channels(c), values(w * h * c, 0.0f) {}
    float &at(std::size_t x, std::size_t y, std::size_t c) { return values[(y * width + x) * channels + c]; }
    float at(std::size_t x, std::size_t y, std::size_t c) const { return values[(y * width + x) * channels + c]; }
};

/// Quantizes round(clamp(v, 0, 1) * 255).
std::uint8_t to_byte(float v);

Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image &img);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image &img);

/// Chooses the codec from the extension (.png, .ppm, .pgm) on save and from
/// the signature on load.
Image load_image(const std::filesystem::path &path);
void save_image(const std::filesystem::path &path, const Image &img);

struct SdfSamples {
    std::vector<float> points;        // 3 per sample
    std::vector<float> sdf;           // 1 per sample
    std::vector<std::uint8_t> near;   // 1 = near-surface, 0 = uniform; empty when loaded from file
    std::size_t size() const { return sdf.size(); }
};

std::vector<std::uint8_t> encode_sdf_samples(const SdfSamples &s);
SdfSamples decode_sdf_samples(std::span<const std::uint8_t> bytes);
SdfSamples load_sdf_samples(const std::filesystem::path &path);
void save_sdf_samples(const std::filesystem::path &path, const SdfSamples &s);

struct Camera {
    std::size_t width = 0;
    std::size_t height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    std::array<double, 12> pose{};  // world-from-camera, row-major 3x4; camera looks down -z
    double near = 0, far = 0;
};

struct View {
    Camera camera;
    std::vector<float> rgb;  // width * height * 3
};

std::vector<std::uint8_t> encode_cameras(std::span<const View> views);
std::vector<View> decode_cameras(std::span<const std::uint8_t> bytes);

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
    std::string config;
    ParamStore<T> params;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const std::string &config, const ParamStore<T> &params);
/// Tensors stored in the other precision are converted to T.
template <typename T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path &path, const std::string &config, const ParamStore<T> &params);
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path &path);

}  // namespace factorfields
