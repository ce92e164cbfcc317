// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace factorfields {

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(size)))
        throw FormatError("failed to read '" + path.string() + "'");
    return bytes;
}

void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed to write '" + path.string() + "'");
}

namespace {

class Writer {
public:
    void bytes(const void *p, std::size_t n) {
        const auto *b = static_cast<const std::uint8_t *>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> b, std::string what) : b_(b), what_(std::move(what)) {}

    void need(std::size_t n, const char *field) const {
        if (b_.size() - pos_ < n)
            throw FormatError("truncated " + what_ + ": " + field + " at byte offset " + std::to_string(pos_) +
                              " needs " + std::to_string(n) + " bytes, missing " +
                              std::to_string(n - (b_.size() - pos_)));
    }
    template <typename U>
    U uint(const char *field) {
        need(sizeof(U), field);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    float f32(const char *field) { return std::bit_cast<float>(uint<std::uint32_t>(field)); }
    double f64(const char *field) { return std::bit_cast<double>(uint<std::uint64_t>(field)); }
    std::string str(std::size_t n, const char *field) {
        need(n, field);
        std::string s(reinterpret_cast<const char *>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void magic(const char *m) {
        const std::size_t n = std::strlen(m);
        need(n, "magic");
        if (std::memcmp(b_.data() + pos_, m, n) != 0) throw FormatError("bad magic for " + what_ + ", expected '" + m + "'");
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
    std::string what_;
};

}  // namespace

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

// ---------------------------------------------------------------------------
// PPM

Image decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto fail = [&](const std::string &msg) -> FormatError {
        return FormatError("malformed PPM header at byte offset " + std::to_string(pos) + ": " + msg);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
        throw FormatError("malformed PPM header at byte offset 0: expected P6 or P5");
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size()) throw fail("unexpected end of header");
        if (!std::isdigit(bytes[pos])) throw fail("expected a decimal number");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1u << 24)) throw fail("value too large");
            ++pos;
        }
        return v;
    };
    const std::size_t w = number();
    const std::size_t h = number();
    const std::size_t maxval = number();
    if (w == 0 || h == 0) throw fail("zero image extent");
    if (maxval != 255) throw fail("unsupported bit depth (maxval " + std::to_string(maxval) + ", expected 255)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("expected whitespace after maxval");
    ++pos;
    const std::size_t need = w * h * channels;
    const std::size_t have = bytes.size() - pos;
    if (have < need)
        throw FormatError("truncated PPM: pixel data at byte offset " + std::to_string(pos) + " needs " +
                          std::to_string(need) + " bytes, missing " + std::to_string(need - have));
    Image img(w, h, channels);
    for (std::size_t i = 0; i < need; ++i) img.values[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image &img) {
    if (img.channels != 1 && img.channels != 3)
        throw FormatError("PPM stores 1 or 3 channels, image has " + std::to_string(img.channels));
    const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                               std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.values.size());
    for (float v : img.values) out.push_back(to_byte(v));
    return out;
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngReadState {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

[[noreturn]] void png_throw(png_structp, png_const_charp msg) { throw FormatError(std::string("PNG: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto *s = static_cast<PngReadState *>(png_get_io_ptr(png));
    if (s->bytes.size() - s->pos < n)
        throw FormatError("truncated PNG: read at byte offset " + std::to_string(s->pos) + " needs " +
                          std::to_string(n) + " bytes, missing " + std::to_string(n - (s->bytes.size() - s->pos)));
    std::memcpy(out, s->bytes.data() + s->pos, n);
    s->pos += n;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
    auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file (bad signature at byte offset 0)");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    if (!png) throw FormatError("PNG: cannot allocate decoder");
    png_infop info = png_create_info_struct(png);
    PngReadState state{bytes, 0};
    Image img;
    try {
        if (!info) throw FormatError("PNG: cannot allocate info");
        png_set_read_fn(png, &state, png_read_cb);
        png_read_info(png, info);
        const auto w = png_get_image_width(png, info);
        const auto h = png_get_image_height(png, info);
        const int depth = png_get_bit_depth(png, info);
        const int type = png_get_color_type(png, info);
        if (depth != 8)
            throw FormatError("PNG: unsupported bit depth " + std::to_string(depth) + " (8-bit images only)");
        std::size_t channels = 0;
        switch (type) {
            case PNG_COLOR_TYPE_GRAY: channels = 1; break;
            case PNG_COLOR_TYPE_GRAY_ALPHA: channels = 2; break;
            case PNG_COLOR_TYPE_RGB: channels = 3; break;
            case PNG_COLOR_TYPE_RGB_ALPHA: channels = 4; break;
            default: throw FormatError("PNG: unsupported color type " + std::to_string(type));
        }
        if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
        png_read_update_info(png, info);
        img = Image(w, h, channels);
        std::vector<std::uint8_t> row(w * channels);
        for (std::size_t y = 0; y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (std::size_t i = 0; i < row.size(); ++i) img.values[y * row.size() + i] = static_cast<float>(row[i]) / 255.0f;
        }
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

std::vector<std::uint8_t> encode_png(const Image &img) {
    int type = 0;
    switch (img.channels) {
        case 1: type = PNG_COLOR_TYPE_GRAY; break;
        case 2: type = PNG_COLOR_TYPE_GRAY_ALPHA; break;
        case 3: type = PNG_COLOR_TYPE_RGB; break;
        case 4: type = PNG_COLOR_TYPE_RGB_ALPHA; break;
        default: throw FormatError("PNG stores 1 to 4 channels, image has " + std::to_string(img.channels));
    }
    if (img.width == 0 || img.height == 0) throw FormatError("PNG: zero image extent");
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    if (!png) throw FormatError("PNG: cannot allocate encoder");
    png_infop info = png_create_info_struct(png);
    try {
        if (!info) throw FormatError("PNG: cannot allocate info");
        png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, type,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<std::uint8_t> row(img.width * img.channels);
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(img.values[y * row.size() + i]);
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image load_image(const std::filesystem::path &path) {
    const auto bytes = read_file(path);
    try {
        if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
        return decode_ppm(bytes);
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_image(const std::filesystem::path &path, const Image &img) {
    const auto ext = path.extension().string();
    if (ext == ".png") return write_file(path, encode_png(img));
    if (ext == ".ppm" || ext == ".pgm") return write_file(path, encode_ppm(img));
    throw FormatError("unsupported image extension '" + ext + "' (expected .png, .ppm or .pgm)");
}

// ---------------------------------------------------------------------------
// SDF samples

std::vector<std::uint8_t> encode_sdf_samples(const SdfSamples &s) {
    if (s.points.size() != 3 * s.sdf.size()) throw FormatError("SDF samples: point and value counts disagree");
    Writer w;
    w.bytes("SDF1", 4);
    w.uint<std::uint64_t>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        w.f32(s.points[3 * i]);
        w.f32(s.points[3 * i + 1]);
        w.f32(s.points[3 * i + 2]);
        w.f32(s.sdf[i]);
    }
    return w.take();
}

SdfSamples decode_sdf_samples(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "SDF sample file");
    r.magic("SDF1");
    const auto count = r.uint<std::uint64_t>("count");
    if (count > r.remaining() / 16 || r.remaining() != count * 16)
        throw FormatError("SDF sample file: header declares " + std::to_string(count) + " records (" +
                          std::to_string(count * 16) + " bytes) but " + std::to_string(r.remaining()) +
                          " bytes follow the header");
    SdfSamples s;
    s.points.resize(3 * count);
    s.sdf.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        s.points[3 * i] = r.f32("x");
        s.points[3 * i + 1] = r.f32("y");
        s.points[3 * i + 2] = r.f32("z");
        s.sdf[i] = r.f32("sdf");
    }
    return s;
}

SdfSamples load_sdf_samples(const std::filesystem::path &path) {
    try {
        return decode_sdf_samples(read_file(path));
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_sdf_samples(const std::filesystem::path &path, const SdfSamples &s) {
    write_file(path, encode_sdf_samples(s));
}

// ---------------------------------------------------------------------------
// Cameras

std::vector<std::uint8_t> encode_cameras(std::span<const View> views) {
    Writer w;
    w.bytes("CAM1", 4);
    const std::size_t width = views.empty() ? 0 : views[0].camera.width;
    const std::size_t height = views.empty() ? 0 : views[0].camera.height;
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(views.size()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(width));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(height));
    for (const auto &v : views) {
        const auto &c = v.camera;
        if (c.width != width || c.height != height) throw FormatError("camera file: all views must share one size");
        if (v.rgb.size() != width * height * 3) throw FormatError("camera file: view pixel count mismatch");
        for (double x : {c.fx, c.fy, c.cx, c.cy}) w.f32(static_cast<float>(x));
        for (double x : c.pose) w.f32(static_cast<float>(x));
        w.f32(static_cast<float>(c.near));
        w.f32(static_cast<float>(c.far));
        for (float x : v.rgb) w.f32(x);
    }
    return w.take();
}

std::vector<View> decode_cameras(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "camera file");
    r.magic("CAM1");
    const auto n = r.uint<std::uint32_t>("view count");
    const auto width = r.uint<std::uint32_t>("width");
    const auto height = r.uint<std::uint32_t>("height");
    const std::size_t per_view = 4 * (4 + 12 + 2 + std::size_t{width} * height * 3);
    r.need(per_view * n, "view records");
    std::vector<View> views(n);
    for (auto &v : views) {
        auto &c = v.camera;
        c.width = width;
        c.height = height;
        c.fx = r.f32("fx");
        c.fy = r.f32("fy");
        c.cx = r.f32("cx");
        c.cy = r.f32("cy");
        for (double &x : c.pose) x = r.f32("pose");
        c.near = r.f32("near");
        c.far = r.f32("far");
        v.rgb.resize(std::size_t{width} * height * 3);
        for (float &x : v.rgb) x = r.f32("rgb");
    }
    if (r.remaining() != 0) throw FormatError("camera file: " + std::to_string(r.remaining()) + " trailing bytes");
    return views;
}

// ---------------------------------------------------------------------------
// Checkpoints

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const std::string &config, const ParamStore<T> &params) {
    Writer w;
    w.bytes("FFLD", 4);
    w.uint<std::uint32_t>(kCheckpointVersion);
    w.uint<std::uint64_t>(config.size());
    w.bytes(config.data(), config.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.tensor_count()));
    for (const auto &[name, t] : params) {  // map order is sorted by name
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.uint<std::uint8_t>(sizeof(T) == 4 ? 1 : 2);
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
        for (auto e : t.shape) w.uint<std::uint64_t>(e);
        for (T v : t.values) {
            if constexpr (sizeof(T) == 4)
                w.f32(v);
            else
                w.f64(v);
        }
    }
    return w.take();
}

template <typename T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "checkpoint");
    r.magic("FFLD");
    const auto version = r.uint<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    Checkpoint<T> ck;
    const auto len = r.uint<std::uint64_t>("config length");
    r.need(len, "config text");
    ck.config = r.str(len, "config text");
    const auto count = r.uint<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto nlen = r.uint<std::uint32_t>("name length");
        std::string name = r.str(nlen, "tensor name");
        const std::size_t dtype_at = r.pos();
        const auto dtype = r.uint<std::uint8_t>("dtype");
        if (dtype != 1 && dtype != 2)
            throw FormatError("checkpoint: unknown dtype code " + std::to_string(dtype) + " at byte offset " +
                              std::to_string(dtype_at));
        const auto rank = r.uint<std::uint32_t>("rank");
        std::vector<std::size_t> shape(rank);
        std::size_t elems = 1;
        for (auto &e : shape) {
            e = static_cast<std::size_t>(r.uint<std::uint64_t>("extent"));
            if (e == 0) throw FormatError("checkpoint: tensor '" + name + "' has a zero extent");
            elems *= e;
        }
        r.need(elems * (dtype == 1 ? 4 : 8), "tensor values");
        ParamTensor<T> t(std::move(name), std::move(shape));
        for (auto &v : t.values) v = dtype == 1 ? static_cast<T>(r.f32("value")) : static_cast<T>(r.f64("value"));
        ck.params.insert(std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
    return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path &path, const std::string &config, const ParamStore<T> &params) {
    write_file(path, encode_checkpoint(config, params));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path &path) {
    try {
        return decode_checkpoint<T>(read_file(path));
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

#define FF_INSTANTIATE(T)                                                                                    \
    template std::vector<std::uint8_t> encode_checkpoint<T>(const std::string &, const ParamStore<T> &);    \
    template Checkpoint<T> decode_checkpoint<T>(std::span<const std::uint8_t>);                             \
    template void save_checkpoint<T>(const std::filesystem::path &, const std::string &, const ParamStore<T> &); \
    template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path &);

FF_INSTANTIATE(float)
FF_INSTANTIATE(double)

}  // namespace factorfields
