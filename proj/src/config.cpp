// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace factorfields {

std::string_view to_string(TaskKind t) {
    switch (t) {
        case TaskKind::Image: return "image";
        case TaskKind::Sdf: return "sdf";
        case TaskKind::Radiance: return "rf";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view s) {
    if (s == "image") return TaskKind::Image;
    if (s == "sdf") return TaskKind::Sdf;
    if (s == "rf") return TaskKind::Radiance;
    throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected image, sdf or rf)");
}

ConfigError::ConfigError(std::size_t line, const std::string &msg)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}

std::size_t RunConfig::resolved_dims() const {
    if (dims) return *dims;
    return task == TaskKind::Image ? 2 : 3;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    s = trim(s);
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double to_double(std::string_view v, std::string_view key) {
    v = trim(v);
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
        throw std::invalid_argument("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    return out;
}

std::uint64_t to_uint(std::string_view v, std::string_view key) {
    v = trim(v);
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
        throw std::invalid_argument("'" + std::string(key) + "' expects a non-negative integer, got '" +
                                    std::string(v) + "'");
    return out;
}

int to_int(std::string_view v, std::string_view key) {
    v = trim(v);
    int out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
        throw std::invalid_argument("'" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    return out;
}

bool to_bool(std::string_view v, std::string_view key) {
    v = trim(v);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::vector<double> to_doubles(std::string_view v, std::string_view key) {
    std::vector<double> out;
    for (auto item : split_list(v)) out.push_back(to_double(item, key));
    return out;
}

std::vector<std::size_t> to_sizes(std::string_view v, std::string_view key) {
    std::vector<std::size_t> out;
    for (auto item : split_list(v)) out.push_back(static_cast<std::size_t>(to_uint(item, key)));
    return out;
}

template <typename V, typename F>
std::string join(const std::vector<V> &v, F fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

std::string join_doubles(const std::vector<double> &v) { return join(v, format_double); }
std::string join_sizes(const std::vector<std::size_t> &v) {
    return join(v, [](std::size_t x) { return std::to_string(x); });
}

const char *const kFactorKeys[] = {"kind",       "transform",  "freqs",          "channels",      "res",
                                   "broadcast",  "mlp_layers", "mlp_width",      "mlp_activation", "mlp_per_level",
                                   "table_log2", "role",       "shared",         "rotation"};

bool is_factor_key(std::string_view k) {
    for (const char *f : kFactorKeys)
        if (k == f) return true;
    return false;
}

void apply_factor_field(FactorSpec &f, std::string_view key, std::string_view value) {
    if (key == "kind") f.kind = parse_factor_kind(trim(value));
    else if (key == "transform") f.transform.kind = parse_transform_kind(trim(value));
    else if (key == "freqs") f.transform.freqs = to_doubles(value, key);
    else if (key == "channels") f.channels = to_sizes(value, key);
    else if (key == "res") f.res = to_sizes(value, key);
    else if (key == "broadcast") f.broadcast = to_bool(value, key);
    else if (key == "mlp_layers") f.mlp_layers = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "mlp_width") f.mlp_width = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "mlp_activation") f.mlp_activation = parse_activation(trim(value));
    else if (key == "mlp_per_level") f.mlp_per_level = to_bool(value, key);
    else if (key == "table_log2") f.transform.table_log2 = to_int(value, key);
    else if (key == "role") f.role = parse_factor_role(trim(value));
    else if (key == "shared") f.shared = to_bool(value, key);
    else if (key == "rotation") f.rotation = to_int(value, key);
    else throw std::invalid_argument("unknown factor key '" + std::string(key) + "'");
}

void apply_top(RunConfig &c, std::string_view key, std::string_view value) {
    auto &o = c.options;
    auto &s = c.schedule;
    if (key == "preset") {
        c.preset = std::string(trim(value));
        const auto &names = preset_names();
        if (std::find(names.begin(), names.end(), c.preset) == names.end()) (void)preset(c.preset, PresetOptions{});
    }
    else if (key == "task") c.task = parse_task_kind(trim(value));
    else if (key == "dims") {
        const auto d = static_cast<std::size_t>(to_uint(value, key));
        if (d != 2 && d != 3) throw std::invalid_argument("dims must be 2 or 3");
        c.dims = d;
    }
    else if (key == "eta") o.eta = to_int(value, key);
    else if (key == "levels") o.levels = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "freqs") o.freqs = to_doubles(value, key);
    else if (key == "coef_res") o.coef_res = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "basis_res") o.basis_res = to_sizes(value, key);
    else if (key == "basis_extent") o.basis_extent = to_double(value, key);
    else if (key == "coef_layout") {
        const std::string v(trim(value));
        if (v != "per_channel" && v != "per_level") throw std::invalid_argument("coef_layout must be per_channel or per_level");
        o.coef_layout = v;
    }
    else if (key == "table_log2") o.table_log2 = to_int(value, key);
    else if (key == "connector") c.connector = parse_connector(trim(value));
    else if (key == "projection") c.projection = parse_projection_kind(trim(value));
    else if (key == "proj_layers") c.proj_layers = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "proj_width") c.proj_width = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "out_dim") c.out_dim = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "view_levels") c.view_levels = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "background") {
        const auto v = to_doubles(value, key);
        if (v.size() != 3) throw std::invalid_argument("background expects 3 values");
        c.background = std::array<double, 3>{v[0], v[1], v[2]};
    }
    else if (key == "contraction") c.contraction = parse_contraction_mode(trim(value));
    else if (key == "bbox_min") c.bbox_min = to_doubles(value, key);
    else if (key == "bbox_max") c.bbox_max = to_doubles(value, key);
    else if (key == "lr") s.lr = to_double(value, key);
    else if (key == "beta1") s.beta1 = to_double(value, key);
    else if (key == "beta2") s.beta2 = to_double(value, key);
    else if (key == "eps") s.eps = to_double(value, key);
    else if (key == "mu") {
        s.mu = to_double(value, key);
        if (!(s.mu >= 0.0 && s.mu < 1.0)) throw std::invalid_argument("mu must lie in [0, 1)");
    }
    else if (key == "batch") s.batch = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "steps") s.steps = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "seed") s.seed = to_uint(value, key);
    else if (key == "log_every") s.log_every = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "ray_samples") s.ray_samples = static_cast<std::size_t>(to_uint(value, key));
    else if (key == "psnr_ceiling") s.psnr_ceiling = to_double(value, key);
    else throw std::invalid_argument("unknown key '" + std::string(key) + "'");
}

}  // namespace

void apply_setting(RunConfig &cfg, std::string_view key, std::string_view value, std::size_t line) {
    key = trim(key);
    try {
        if (key.starts_with("factor.")) {
            const auto rest = key.substr(7);
            const auto dot = rest.find('.');
            if (dot == std::string_view::npos) throw std::invalid_argument("expected factor.N.field, got '" + std::string(key) + "'");
            const auto index = static_cast<std::size_t>(to_uint(rest.substr(0, dot), "factor index"));
            const auto field = rest.substr(dot + 1);
            if (!is_factor_key(field)) throw std::invalid_argument("unknown factor key '" + std::string(field) + "'");
            // parse eagerly so type errors carry this line
            FactorSpec probe;
            apply_factor_field(probe, field, value);
            cfg.factor_overrides[index][std::string(field)] = RunConfig::Setting{std::string(trim(value)), line};
            return;
        }
        apply_top(cfg, key, value);
    } catch (const ConfigError &) {
        throw;
    } catch (const std::exception &e) {
        throw ConfigError(line, e.what());
    }
}

void apply_override(RunConfig &cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError(0, "override '" + std::string(assignment) + "' is not key=value");
    apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1), 0);
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::optional<std::size_t> section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
            const auto name = trim(line.substr(1, line.size() - 2));
            if (name == "model" || name == "train") {
                section.reset();
                continue;
            }
            if (!name.starts_with("factor.")) throw ConfigError(line_no, "unknown section '" + std::string(name) + "'");
            try {
                section = static_cast<std::size_t>(to_uint(name.substr(7), "factor index"));
            } catch (const std::exception &e) {
                throw ConfigError(line_no, e.what());
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto value = line.substr(eq + 1);
        if (section)
            apply_setting(cfg, "factor." + std::to_string(*section) + "." + std::string(key), value, line_no);
        else
            apply_setting(cfg, key, value, line_no);
    }
    return cfg;
}

ModelConfig resolve_model(const RunConfig &cfg) {
    PresetOptions opts = cfg.options;
    opts.dims = cfg.resolved_dims();
    ModelConfig m;
    try {
        m = preset(cfg.preset, opts);
    } catch (const std::exception &e) {
        throw ConfigError(0, e.what());
    }
    if (cfg.task == TaskKind::Radiance) {
        m.projection.kind = ProjectionKind::VolumeRender;
        m.projection.out_dim = 3;
        m.contraction.bbox_min.assign(3, -1.0);
        m.contraction.bbox_max.assign(3, 1.0);
    }
    if (cfg.task == TaskKind::Sdf) m.projection.out_dim = 1;
    if (cfg.connector) m.connector = *cfg.connector;
    if (cfg.projection) m.projection.kind = *cfg.projection;
    if (cfg.proj_layers) m.projection.layers = *cfg.proj_layers;
    if (cfg.proj_width) m.projection.width = *cfg.proj_width;
    if (cfg.out_dim) m.projection.out_dim = *cfg.out_dim;
    if (cfg.view_levels) m.projection.view_levels = *cfg.view_levels;
    if (cfg.background) m.projection.background = *cfg.background;
    if (cfg.contraction) m.contraction.mode = *cfg.contraction;
    if (cfg.bbox_min) m.contraction.bbox_min = *cfg.bbox_min;
    if (cfg.bbox_max) m.contraction.bbox_max = *cfg.bbox_max;
    for (const auto &[index, fields] : cfg.factor_overrides) {
        if (index > m.factors.size()) {
            const std::size_t line = fields.empty() ? 0 : fields.begin()->second.line;
            throw ConfigError(line, "factor." + std::to_string(index) + " skips past the " +
                                        std::to_string(m.factors.size()) + " factors of the model");
        }
        if (index == m.factors.size()) m.factors.emplace_back();
        for (const auto &[key, setting] : fields) {
            try {
                apply_factor_field(m.factors[index], key, setting.value);
            } catch (const std::exception &e) {
                throw ConfigError(setting.line, e.what());
            }
        }
    }
    try {
        validate(m);
    } catch (const std::exception &e) {
        throw ConfigError(0, e.what());
    }
    return m;
}

std::string serialize(const RunConfig &cfg) {
    const ModelConfig m = resolve_model(cfg);
    const auto &s = cfg.schedule;
    const auto &o = cfg.options;
    std::ostringstream out;
    out << "preset=" << cfg.preset << "\n";
    out << "task=" << to_string(cfg.task) << "\n";
    out << "dims=" << m.dims << "\n";
    if (o.eta) out << "eta=" << *o.eta << "\n";
    if (o.levels) out << "levels=" << *o.levels << "\n";
    if (o.freqs) out << "freqs=" << join_doubles(*o.freqs) << "\n";
    if (o.coef_res) out << "coef_res=" << *o.coef_res << "\n";
    if (o.basis_res) out << "basis_res=" << join_sizes(*o.basis_res) << "\n";
    if (o.basis_extent) out << "basis_extent=" << format_double(*o.basis_extent) << "\n";
    if (o.coef_layout) out << "coef_layout=" << *o.coef_layout << "\n";
    if (o.table_log2) out << "table_log2=" << *o.table_log2 << "\n";
    out << "connector=" << to_string(m.connector) << "\n";
    out << "projection=" << to_string(m.projection.kind) << "\n";
    out << "proj_layers=" << m.projection.layers << "\n";
    out << "proj_width=" << m.projection.width << "\n";
    out << "out_dim=" << m.projection.out_dim << "\n";
    out << "view_levels=" << m.projection.view_levels << "\n";
    out << "background=" << format_double(m.projection.background[0]) << ","
        << format_double(m.projection.background[1]) << "," << format_double(m.projection.background[2]) << "\n";
    out << "contraction=" << to_string(m.contraction.mode) << "\n";
    out << "bbox_min=" << join_doubles(m.contraction.bbox_min) << "\n";
    out << "bbox_max=" << join_doubles(m.contraction.bbox_max) << "\n";
    out << "lr=" << format_double(s.lr) << "\n";
    out << "beta1=" << format_double(s.beta1) << "\n";
    out << "beta2=" << format_double(s.beta2) << "\n";
    out << "eps=" << format_double(s.eps) << "\n";
    out << "mu=" << format_double(s.mu) << "\n";
    out << "batch=" << s.batch << "\n";
    out << "steps=" << s.steps << "\n";
    out << "seed=" << s.seed << "\n";
    out << "log_every=" << s.log_every << "\n";
    out << "ray_samples=" << s.ray_samples << "\n";
    out << "psnr_ceiling=" << format_double(s.psnr_ceiling) << "\n";
    for (std::size_t i = 0; i < m.factors.size(); ++i) {
        const auto &f = m.factors[i];
        out << "\n[factor." << i << "]\n";
        out << "kind=" << to_string(f.kind) << "\n";
        out << "transform=" << to_string(f.transform.kind) << "\n";
        out << "freqs=" << join_doubles(f.transform.freqs) << "\n";
        out << "channels=" << join_sizes(f.channels) << "\n";
        out << "res=" << join_sizes(f.res) << "\n";
        out << "broadcast=" << (f.broadcast ? "true" : "false") << "\n";
        out << "mlp_layers=" << f.mlp_layers << "\n";
        out << "mlp_width=" << f.mlp_width << "\n";
        out << "mlp_activation=" << to_string(f.mlp_activation) << "\n";
        out << "mlp_per_level=" << (f.mlp_per_level ? "true" : "false") << "\n";
        out << "table_log2=" << f.transform.table_log2 << "\n";
        out << "role=" << to_string(f.role) << "\n";
        out << "shared=" << (f.shared ? "true" : "false") << "\n";
        out << "rotation=" << f.rotation << "\n";
    }
    return out.str();
}

}  // namespace factorfields
