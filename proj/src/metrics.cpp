// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace factorfields {

double mse(std::span<const float> pred, std::span<const float> target) {
    if (pred.size() != target.size()) throw std::invalid_argument("mse: length mismatch");
    if (pred.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = double(pred[i]) - double(target[i]);
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

double psnr_from_mse(double m, double ceiling) {
    if (!(m > 0.0)) return ceiling;
    return std::min(ceiling, -10.0 * std::log10(m));
}

double psnr(std::span<const float> pred, std::span<const float> target, double ceiling) {
    if (pred.size() != target.size()) throw std::invalid_argument("psnr: length mismatch");
    if (pred.empty()) return ceiling;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = std::clamp(double(pred[i]), 0.0, 1.0) - double(target[i]);
        s += d * d;
    }
    return psnr_from_mse(s / static_cast<double>(pred.size()), ceiling);
}

double giou(std::span<const float> pred, std::span<const float> truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("giou: length mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] > 0.0f, b = truth[i] > 0.0f;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MetricLog::MetricLog(const std::filesystem::path &path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open metric log '" + path.string() + "'");
}

void MetricLog::run(const std::string &command, std::uint64_t seed, const std::string &config) {
    if (!out_.is_open()) return;
    nlohmann::json j = {{"type", "run"}, {"command", command}, {"seed", seed}, {"config", config}};
    out_ << j.dump() << "\n";
    out_.flush();
}

void MetricLog::step(std::size_t step, double loss, double ms) {
    if (last_ && step <= *last_) throw std::logic_error("metric steps must strictly increase");
    last_ = step;
    if (!out_.is_open()) return;
    nlohmann::json j = {{"type", "step"}, {"step", step}, {"loss", loss}, {"ms", ms}};
    out_ << j.dump() << "\n";
}

void MetricLog::final(const std::string &json_fields) {
    if (!out_.is_open()) return;
    nlohmann::json j = nlohmann::json::parse(json_fields);
    j["type"] = "final";
    out_ << j.dump() << "\n";
    out_.flush();
}

std::string FinalMetrics::to_json() const {
    nlohmann::json j;
    if (psnr) j["psnr"] = *psnr;
    if (giou) j["giou"] = *giou;
    if (masked_psnr) j["masked_psnr"] = *masked_psnr;
    j["loss"] = loss;
    j["seconds"] = seconds;
    j["steps"] = steps;
    j["param_count"] = {{"projection", params.projection}, {"coefficient", params.coefficient},
                        {"basis", params.basis},           {"other", params.other},
                        {"total", params.total}};
    return j.dump();
}

}  // namespace factorfields
