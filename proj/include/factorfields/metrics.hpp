// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Quality metrics and the line-delimited JSON metric log.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>

#include "factorfields/model.hpp"

namespace factorfields {

double mse(std::span<const float> pred, std::span<const float> target);

/// -10 log10(mse), with predictions clamped to [0, 1] first. Zero error
/// yields `ceiling`; results never exceed it.
double psnr(std::span<const float> pred, std::span<const float> target, double ceiling = 99.0);
double psnr_from_mse(double mse, double ceiling = 99.0);

/// |{s > 0 and p > 0}| / |{s > 0 or p > 0}|; 1 when both sets are empty.
double giou(std::span<const float> pred, std::span<const float> truth);

/// Writes one JSON object per line: a "run" record, "step" records with
/// strictly increasing step, and a "final" record.
class MetricLog {
public:
    MetricLog() = default;
    explicit MetricLog(const std::filesystem::path &path);

    bool is_open() const { return out_.is_open(); }
    void run(const std::string &command, std::uint64_t seed, const std::string &config);
    void step(std::size_t step, double loss, double ms);
    void final(const std::string &json_fields);  // a serialized JSON object of final metrics

    std::optional<std::size_t> last_step() const { return last_; }

private:
    std::ofstream out_;
    std::optional<std::size_t> last_;
};

/// JSON object text for the final record.
struct FinalMetrics {
    std::optional<double> psnr;
    std::optional<double> giou;
    std::optional<double> masked_psnr;
    double loss = 0.0;
    double seconds = 0.0;
    std::size_t steps = 0;
    ParamCounts params;
    std::string to_json() const;
};

}  // namespace factorfields
