#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kfan/types.hpp"

namespace kfan {

/// 10*log10(max_value^2 / MSE) in dB, capped at 99.0 (the cap also
/// stands in for the infinite zero-error case).
double psnr(const Vector& reference, const Vector& test, double max_value = 1.0);

/// Fraction of mismatched class indices.
double error_rate(const std::vector<Eigen::Index>& predicted,
                  const std::vector<Eigen::Index>& truth);

struct EvalReport {
    std::optional<double> psnr_db;
    std::optional<double> psnr_noisy_db;  // input-side baseline, when measured
    std::optional<double> error_rate;
    std::optional<std::vector<double>> per_class_errors;
    Eigen::Index n_examples = 0;
};

/// Stable `key = value` lines, LF-terminated, keys sorted; absent metrics
/// are omitted. psnr values carry 4 decimals, rates 6.
std::string report_text(const EvalReport& report);

}  // namespace kfan
