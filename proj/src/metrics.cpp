#include "kfan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kfan/error.hpp"

namespace kfan {

namespace {

constexpr double kPsnrCap = 99.0;

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

double psnr(const Vector& reference, const Vector& test, double max_value) {
    if (reference.size() != test.size())
        throw DimensionError("image lengths differ");
    if (reference.size() == 0) throw DimensionError("images must be non-empty");
    if (!(max_value > 0.0)) throw DomainError("max_value must be positive");
    const double mse =
        (reference - test).squaredNorm() / static_cast<double>(reference.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

double error_rate(const std::vector<Eigen::Index>& predicted,
                  const std::vector<Eigen::Index>& truth) {
    if (predicted.empty()) throw DomainError("cannot score an empty prediction list");
    if (predicted.size() != truth.size())
        throw DimensionError("prediction/truth lengths differ");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] != truth[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

std::string report_text(const EvalReport& report) {
    // Emitted in sorted key order.
    std::string out;
    if (report.error_rate)
        out += "error_rate = " + fixed(*report.error_rate, 6) + "\n";
    out += "n_examples = " + std::to_string(report.n_examples) + "\n";
    if (report.per_class_errors) {
        out += "per_class_errors =";
        for (std::size_t i = 0; i < report.per_class_errors->size(); ++i)
            out += (i == 0 ? " " : ", ") + fixed((*report.per_class_errors)[i], 6);
        out += "\n";
    }
    if (report.psnr_db) out += "psnr_db = " + fixed(*report.psnr_db, 4) + "\n";
    if (report.psnr_noisy_db)
        out += "psnr_noisy_db = " + fixed(*report.psnr_noisy_db, 4) + "\n";
    return out;
}

}  // namespace kfan
