#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace popsim {

struct FitImpossible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Normalizers for scaling fits: interactions divided by the model value.
enum class FitModel {
    NLogN,         // n ln n
    NLogNLog2_5N,  // n ln n * log2(5n)
    NLogNLogSNA,   // n ln n * log_s(n / alpha)
};

inline FitModel fit_model_from_name(const std::string& name) {
    if (name == "nlnn") return FitModel::NLogN;
    if (name == "nlnn-log2-5n") return FitModel::NLogNLog2_5N;
    if (name == "nlnn-logs-na") return FitModel::NLogNLogSNA;
    throw std::invalid_argument("unknown fit model: " + name);
}

struct FitSample {
    std::uint32_t n = 0;
    std::int32_t s = 2;
    std::uint32_t alpha = 1;
    std::optional<std::uint64_t> t;  // censored rows carry no value
};

struct FitRow {
    std::uint32_t n = 0;
    double coefficient = 0;  // mean normalized value over uncensored samples
    std::size_t samples = 0;
};

struct FitResult {
    std::vector<FitRow> rows;
    double flatness = 0;  // max coefficient / min coefficient across sizes
};

inline double fit_normalizer(FitModel model, std::uint32_t n, std::int32_t s, std::uint32_t alpha) {
    const double nln = n * std::log(static_cast<double>(n));
    switch (model) {
        case FitModel::NLogN: return nln;
        case FitModel::NLogNLog2_5N: return nln * std::log2(5.0 * n);
        case FitModel::NLogNLogSNA: {
            const double arg = static_cast<double>(n) / std::max(1u, alpha);
            return nln * std::max(1.0, std::log(arg) / std::log(static_cast<double>(s)));
        }
    }
    return nln;
}

/// Normalized coefficient per population size plus the max/min ratio across
/// sizes. Censored samples are skipped; needs at least four distinct sizes
/// and at least one uncensored sample per size.
inline FitResult scaling_fit(const std::vector<FitSample>& samples, FitModel model) {
    std::map<std::uint32_t, std::pair<double, std::size_t>> acc;
    std::map<std::uint32_t, bool> seen;
    for (const auto& sample : samples) {
        seen[sample.n] = true;
        if (!sample.t) continue;
        auto& [sum, count] = acc[sample.n];
        sum += static_cast<double>(*sample.t) / fit_normalizer(model, sample.n, sample.s, sample.alpha);
        ++count;
    }
    if (seen.size() < 4)
        throw std::invalid_argument("scaling_fit: at least 4 distinct population sizes required");
    if (acc.empty()) throw FitImpossible("scaling_fit: every sample is censored");

    FitResult result;
    double lo = 1e300, hi = 0;
    for (const auto& [n, v] : acc) {
        if (v.second == 0) continue;
        const double coeff = v.first / static_cast<double>(v.second);
        result.rows.push_back({n, coeff, v.second});
        lo = std::min(lo, coeff);
        hi = std::max(hi, coeff);
    }
    if (result.rows.empty()) throw FitImpossible("scaling_fit: every sample is censored");
    result.flatness = hi / lo;
    return result;
}

}  // namespace popsim
