#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "popsim/engine.hpp"
#include "popsim/phase_clock.hpp"

namespace popsim {

struct CalibrationEntry {
    double d1 = 0;
    std::uint32_t m = 0;
    std::uint32_t n = 0;
    std::uint64_t seed = 0;
};

struct CalibrationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Smallest even m from a doubling grid such that, in ten seeded junta+clock
/// runs, every one of the first 20 rounds overlaps for at least d1 * n ln n
/// interactions (overlap: first agent entering round i+1 minus last agent
/// entering round i).
inline std::uint32_t calibrate_m(std::uint32_t n, double d1, std::uint64_t seed,
                                 std::uint32_t junta_threshold = 0) {
    const double nln = n * std::log(static_cast<double>(n));
    const auto threshold = static_cast<std::uint8_t>(junta_threshold ? junta_threshold
                                                                     : default_junta_threshold(n));
    constexpr std::uint32_t kRounds = 20;
    for (std::uint32_t m = 2; m <= 4096; m *= 2) {
        bool ok = true;
        for (std::uint32_t trial = 0; trial < 10 && ok; ++trial) {
            JuntaClock proto{JuntaParams{JuntaKind::Threshold, threshold, 60},
                             ClockParams{m, kRounds + 4}, kRounds + 1};
            RunOptions opt;
            opt.budget = static_cast<std::uint64_t>(60.0 * m * n + 150.0 * nln);
            auto res = run_trial(proto, JuntaClock::init(n), opt, Rng(trial_seed(seed, trial)));
            const auto& rt = res.shadow.rounds;
            if (!rt.all_reached(kRounds + 1)) {
                ok = false;  // too slow to observe 20 full rounds in budget
                break;
            }
            for (std::uint32_t i = 0; i < kRounds; ++i) {
                auto overlap = rt.round_overlap(i);
                if (!overlap || static_cast<double>(*overlap) < d1 * nln) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) return m;
    }
    throw CalibrationFailure("calibrate_m: no m <= 4096 meets the round-length target");
}

inline void save_calibration(const std::string& path, const std::vector<CalibrationEntry>& entries) {
    nlohmann::json j;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries)
        j["entries"].push_back({{"d1", e.d1}, {"m", e.m}, {"n", e.n}, {"seed", e.seed}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration file: " + path);
    out << j.dump(2) << "\n";
}

inline std::vector<CalibrationEntry> load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    nlohmann::json j;
    in >> j;
    std::vector<CalibrationEntry> entries;
    for (const auto& e : j.value("entries", nlohmann::json::array()))
        entries.push_back({e.at("d1").get<double>(), e.at("m").get<std::uint32_t>(),
                           e.at("n").get<std::uint32_t>(), e.at("seed").get<std::uint64_t>()});
    return entries;
}

/// Cached m for a target coefficient (keyed by d1 alone: the constant is
/// size independent; entries calibrated at larger n take precedence).
inline std::optional<std::uint32_t> lookup_m(const std::vector<CalibrationEntry>& entries, double d1) {
    std::optional<std::uint32_t> best;
    std::uint32_t best_n = 0;
    for (const auto& e : entries)
        if (e.d1 == d1 && e.n >= best_n) {
            best = e.m;
            best_n = e.n;
        }
    return best;
}

}  // namespace popsim
