#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace popsim {

/// A measurement that a budget may have cut off. Censored values carry no
/// number at all; sinks must render them explicitly instead of a sentinel.
struct Censorable {
    std::optional<std::uint64_t> value;

    bool censored() const noexcept { return !value.has_value(); }
    static Censorable at(std::uint64_t t) { return {t}; }
    static Censorable censored_mark() { return {std::nullopt}; }
};

/// One probe of a running trial. Snapshots are summaries, not full
/// configurations; the final interaction is always probed.
struct ProbeRecord {
    std::uint64_t t = 0;
    bool all_correct = false;
    bool stable_hint = false;   // stability predicate held at this probe
};

/// Per-trial measurements. `extras` carries protocol-specific values
/// (integers; serialized into the extras_json column).
struct TrialMetrics {
    Censorable convergence;
    Censorable stabilization;
    bool final_output_correct = false;
    std::optional<std::uint64_t> distinct_states_max;  // census, when tracked
    std::uint64_t interactions_run = 0;
    std::map<std::string, std::int64_t> extras;
};

/// Convergence from probes: interaction index of the first probe after
/// which every probe (through end of run) shows all agents correct.
/// Censored when the final probe is not all-correct.
inline Censorable measure_convergence(const std::vector<ProbeRecord>& probes) {
    if (probes.empty() || !probes.back().all_correct) return Censorable::censored_mark();
    std::uint64_t first = probes.back().t;
    for (auto it = probes.rbegin(); it != probes.rend(); ++it) {
        if (!it->all_correct) break;
        first = it->t;
    }
    return Censorable::at(first);
}

}  // namespace popsim
