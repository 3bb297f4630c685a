#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popsim/census.hpp"
#include "popsim/junta.hpp"
#include "popsim/protocol.hpp"

namespace popsim {

/// Phase clock parameters. `rounds_per_ring` = 0 means an unbounded
/// counter that never overflows.
struct ClockParams {
    std::uint32_t phases_per_round = 2;  // m
    std::uint32_t rounds_per_ring = 3;   // r; 0 = unbounded

    bool unbounded() const noexcept { return rounds_per_ring == 0; }
    std::uint64_t ring() const noexcept {
        return static_cast<std::uint64_t>(phases_per_round) * rounds_per_ring;
    }
};

struct PhaseClockState {
    std::uint32_t phase = 0;
    bool marked = false;
    bool new_round = false;   // last update crossed a round boundary
    bool overflowed = false;  // sticky
};

/// What one clock update did: how many round boundaries the phase crossed
/// and whether it wrapped around the ring this time.
struct PcOutcome {
    std::uint32_t crossed = 0;
    bool wrapped = false;
};

namespace detail {

/// Advance `u` to `target` if target is circularly ahead (strict half-ring
/// rule). Updates new_round/overflowed.
inline PcOutcome pc_advance(const ClockParams& p, PhaseClockState& u, std::uint64_t target) {
    const std::uint32_t m = p.phases_per_round;
    std::uint64_t delta;
    if (p.unbounded()) {
        delta = target > u.phase ? target - u.phase : 0;
    } else {
        const std::uint64_t ring = p.ring();
        target %= ring;
        delta = (target + ring - u.phase) % ring;
        if (2 * delta >= ring) delta = 0;  // behind or too far to be ahead
    }
    const std::uint64_t unwrapped = u.phase + delta;
    PcOutcome out;
    out.crossed = static_cast<std::uint32_t>(unwrapped / m - u.phase / m);
    u.new_round = out.crossed > 0;
    if (!p.unbounded()) {
        out.wrapped = unwrapped >= p.ring();
        if (out.wrapped) u.overflowed = true;
        u.phase = static_cast<std::uint32_t>(unwrapped % p.ring());
    } else {
        u.phase = static_cast<std::uint32_t>(unwrapped);
    }
    return out;
}

}  // namespace detail

/// The clock transition: only the initiator's counter moves. A marked
/// initiator chases the responder's phase plus one, an unmarked one only
/// copies; "ahead" is decided circularly on the half ring.
inline PcOutcome pc_call(const ClockParams& p, PhaseClockState& u, const PhaseClockState& v) {
    return detail::pc_advance(p, u, static_cast<std::uint64_t>(v.phase) + (u.marked ? 1 : 0));
}

/// Phase adoption without the marked increment; used when a node must take
/// over a partner's (frozen) clock position.
inline PcOutcome pc_adopt(const ClockParams& p, PhaseClockState& u, const PhaseClockState& v) {
    return detail::pc_advance(p, u, v.phase);
}

struct PhaseClockFlags {
    bool overflowed;
    bool new_round;
    bool marked;
};
inline PhaseClockFlags pc_flags(const PhaseClockState& u) {
    return {u.overflowed, u.new_round, u.marked};
}

inline std::uint32_t pc_round(const ClockParams& p, const PhaseClockState& u) {
    return u.phase / p.phases_per_round;
}

/// Same/different round; needs r >= 2 (or the unbounded clock).
inline bool pc_same_round(const ClockParams& p, const PhaseClockState& u, const PhaseClockState& v) {
    if (!p.unbounded() && p.rounds_per_ring < 2)
        throw std::invalid_argument("pc_same_round: needs r >= 2");
    return pc_round(p, u) == pc_round(p, v);
}
inline bool pc_different_round(const ClockParams& p, const PhaseClockState& u, const PhaseClockState& v) {
    return !pc_same_round(p, u, v);
}

enum class RoundOrder { Smaller, Equal, Larger };

/// Circular round ordering; needs r >= 3 (or the unbounded clock). Exact
/// whenever the true round gap is at most one.
inline RoundOrder pc_round_order(const ClockParams& p, const PhaseClockState& u, const PhaseClockState& v) {
    if (!p.unbounded() && p.rounds_per_ring < 3)
        throw std::invalid_argument("pc_round_order: needs r >= 3");
    const std::uint64_t ru = pc_round(p, u);
    const std::uint64_t rv = pc_round(p, v);
    if (ru == rv) return RoundOrder::Equal;
    if (p.unbounded()) return ru < rv ? RoundOrder::Smaller : RoundOrder::Larger;
    const std::uint64_t r = p.rounds_per_ring;
    const std::uint64_t gap = (rv + r - ru) % r;
    return 2 * gap < r ? RoundOrder::Smaller : RoundOrder::Larger;
}

// ---------------------------------------------------------------------------
// Round bookkeeping (trial measurement, not protocol state).
// ---------------------------------------------------------------------------

/// Tracks unwrapped per-agent round indices, the per-round start/end
/// interactions, and the round spread sampled every `sample_every`
/// interactions.
///
/// round_start[i]: interaction during which the last agent reached round i.
/// round_end[i]:   interaction during which the first agent reached round i+1.
struct RoundTracker {
    std::uint32_t n = 0;
    std::uint64_t sample_every = 0;
    std::uint32_t tracked_rounds = 256;

    std::vector<std::uint32_t> agent_round;
    std::vector<std::uint32_t> round_population;  // index: round, bounded by tracked_rounds
    std::uint32_t min_round = 0;
    std::uint32_t max_round = 0;
    std::vector<std::uint32_t> reach_count;             // #agents at round >= i
    std::vector<std::optional<std::uint64_t>> t_first;  // first agent reached round i
    std::vector<std::optional<std::uint64_t>> t_all;    // last agent reached round i
    std::uint64_t spread_samples = 0;
    std::uint64_t spread_ok = 0;  // samples with max - min <= 1

    RoundTracker() = default;
    RoundTracker(std::uint32_t n_, std::uint64_t sample_every_) : n(n_), sample_every(sample_every_) {
        agent_round.assign(n, 0);
        round_population.assign(tracked_rounds + 2, 0);
        round_population[0] = n;
        reach_count.assign(tracked_rounds + 2, 0);
        t_first.assign(tracked_rounds + 2, std::nullopt);
        t_all.assign(tracked_rounds + 2, std::nullopt);
        reach_count[0] = n;
        t_first[0] = 0;
        t_all[0] = 0;
    }

    void cross(AgentId who, std::uint32_t rounds_crossed, std::uint64_t t) {
        if (rounds_crossed == 0) return;
        const std::uint32_t from = agent_round[who];
        const std::uint32_t to = from + rounds_crossed;
        agent_round[who] = to;
        --round_population[std::min(from, tracked_rounds + 1)];
        ++round_population[std::min(to, tracked_rounds + 1)];
        for (std::uint32_t i = from + 1; i <= to && i <= tracked_rounds; ++i) {
            if (++reach_count[i] == 1) t_first[i] = t;
            if (reach_count[i] == n) t_all[i] = t;
        }
        if (to > max_round) max_round = to;
        while (min_round <= tracked_rounds && round_population[min_round] == 0) ++min_round;
    }

    void sample(std::uint64_t t) {
        if (sample_every == 0 || t % sample_every != 0) return;
        ++spread_samples;
        if (max_round - min_round <= 1) ++spread_ok;
    }

    /// R_End(i) - R_Start(i), when both observed.
    std::optional<std::int64_t> round_overlap(std::uint32_t i) const {
        if (i + 1 > tracked_rounds || !t_first[i + 1] || !t_all[i]) return std::nullopt;
        return static_cast<std::int64_t>(*t_first[i + 1]) - static_cast<std::int64_t>(*t_all[i]);
    }
    std::optional<std::uint64_t> all_reached(std::uint32_t i) const {
        return i <= tracked_rounds ? t_all[i] : std::nullopt;
    }
};

/// Rounds crossed by the initiator in one clock update, recovered from the
/// stored phases (shadow-side; mirrors pc_advance arithmetic).
inline std::uint32_t rounds_crossed(const ClockParams& p, const PhaseClockState& before,
                                    const PhaseClockState& after) {
    const std::uint32_t m = p.phases_per_round;
    std::uint64_t delta;
    if (p.unbounded()) {
        // Spoil resets move a phase backwards; that is not forward motion.
        if (after.phase < before.phase) return 0;
        delta = after.phase - before.phase;
    } else {
        delta = (static_cast<std::uint64_t>(after.phase) + p.ring() - before.phase) % p.ring();
    }
    return static_cast<std::uint32_t>((before.phase + delta) / m - before.phase / m);
}

// ---------------------------------------------------------------------------
// Standalone junta + clock protocol (calibration and clock experiments).
// ---------------------------------------------------------------------------

struct JuntaClock {
    JuntaParams junta;
    ClockParams clock;
    std::uint32_t stop_at_round = 0;  // end the trial once all agents reach it (0 = never)

    struct State {
        JuntaState j;
        PhaseClockState c;
    };

    void interact(State& u, State& v) const {
        junta_step(junta, u.j, u.c.marked, v.j, v.c.marked);
        pc_call(clock, u.c, v.c);
    }
    int output(const State&) const { return 0; }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        k.put(s.j.level, 6);
        k.put_flag(s.j.active);
        k.put_flag(s.j.has_interacted);
        k.put(s.j.marked_meetings, 2);
        k.put(s.c.phase, 24);
        k.put_flag(s.c.marked);
        k.put_flag(s.c.new_round);
        k.put_flag(s.c.overflowed);
        return k.key;
    }

    struct Shadow {
        ClockParams clock;
        std::uint32_t stop_at_round = 0;
        RoundTracker rounds;

        void after(AgentId ui, AgentId, const State& ou, const State&, const State& nu, const State&,
                   std::uint64_t t) {
            rounds.cross(ui, rounds_crossed(clock, ou.c, nu.c), t);
            rounds.sample(t);
        }
        std::optional<std::uint64_t> done_at() const {
            if (stop_at_round == 0) return std::nullopt;
            return rounds.all_reached(stop_at_round);
        }
        void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<State>& states) const {
            extras["max_round"] = rounds.max_round;
            extras["spread_samples"] = static_cast<std::int64_t>(rounds.spread_samples);
            extras["spread_ok"] = static_cast<std::int64_t>(rounds.spread_ok);
            std::int64_t marked = 0;
            for (const auto& s : states) marked += s.c.marked ? 1 : 0;
            extras["marked_count"] = marked;
        }
    };
    Shadow make_shadow(std::uint32_t n) const { return Shadow{clock, stop_at_round, RoundTracker(n, n)}; }

    static Configuration<State> init(std::uint32_t n) {
        Configuration<State> c;
        c.states.resize(n);
        return c;
    }
};

}  // namespace popsim
