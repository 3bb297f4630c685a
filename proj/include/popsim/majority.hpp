#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popsim/census.hpp"
#include "popsim/junta.hpp"
#include "popsim/phase_clock.hpp"
#include "popsim/primitives.hpp"
#include "popsim/protocol.hpp"

namespace popsim {

// ---------------------------------------------------------------------------
// 4-state backup: strong/weak states per opinion. Opposite strongs cancel
// to weak, a strong converts an opposite weak.
// ---------------------------------------------------------------------------

enum Backup4 : std::uint8_t {
    kStrongPos = 0,
    kStrongNeg = 1,
    kWeakPos = 2,
    kWeakNeg = 3,
};

inline int backup4_output(std::uint8_t s) { return (s % 2 == 0) ? +1 : -1; }
inline bool backup4_strong(std::uint8_t s) { return s < 2; }

inline void backup4_interact(std::uint8_t& u, std::uint8_t& v) {
    const bool su = backup4_strong(u), sv = backup4_strong(v);
    const int ou = backup4_output(u), ov = backup4_output(v);
    if (su && sv && ou != ov) {
        u = ou > 0 ? kWeakPos : kWeakNeg;
        v = ov > 0 ? kWeakPos : kWeakNeg;
    } else if (su && !sv && ou != ov) {
        v = ou > 0 ? kWeakPos : kWeakNeg;
    } else if (!su && sv && ou != ov) {
        u = ov > 0 ? kWeakPos : kWeakNeg;
    }
}

/// All backup outputs agree (the absorbing case used by stability
/// predicates; mixed-output frozen corners report false).
template <class GetCode, class States>
bool backup4_uniform_sign(const States& states, GetCode code) {
    int first = backup4_output(code(states.front()));
    for (const auto& s : states)
        if (backup4_output(code(s)) != first) return false;
    return true;
}

/// Standalone 4-state protocol (also the oracle subject).
struct FourStateMajority {
    struct State {
        std::uint8_t code = kStrongPos;
    };
    void interact(State& u, State& v) const { backup4_interact(u.code, v.code); }
    int output(const State& s) const { return backup4_output(s.code); }
    std::uint64_t encode(const State& s) const { return s.code; }
    bool is_stable(const std::vector<State>& states) const {
        return backup4_uniform_sign(states, [](const State& s) { return s.code; });
    }
    static Configuration<State> init(std::uint32_t n, std::uint32_t alpha) {
        if ((n + alpha) % 2 != 0 || alpha > n) throw std::invalid_argument("init: alpha must match n parity");
        Configuration<State> c;
        c.states.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) c.states[i].code = i < (n + alpha) / 2 ? kStrongPos : kStrongNeg;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Shared agent state and parameters for the clocked majority family.
// ---------------------------------------------------------------------------

enum class LoadPolicy : std::uint8_t {
    AssertCap,  // exceeding the cap is a state-budget violation
    ClampCap,   // multiply saturates at +-cap
};

struct MajorityParams {
    std::int32_t s = 2;
    ClockParams clock{};
    JuntaParams junta{};
    LoadPolicy load_policy = LoadPolicy::AssertCap;
    std::int32_t load_cap = 0;  // 0 => 2s
    std::int32_t finish_threshold = 3;
    std::uint16_t counter_max = 600;
    // Load exchange waits until both clocks have started. The uniform
    // variant needs this so spoil resets (which rewrite loads to +-1)
    // all land before any load has moved.
    bool balance_requires_started = false;

    std::int32_t cap() const { return load_cap ? load_cap : 2 * s; }
};

struct MajorityAgent {
    std::int32_t load = 0;
    bool positive_memory = true;  // sign at the last nonzero load
    PhaseClockState clock{};
    JuntaState junta{};
    bool finished = false;
    bool error = false;
    std::uint16_t streak = 0;  // consecutive marked responders (convergent)
    std::uint8_t backup = kStrongPos;
    bool initial_positive = true;
};

inline int majority_sign(const MajorityAgent& a) {
    if (a.load > 0) return +1;
    if (a.load < 0) return -1;
    return a.positive_memory ? +1 : -1;
}

namespace detail {

inline void set_load(MajorityAgent& a, std::int64_t v) {
    a.load = static_cast<std::int32_t>(v);
    if (v != 0) a.positive_memory = v > 0;
}

inline void multiply_load(const MajorityParams& p, MajorityAgent& u) {
    std::int64_t nl = static_cast<std::int64_t>(u.load) * p.s;
    const std::int64_t cap = p.cap();
    if (nl > cap || nl < -cap) {
        if (p.load_policy == LoadPolicy::AssertCap)
            throw StateBudgetViolation("load exceeded cap " + std::to_string(cap));
        nl = nl > 0 ? cap : -cap;
    }
    set_load(u, nl);
}

enum class RoundEntry : std::uint8_t {
    Multiply,        // entering a round always multiplies
    FinishOrMultiply  // finish on overflow / threshold load, otherwise multiply
};

inline bool clock_started(const MajorityAgent& a) { return a.clock.phase != 0 || a.clock.overflowed; }

/// The round step: balance within a round, run the clock call, and apply
/// the round-entry action exactly when the initiator's phase crosses a
/// round boundary. Multiplying at the crossing itself (rather than at some
/// later interaction inside the new round) keeps every balance between
/// equally-scaled loads, so the global bias is scaled exactly by s per
/// round and its sign can never drift.
inline void clocked_core(const MajorityParams& p, RoundEntry entry, MajorityAgent& u, MajorityAgent& v) {
    const bool may_balance =
        !p.balance_requires_started || (clock_started(u) && clock_started(v));
    if (may_balance && pc_same_round(p.clock, u.clock, v.clock)) {
        auto [hi, lo] = lb_transition(u.load, v.load);
        set_load(u, hi);
        set_load(v, lo);
    }
    const PcOutcome out = pc_call(p.clock, u.clock, v.clock);
    if (out.crossed > 0) {
        if (entry == RoundEntry::FinishOrMultiply &&
            (out.wrapped || std::abs(u.load) >= p.finish_threshold)) {
            u.finished = true;
        } else {
            multiply_load(p, u);
        }
    }
}

inline Configuration<MajorityAgent> majority_init(std::uint32_t n, std::uint32_t alpha) {
    if ((n + alpha) % 2 != 0 || alpha > n)
        throw std::invalid_argument("majority init: alpha must have n's parity and alpha <= n");
    Configuration<MajorityAgent> c;
    c.states.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const bool pos = i < (n + alpha) / 2;
        auto& a = c.states[i];
        a.load = pos ? 1 : -1;
        a.positive_memory = pos;
        a.backup = pos ? kStrongPos : kStrongNeg;
        a.initial_positive = pos;
    }
    return c;
}

inline unsigned bits_for(std::uint64_t distinct_values) {
    unsigned b = 1;
    while ((1ULL << b) < distinct_values) ++b;
    return b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trial measurement shared by the clocked majority family.
// ---------------------------------------------------------------------------

enum class MajorityVariant : std::uint8_t { Clocked, Stable, Convergent, Uniform };

struct MajorityShadow {
    MajorityParams params;
    MajorityVariant variant = MajorityVariant::Clocked;
    std::int64_t alpha = 0;
    RoundTracker rounds;

    std::int64_t sum_loads = 0;
    std::uint32_t finished_count = 0;
    std::uint32_t error_count = 0;
    std::int64_t max_abs_load = 0;
    std::uint64_t spoil_resets = 0;
    std::uint64_t balance_mixed = 0;    // balances between unequal multiply counts
    std::uint64_t multi_crossings = 0;  // updates that jumped more than one round
    std::uint64_t cap_touches = 0;      // multiplies that landed exactly on the cap

    std::vector<std::uint16_t> mult_count;
    std::vector<std::uint32_t> mult_hist;
    std::uint32_t mult_min = 0;
    std::uint64_t bias_checks = 0;
    std::uint64_t bias_failures = 0;

    void init(const std::vector<MajorityAgent>& states) {
        sum_loads = 0;
        for (const auto& s : states) sum_loads += s.load;
        alpha = sum_loads;  // signed initial bias; +alpha by construction
        mult_count.assign(states.size(), 0);
        mult_hist.assign(64, 0);
        mult_hist[0] = static_cast<std::uint32_t>(states.size());
    }

    bool core_ran(const MajorityAgent& ou, const MajorityAgent& ov, const MajorityAgent& nu,
                  const MajorityAgent& nv) const {
        switch (variant) {
            case MajorityVariant::Clocked: return true;
            case MajorityVariant::Stable:
            case MajorityVariant::Uniform: return !nu.finished && !nv.finished;
            case MajorityVariant::Convergent: return ou.streak < params.counter_max;
        }
        return false;
    }

    void after(AgentId ui, AgentId vi, const MajorityAgent& ou, const MajorityAgent& ov,
               const MajorityAgent& nu, const MajorityAgent& nv, std::uint64_t t) {
        const std::uint32_t crossed = rounds_crossed(params.clock, ou.clock, nu.clock);
        rounds.cross(ui, crossed, t);
        rounds.sample(t);
        sum_loads += (nu.load + nv.load) - (ou.load + ov.load);
        const std::int64_t m = std::max<std::int64_t>(std::llabs(nu.load), std::llabs(nv.load));
        if (m > max_abs_load) max_abs_load = m;
        finished_count += (nu.finished && !ou.finished) + (nv.finished && !ov.finished);
        error_count += (nu.error && !ou.error) + (nv.error && !ov.error);
        spoil_resets += (nu.junta.spoiled && !ou.junta.spoiled) + (nv.junta.spoiled && !ov.junta.spoiled);
        if (crossed > 1) ++multi_crossings;
        if (crossed > 0 && std::llabs(nu.load) == params.cap()) ++cap_touches;

        const bool ran = core_ran(ou, ov, nu, nv);
        const bool multiplied = ran && crossed > 0 && !(nu.finished && !ou.finished);
        if (multiplied) {
            const std::uint16_t was = mult_count[ui];
            if (was + 1 < mult_hist.size()) {
                --mult_hist[was];
                ++mult_hist[was + 1];
                mult_count[ui] = was + 1;
                while (mult_min + 1 < mult_hist.size() && mult_hist[mult_min] == 0) ++mult_min;
                // Milestone: every agent has multiplied exactly k times and
                // nothing disturbed the accounting, so the signed bias must
                // equal alpha * s^k on the nose.
                const std::uint32_t k = mult_min;
                if (mult_hist[k] == mult_count.size() && finished_count == 0 && error_count == 0 &&
                    multi_crossings == 0 && cap_touches == 0 && spoil_resets == 0 && k < 40) {
                    ++bias_checks;
                    std::int64_t expect = alpha;
                    for (std::uint32_t i = 0; i < k; ++i) expect *= params.s;
                    if (sum_loads != expect) ++bias_failures;
                }
            }
        }
        if (ran && pc_same_round(params.clock, ou.clock, ov.clock) && mult_count[ui] != mult_count[vi])
            ++balance_mixed;
    }

    void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<MajorityAgent>& states) const {
        extras["max_round"] = rounds.max_round;
        extras["spread_samples"] = static_cast<std::int64_t>(rounds.spread_samples);
        extras["spread_ok"] = static_cast<std::int64_t>(rounds.spread_ok);
        extras["max_abs_load"] = max_abs_load;
        extras["finished"] = finished_count;
        extras["errors"] = error_count;
        extras["sum_loads"] = sum_loads;
        extras["bias_checks"] = static_cast<std::int64_t>(bias_checks);
        extras["bias_failures"] = static_cast<std::int64_t>(bias_failures);
        extras["balance_mixed"] = static_cast<std::int64_t>(balance_mixed);
        if (variant == MajorityVariant::Uniform) extras["spoil_resets"] = static_cast<std::int64_t>(spoil_resets);
        std::int64_t marked = 0;
        for (const auto& s : states) marked += s.clock.marked ? 1 : 0;
        extras["marked_count"] = marked;
    }
};

// ---------------------------------------------------------------------------
// The comparatively simple clocked protocol (multiply / balance / clock).
// Correct with high probability once enough rounds have passed; no
// stability machinery of its own.
// ---------------------------------------------------------------------------

struct ClockedMajority {
    MajorityParams p;

    explicit ClockedMajority(MajorityParams params) : p(params) {
        if (p.s < 2) throw std::invalid_argument("ClockedMajority: s >= 2 required");
        if (!p.clock.unbounded() && p.clock.rounds_per_ring < 3)
            throw std::invalid_argument("ClockedMajority: r >= 3 required");
    }

    using State = MajorityAgent;

    void interact(State& u, State& v) const {
        junta_step(p.junta, u.junta, u.clock.marked, v.junta, v.clock.marked);
        detail::clocked_core(p, detail::RoundEntry::Multiply, u, v);
    }
    int output(const State& s) const { return majority_sign(s); }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        encode_common(p, s, k);
        return k.key;
    }

    static void encode_common(const MajorityParams& p, const State& s, KeyPacker& k) {
        const std::int64_t cap = p.cap();
        k.put(static_cast<std::uint64_t>(s.load + cap), detail::bits_for(2 * cap + 1));
        k.put_flag(s.positive_memory);
        k.put(s.clock.phase, p.clock.unbounded() ? 26 : detail::bits_for(p.clock.ring()));
        k.put_flag(s.clock.marked);
        k.put_flag(s.clock.new_round);
        k.put_flag(s.clock.overflowed);
        k.put(s.junta.level, 6);
        k.put_flag(s.junta.active);
        k.put_flag(s.junta.has_interacted);
        k.put_flag(s.junta.spoiled);
        k.put(s.junta.marked_meetings, 2);
    }

    using Shadow = MajorityShadow;
    Shadow make_shadow(std::uint32_t n) const {
        return Shadow{p, MajorityVariant::Clocked, 0, RoundTracker(n, n)};
    }

    static Configuration<State> init(std::uint32_t n, std::uint32_t alpha) { return detail::majority_init(n, alpha); }
};

// ---------------------------------------------------------------------------
// Stabilizing variant: finished/error bits on top of the clocked protocol,
// 4-state backup in parallel.
// ---------------------------------------------------------------------------

struct StableMajority {
    MajorityParams p;

    explicit StableMajority(MajorityParams params) : p(params) {
        if (p.s < 2) throw std::invalid_argument("StableMajority: s >= 2 required");
        if (!p.clock.unbounded() && p.clock.rounds_per_ring < 2)
            throw std::invalid_argument("StableMajority: r >= 2 required");
    }

    /// r := ceil(log_s(5n)) per the construction.
    static std::uint32_t rounds_for(std::uint32_t n, std::int32_t s) {
        std::uint32_t r = 0;
        std::uint64_t power = 1;
        const std::uint64_t target = 5ULL * n;
        while (power < target) {
            power *= static_cast<std::uint64_t>(s);
            ++r;
        }
        return std::max<std::uint32_t>(r, 2);
    }

    using State = MajorityAgent;

    void interact(State& u, State& v) const {
        junta_step(p.junta, u.junta, u.clock.marked, v.junta, v.clock.marked);
        interact_after_junta(u, v);
    }

    /// Everything below the junta layer; the uniform variant reuses this.
    void interact_after_junta(State& u, State& v) const {
        backup4_interact(u.backup, v.backup);
        if (u.finished || v.finished) {
            // A node finished by contagion first syncs its clock to the
            // partner's position (the adoption its own clock call would
            // have made) and freezes there; see the round check below.
            if (!u.finished) {
                pc_adopt(p.clock, u.clock, v.clock);
                u.finished = true;
            } else if (!v.finished) {
                pc_adopt(p.clock, v.clock, u.clock);
                v.finished = true;
            }
            if (pc_different_round(p.clock, u.clock, v.clock) || majority_sign(u) != majority_sign(v) ||
                u.error || v.error) {
                u.error = true;
                v.error = true;
            }
            return;
        }
        // Finishing happens at the initiator's own round boundary: on
        // overflow, or when the balanced load it carries into the new
        // round already has the threshold magnitude.
        detail::clocked_core(p, detail::RoundEntry::FinishOrMultiply, u, v);
    }

    /// The clock has not started for this node: counter still zero and it
    /// never wrapped. (A counter that wrapped back through zero has ticked.)
    static bool never_ticked(const State& s) { return s.clock.phase == 0 && !s.clock.overflowed; }

    /// Nobody marked, everybody out of the level race, no clock started:
    /// the clocks can never move, so outputs follow the backup forever.
    static bool junta_never_formed(const std::vector<State>& states) {
        for (const auto& s : states)
            if (!never_ticked(s) || s.clock.marked || !s.junta.has_interacted || s.junta.active)
                return false;
        return true;
    }

    int output(const State& s) const {
        if (s.error || never_ticked(s)) return backup4_output(s.backup);
        return majority_sign(s);
    }

    bool is_stable(const std::vector<State>& states) const {
        if (junta_never_formed(states))
            return backup4_uniform_sign(states, [](const State& s) { return s.backup; });
        bool all_error = true, any_error = false, any_on_backup = false;
        for (const auto& s : states) {
            if (!s.finished) return false;
            all_error = all_error && s.error;
            any_error = any_error || s.error;
        }
        if (any_error != all_error) return false;
        if (all_error) return backup4_uniform_sign(states, [](const State& s) { return s.backup; });
        const std::uint32_t round0 = pc_round(p.clock, states.front().clock);
        const int sign0 = majority_sign(states.front());
        for (const auto& s : states) {
            if (pc_round(p.clock, s.clock) != round0 || majority_sign(s) != sign0) return false;
            any_on_backup = any_on_backup || never_ticked(s);
        }
        if (any_on_backup && !backup4_uniform_sign(states, [](const State& s) { return s.backup; })) return false;
        return true;
    }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        ClockedMajority::encode_common(p, s, k);
        k.put(s.backup, 2);
        k.put_flag(s.finished);
        k.put_flag(s.error);
        return k.key;
    }

    using Shadow = MajorityShadow;
    Shadow make_shadow(std::uint32_t n) const {
        return Shadow{p, MajorityVariant::Stable, 0, RoundTracker(n, n)};
    }

    static Configuration<State> init(std::uint32_t n, std::uint32_t alpha) { return detail::majority_init(n, alpha); }
};

// ---------------------------------------------------------------------------
// Convergent variant: counts consecutive interactions with marked
// responders and falls back to the backup output at the counter limit.
// ---------------------------------------------------------------------------

struct ConvergentMajority {
    MajorityParams p;

    explicit ConvergentMajority(MajorityParams params) : p(params) {
        if (p.s < 2) throw std::invalid_argument("ConvergentMajority: s >= 2 required");
        if (p.clock.unbounded() || p.clock.rounds_per_ring != 3)
            throw std::invalid_argument("ConvergentMajority: runs on the r = 3 clock");
    }

    using State = MajorityAgent;

    void interact(State& u, State& v) const {
        junta_step(p.junta, u.junta, u.clock.marked, v.junta, v.clock.marked);
        backup4_interact(u.backup, v.backup);
        if (u.streak == p.counter_max) return;
        // Counting only marked responders leaves a junta of size one unable
        // to ever reach the limit (it cannot meet itself), which can freeze
        // a wrong guess forever. Responders that have themselves switched
        // to the backup also count; within the fast window none exist, so
        // the counter statistics are unchanged.
        if (v.clock.marked || v.streak == p.counter_max) ++u.streak;
        else u.streak = 0;
        detail::clocked_core(p, detail::RoundEntry::Multiply, u, v);
    }

    int output(const State& s) const {
        const bool never_ticked = s.clock.phase == 0 && !s.clock.overflowed;
        if (never_ticked || s.streak == p.counter_max) return backup4_output(s.backup);
        return majority_sign(s);
    }

    bool is_stable(const std::vector<State>& states) const {
        if (StableMajority::junta_never_formed(states))
            return backup4_uniform_sign(states, [](const State& s) { return s.backup; });
        for (const auto& s : states)
            if (s.streak != p.counter_max) return false;
        return backup4_uniform_sign(states, [](const State& s) { return s.backup; });
    }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        ClockedMajority::encode_common(p, s, k);
        k.put(s.backup, 2);
        k.put(s.streak, detail::bits_for(p.counter_max + 1ULL));
        return k.key;
    }

    using Shadow = MajorityShadow;
    Shadow make_shadow(std::uint32_t n) const {
        return Shadow{p, MajorityVariant::Convergent, 0, RoundTracker(n, n)};
    }

    static Configuration<State> init(std::uint32_t n, std::uint32_t alpha) { return detail::majority_init(n, alpha); }
};

// ---------------------------------------------------------------------------
// Uniform variant: the stabilizing protocol on the unbounded clock with the
// spoiling junta; a freshly spoiled node resets its phase to 0 and its load
// to +-1 for its initial opinion.
// ---------------------------------------------------------------------------

struct UniformMajority {
    MajorityParams p;

    explicit UniformMajority(MajorityParams params) : p(params), inner_(make_inner(params)) {}

    static MajorityParams make_inner(MajorityParams q) {
        q.clock.rounds_per_ring = 0;
        q.junta.kind = JuntaKind::Spoiling;
        q.balance_requires_started = true;
        return q;
    }

    using State = MajorityAgent;

    void interact(State& u, State& v) const {
        const bool u_spoiled = u.junta.spoiled;
        const bool v_spoiled = v.junta.spoiled;
        junta_step(inner_.p.junta, u.junta, u.clock.marked, v.junta, v.clock.marked);
        if (!u_spoiled && u.junta.spoiled) spoil_reset(u);
        if (!v_spoiled && v.junta.spoiled) spoil_reset(v);
        inner_.interact_after_junta(u, v);
    }

    static void spoil_reset(State& a) {
        a.clock.phase = 0;
        a.clock.new_round = false;
        detail::set_load(a, a.initial_positive ? 1 : -1);
    }

    int output(const State& s) const { return inner_.output(s); }
    bool is_stable(const std::vector<State>& states) const { return inner_.is_stable(states); }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        ClockedMajority::encode_common(inner_.p, s, k);
        k.put(s.backup, 2);
        k.put_flag(s.finished);
        k.put_flag(s.error);
        k.put_flag(s.initial_positive);
        return k.key;
    }

    using Shadow = MajorityShadow;
    Shadow make_shadow(std::uint32_t n) const {
        return Shadow{inner_.p, MajorityVariant::Uniform, 0, RoundTracker(n, n)};
    }

    static Configuration<State> init(std::uint32_t n, std::uint32_t alpha) { return detail::majority_init(n, alpha); }

private:
    StableMajority inner_;
};

// ---------------------------------------------------------------------------
// Declared per-agent state budgets (census targets). The constants absorb
// the calibrated phases-per-round and the flag bits; they sit roughly 2x
// above the worst observed census at bench sizes.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kClockedCensusConstant = 384;
inline constexpr std::uint64_t kStableCensusConstant = 96;
inline constexpr std::uint64_t kConvergentCensusConstant = 1536;

inline std::uint64_t clocked_census_budget(std::uint32_t n, std::int32_t s, std::uint32_t r) {
    return kClockedCensusConstant * (static_cast<std::uint64_t>(s) * r + ceil_log2(ceil_log2(n)));
}
inline std::uint64_t stable_census_budget(std::uint32_t n, std::int32_t s) {
    return kStableCensusConstant * static_cast<std::uint64_t>(s) * StableMajority::rounds_for(n, s);
}
inline std::uint64_t convergent_census_budget(std::uint32_t n, std::int32_t s) {
    return kConvergentCensusConstant * (static_cast<std::uint64_t>(s) + ceil_log2(ceil_log2(n)));
}

}  // namespace popsim
