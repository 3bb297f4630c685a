#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "popsim/census.hpp"
#include "popsim/protocol.hpp"

namespace popsim {

/// How marked (junta) agents are extracted from the level process.
enum class JuntaKind : std::uint8_t {
    LevelsOnly,  // plain level computation, nobody gets marked
    Spoiling,    // mark on inactivation at level >= 1, unmark+spoil on meeting a higher level
    Threshold,   // mark on reaching the threshold level, recycle forgotten levels
};

struct JuntaParams {
    JuntaKind kind = JuntaKind::Threshold;
    std::uint8_t threshold_level = 1;  // Threshold kind only
    std::uint8_t level_cap = 60;       // levels saturate here (keeps oracle spaces finite)
};

inline std::uint32_t ceil_log2(std::uint64_t x) {
    if (x <= 1) return 0;
    return 64 - static_cast<std::uint32_t>(__builtin_clzll(x - 1));
}

/// Default threshold level for a known population size:
/// max(1, ceil(log log n) - 4). The level-1 floor holds up to n = 2^32;
/// the marked set is then about half the agents, which still sits under
/// the n^0.98 junta bound at bench sizes and just asks for a larger
/// calibrated phases-per-round constant.
inline std::uint32_t default_junta_threshold(std::uint64_t n) {
    const std::uint32_t ll = ceil_log2(ceil_log2(n));
    return ll > 4 ? ll - 4 : 1;
}

struct JuntaState {
    std::uint8_t level = 0;
    bool active = true;
    bool has_interacted = false;
    bool spoiled = false;
    std::uint8_t marked_meetings = 0;
};

namespace detail {

inline void junta_first_interaction(JuntaState& s, bool initiator, bool& marked, const JuntaParams& p) {
    s.has_interacted = true;
    if (initiator) {
        s.level = 1;
        s.active = true;
        if (p.kind == JuntaKind::Threshold && p.threshold_level == 1) marked = true;
    } else {
        s.level = 0;
        s.active = false;
    }
}

}  // namespace detail

/// One junta interaction. `u_marked` / `v_marked` alias wherever the caller
/// stores the marker bit (standalone runs keep it beside the level; phase
/// clock protocols keep it in the clock state). All reads use the
/// pre-interaction snapshots.
inline void junta_step(const JuntaParams& p, JuntaState& u, bool& u_marked, JuntaState& v, bool& v_marked) {
    const JuntaState u0 = u;
    const JuntaState v0 = v;
    const bool u_marked0 = u_marked;
    const bool v_marked0 = v_marked;

    if (!u0.has_interacted) detail::junta_first_interaction(u, true, u_marked, p);
    if (!v0.has_interacted) detail::junta_first_interaction(v, false, v_marked, p);

    // Level step: only an active initiator that is past its first
    // interaction changes; the responder is only read.
    if (u0.has_interacted && u0.active) {
        std::uint8_t responder_level = v0.level;
        if (p.kind == JuntaKind::Spoiling && v0.spoiled) responder_level = 0;
        if (!v0.has_interacted) responder_level = 0;
        if (responder_level >= u0.level) {
            if (u.level < p.level_cap) {
                ++u.level;
                if (p.kind == JuntaKind::Threshold && u.level == p.threshold_level) u_marked = true;
            }
        } else {
            u.active = false;
            if (p.kind == JuntaKind::Spoiling && u0.level >= 1) u_marked = true;
        }
    }

    if (p.kind == JuntaKind::Spoiling) {
        // An inactive, not yet spoiled node that sees a strictly higher
        // level drops its marker and afterwards only mirrors levels.
        auto spoil_check = [&](const JuntaState& x0, JuntaState& x, bool& x_marked, const JuntaState& y0) {
            if (x0.has_interacted && !x0.active && !x0.spoiled && x0.level >= 1 && y0.level > x0.level) {
                x.spoiled = true;
                x_marked = false;
            }
            if (x0.spoiled && y0.level > x.level) x.level = y0.level;
        };
        spoil_check(u0, u, u_marked, v0);
        spoil_check(v0, v, v_marked, u0);
    }

    if (p.kind == JuntaKind::Threshold) {
        // Inactive nodes below the threshold forget their level after
        // meeting two marked nodes (in either role).
        auto recycle_check = [&](const JuntaState& x0, JuntaState& x, bool partner_marked) {
            if (!partner_marked || x0.active || !x0.has_interacted) return;
            if (x0.level == 0 || x0.level >= p.threshold_level) return;
            if (++x.marked_meetings >= 2) {
                x.level = 0;
                x.marked_meetings = 0;
            }
        };
        recycle_check(u0, u, v_marked0);
        recycle_check(v0, v, u_marked0);
    }
}

/// Tracks L*, the B_l table and the inactivation time of a run. B_l counts
/// agents that reached level >= l before becoming inactive, so levels
/// adopted after spoiling do not contribute.
struct JuntaStatsShadow {
    std::uint32_t n = 0;
    std::uint32_t active_remaining = 0;
    std::vector<std::uint8_t> level_at_inactivation;
    std::vector<bool> inactive;
    std::uint64_t last_inactivation_t = 0;
    std::optional<std::uint64_t> t_all_inactive;

    explicit JuntaStatsShadow(std::uint32_t n_ = 0)
        : n(n_), active_remaining(n_), level_at_inactivation(n_, 0), inactive(n_, false) {}

    void record(AgentId who, const JuntaState& before, const JuntaState& after, std::uint64_t t) {
        if (inactive[who]) return;
        const bool was_active = !before.has_interacted || before.active;
        const bool now_inactive = after.has_interacted && !after.active;
        if (was_active && now_inactive) {
            inactive[who] = true;
            level_at_inactivation[who] = after.level;
            last_inactivation_t = t;
            --active_remaining;
            if (active_remaining == 0) t_all_inactive = t;
        }
    }

    std::uint32_t l_star() const {
        std::uint32_t m = 0;
        for (std::uint32_t i = 0; i < n; ++i)
            if (inactive[i] && level_at_inactivation[i] > m) m = level_at_inactivation[i];
        return m;
    }
    /// #agents that reached level >= l before inactivation.
    std::uint32_t b_at(std::uint32_t l) const {
        if (l == 0) return n;
        std::uint32_t c = 0;
        for (std::uint32_t i = 0; i < n; ++i)
            if (inactive[i] && level_at_inactivation[i] >= l) ++c;
        return c;
    }
};

/// Standalone junta protocol (level process plus the chosen extraction
/// rule); the composed protocols embed junta_step directly.
struct JuntaProcess {
    JuntaParams params;

    struct State {
        JuntaState j;
        bool marked = false;
    };

    void interact(State& u, State& v) const { junta_step(params, u.j, u.marked, v.j, v.marked); }
    int output(const State& s) const { return s.marked ? 1 : 0; }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        k.put(s.j.level, 6);
        k.put_flag(s.j.active);
        k.put_flag(s.j.has_interacted);
        k.put_flag(s.j.spoiled);
        k.put(s.j.marked_meetings, 2);
        k.put_flag(s.marked);
        return k.key;
    }

    struct Shadow {
        JuntaStatsShadow stats;

        void after(AgentId ui, AgentId vi, const State& ou, const State& ov, const State& nu, const State& nv,
                   std::uint64_t t) {
            stats.record(ui, ou.j, nu.j, t);
            stats.record(vi, ov.j, nv.j, t);
        }
        std::optional<std::uint64_t> done_at() const { return stats.t_all_inactive; }
        void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<State>& states) const {
            extras["all_inactive"] = stats.t_all_inactive ? 1 : 0;
            if (stats.t_all_inactive) extras["t_all_inactive"] = static_cast<std::int64_t>(*stats.t_all_inactive);
            const std::uint32_t ls = stats.l_star();
            extras["l_star"] = ls;
            for (std::uint32_t l = 0; l <= ls; ++l)
                extras["b_" + std::to_string(l)] = stats.b_at(l);
            std::int64_t marked = 0;
            for (const auto& s : states) marked += s.marked ? 1 : 0;
            extras["marked_count"] = marked;
        }
    };
    Shadow make_shadow(std::uint32_t n) const { return Shadow{JuntaStatsShadow(n)}; }

    static Configuration<State> init(std::uint32_t n) {
        Configuration<State> c;
        c.states.resize(n);
        return c;
    }
};

}  // namespace popsim
