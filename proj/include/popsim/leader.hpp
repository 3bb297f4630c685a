#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popsim/census.hpp"
#include "popsim/junta.hpp"
#include "popsim/phase_clock.hpp"
#include "popsim/protocol.hpp"

namespace popsim {

// ---------------------------------------------------------------------------
// 2-state backup: everyone starts as a candidate, candidates eliminate
// pairwise.
// ---------------------------------------------------------------------------

struct TwoStateLeader {
    struct State {
        bool leader = true;
    };
    void interact(State& u, State& v) const {
        if (u.leader && v.leader) v.leader = false;
    }
    int output(const State& s) const { return s.leader ? 1 : 0; }
    std::uint64_t encode(const State& s) const { return s.leader ? 1 : 0; }
    bool is_stable(const std::vector<State>& states) const {
        int leaders = 0;
        for (const auto& s : states) leaders += s.leader ? 1 : 0;
        return leaders == 1;
    }
    static Configuration<State> init(std::uint32_t n) {
        Configuration<State> c;
        c.states.resize(n);
        return c;
    }
};

// ---------------------------------------------------------------------------
// Clocked leader election: junta-driven rounds, per-round bit-block
// sampling with synthetic coins, max broadcast, and a decelerated clock
// that opens the checking phase.
// ---------------------------------------------------------------------------

struct LeaderParams {
    std::int32_t s = 2;
    ClockParams clock{};   // fast clock, r = 3
    JuntaParams junta{};   // Threshold kind
    std::uint32_t slow_round_len = 256;  // slow clock phases until the tick
    std::uint8_t marking_trials = 1;     // coin reads deciding slow marks
    std::uint8_t block_len = 1;          // sampled bits per round
    std::uint8_t warmup = 4;             // own interactions before the trials start
};

inline std::uint32_t floor_log2(std::uint64_t x) {
    return x ? 63 - static_cast<std::uint32_t>(__builtin_clzll(x)) : 0;
}

/// Parameter derivations for known n and s. The marking-trial count targets
/// a slow-marked fraction of ~log s / log n, the block length spends the
/// s-state budget on sampled bits minus the bit counter.
inline LeaderParams leader_defaults(std::uint32_t n, std::int32_t s, std::uint32_t m,
                                    std::uint32_t slow_round_len = 0) {
    if (s < 2) throw std::invalid_argument("leader_defaults: s >= 2 required");
    LeaderParams p;
    p.s = s;
    p.clock = ClockParams{m, 3};
    p.junta = JuntaParams{JuntaKind::Threshold, static_cast<std::uint8_t>(default_junta_threshold(n)), 60};
    const std::uint32_t lln = ceil_log2(ceil_log2(n));
    const std::uint32_t lls = ceil_log2(floor_log2(static_cast<std::uint64_t>(s)));
    p.marking_trials = static_cast<std::uint8_t>(std::clamp<std::int64_t>(
        static_cast<std::int64_t>(lln) - static_cast<std::int64_t>(lls), 1, 12));
    p.block_len = static_cast<std::uint8_t>(
        std::clamp<std::int64_t>(static_cast<std::int64_t>(floor_log2(s)) - lls, 1, 12));
    p.slow_round_len = slow_round_len ? slow_round_len : 4 * m;
    return p;
}

enum LeaderTerminal : std::uint8_t { kRacing = 0, kFinalLeader = 1, kFinalFollower = 2 };

struct LeaderAgent {
    bool contender = true;
    bool flip = false;
    std::uint16_t sample = 0;
    std::uint8_t sample_len = 0;
    std::uint16_t best = 0;
    std::uint8_t seen = 0;         // interactions counted toward warmup+trials
    bool coin_run = true;          // all coin reads so far were 1
    bool slow_marked = false;
    bool marking_done = false;
    PhaseClockState clock{};
    JuntaState junta{};
    bool sampling_on = false;      // first round boundary seen
    std::uint16_t slow_phase = 0;
    bool slow_pending = false;
    bool slow_ticked = false;
    std::uint8_t terminal = kRacing;
    bool backup_leader = true;
};

struct LeaderElection {
    LeaderParams p;

    explicit LeaderElection(LeaderParams params) : p(params) {
        if (p.clock.unbounded() || p.clock.rounds_per_ring < 2)
            throw std::invalid_argument("LeaderElection: finite clock with r >= 2 required");
        if (p.block_len == 0 || p.block_len > 12) throw std::invalid_argument("LeaderElection: block_len in [1,12]");
    }

    using State = LeaderAgent;

    void interact(State& u, State& v) const {
        const State u0 = u;
        const State v0 = v;

        // Always-on layers: backup, synthetic-coin flips, marking trials.
        if (u0.backup_leader && v0.backup_leader) v.backup_leader = false;
        u.flip = !u0.flip;
        v.flip = !v0.flip;
        marking_trial(u, v0.flip);
        marking_trial(v, u0.flip);

        // Checking phase. A contender finalizes on its own observed tick;
        // followers adopt the final follower state by contact; two final
        // leaders eliminate pairwise.
        if (u.terminal == kRacing && u.contender && u.slow_ticked) u.terminal = kFinalLeader;
        if (v.terminal == kRacing && v.contender && v.slow_ticked) v.terminal = kFinalLeader;
        if (u.terminal == kRacing && !u.contender && v0.terminal != kRacing) u.terminal = kFinalFollower;
        if (v.terminal == kRacing && !v.contender && u0.terminal != kRacing) v.terminal = kFinalFollower;
        if (u0.terminal == kFinalLeader && v0.terminal == kFinalLeader) v.terminal = kFinalFollower;
        if (u.terminal != kRacing) return;

        // Decelerated clock alternation: a pending step is spent on the
        // slow clock instead of the main protocol.
        if (u0.slow_pending) {
            slow_update(u, v0);
            u.slow_pending = false;
            if (u.slow_ticked && u.contender && u.terminal == kRacing) u.terminal = kFinalLeader;
            return;
        }
        if (v0.slow_marked) u.slow_pending = true;

        if (v0.terminal == kRacing) junta_step(p.junta, u.junta, u.clock.marked, v.junta, v.clock.marked);

        // Round boundary bookkeeping for the initiator.
        if (u.clock.new_round) finalize_round(u);

        // Sample one synthetic-coin bit per initiated interaction (MSB
        // first), starting with the second round.
        if (u.contender && u.sampling_on && u.sample_len < p.block_len) {
            u.sample = static_cast<std::uint16_t>((u.sample << 1) | (v0.flip ? 1 : 0));
            ++u.sample_len;
            if (u.sample_len == p.block_len && u.sample > u.best) u.best = u.sample;
        }

        // One-way max broadcast of the round's best block, then elimination.
        if (v0.terminal == kRacing && pc_same_round(p.clock, u.clock, v.clock)) {
            if (u.best > v.best) v.best = u.best;
            eliminate_if_beaten(v);
        }
        eliminate_if_beaten(u);

        pc_call(p.clock, u.clock, v.clock);
    }

    void marking_trial(State& x, bool partner_flip) const {
        if (x.marking_done) return;
        ++x.seen;
        if (x.seen > p.warmup) {
            x.coin_run = x.coin_run && partner_flip;
            if (x.seen == p.warmup + p.marking_trials) {
                x.marking_done = true;
                x.slow_marked = x.coin_run;
            }
        }
    }

    void slow_update(State& u, const State& v0) const {
        const std::uint32_t target = v0.slow_phase + (u.clock.marked ? 1 : 0);
        if (target > u.slow_phase) u.slow_phase = static_cast<std::uint16_t>(std::min(target, p.slow_round_len));
        if (u.slow_phase >= p.slow_round_len) u.slow_ticked = true;
    }

    void finalize_round(State& u) const {
        if (u.contender && u.sampling_on && u.sample_len > 0 && u.sample_len < p.block_len) {
            // Incomplete block at round end: compare the sampled prefix
            // against the broadcast value's prefix.
            const std::uint16_t best_prefix = static_cast<std::uint16_t>(u.best >> (p.block_len - u.sample_len));
            if (u.sample < best_prefix) u.contender = false;
        }
        u.sample = 0;
        u.sample_len = 0;
        u.best = 0;
        if (!u.sampling_on) {
            u.sampling_on = true;
            if (!u.clock.marked) u.contender = false;  // race is between junta members
        }
    }

    void eliminate_if_beaten(State& x) const {
        if (x.contender && x.sample_len == p.block_len && x.sample < x.best) x.contender = false;
    }

    /// 1 = Leader, 0 = Follower.
    int output(const State& s) const {
        if (s.terminal == kFinalLeader) return 1;
        if (s.terminal == kFinalFollower) return 0;
        return s.backup_leader ? 1 : 0;
    }

    bool is_stable(const std::vector<State>& states) const {
        int final_leaders = 0;
        for (const auto& s : states) {
            if (s.terminal == kRacing) return false;
            final_leaders += s.terminal == kFinalLeader ? 1 : 0;
        }
        return final_leaders == 1;
    }

    std::uint64_t encode(const State& s) const {
        KeyPacker k;
        k.put_flag(s.contender);
        k.put_flag(s.flip);
        k.put(s.sample, p.block_len);
        k.put(s.sample_len, 4);
        k.put(s.best, p.block_len);
        k.put(s.seen, 5);
        k.put_flag(s.coin_run);
        k.put_flag(s.slow_marked);
        k.put_flag(s.marking_done);
        k.put(s.clock.phase, 10);
        k.put_flag(s.clock.marked);
        k.put_flag(s.clock.new_round);
        k.put_flag(s.clock.overflowed);
        k.put(s.junta.level, 5);
        k.put_flag(s.junta.active);
        k.put_flag(s.junta.has_interacted);
        k.put(s.junta.marked_meetings, 2);
        k.put_flag(s.sampling_on);
        k.put(s.slow_phase, 12);
        k.put_flag(s.slow_pending);
        k.put_flag(s.slow_ticked);
        k.put(s.terminal, 2);
        k.put_flag(s.backup_leader);
        return k.key;
    }

    struct Shadow {
        ClockParams clock;
        std::uint8_t block_len = 1;
        RoundTracker rounds;
        std::uint32_t contenders_lost = 0;
        std::optional<std::uint64_t> first_tick;
        std::uint64_t prefix_finalizations = 0;
        std::uint32_t slow_marked_count = 0;

        void after(AgentId ui, AgentId, const LeaderAgent& ou, const LeaderAgent& ov, const LeaderAgent& nu,
                   const LeaderAgent& nv, std::uint64_t t) {
            rounds.cross(ui, rounds_crossed(clock, ou.clock, nu.clock), t);
            rounds.sample(t);
            contenders_lost += (ou.contender && !nu.contender) + (ov.contender && !nv.contender);
            if (!first_tick && (nu.slow_ticked || nv.slow_ticked)) first_tick = t;
            if (ou.clock.new_round && ou.contender && ou.sampling_on && ou.sample_len > 0 &&
                ou.sample_len < block_len)
                ++prefix_finalizations;
            slow_marked_count += (nu.slow_marked && !ou.slow_marked) + (nv.slow_marked && !ov.slow_marked);
        }
        void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<LeaderAgent>& states) const {
            extras["max_round"] = rounds.max_round;
            extras["spread_samples"] = static_cast<std::int64_t>(rounds.spread_samples);
            extras["spread_ok"] = static_cast<std::int64_t>(rounds.spread_ok);
            extras["contenders_lost"] = contenders_lost;
            extras["slow_marked"] = slow_marked_count;
            if (first_tick) extras["t_first_tick"] = static_cast<std::int64_t>(*first_tick);
            std::int64_t contenders = 0, finals = 0, leaders = 0;
            for (const auto& s : states) {
                contenders += s.contender ? 1 : 0;
                finals += s.terminal != kRacing ? 1 : 0;
                leaders += s.terminal == kFinalLeader ? 1 : 0;
            }
            extras["contenders_final"] = contenders;
            extras["terminal_final"] = finals;
            extras["final_leaders"] = leaders;
        }
    };
    Shadow make_shadow(std::uint32_t n) const { return Shadow{p.clock, p.block_len, RoundTracker(n, n)}; }

    static Configuration<State> init(std::uint32_t n) {
        Configuration<State> c;
        c.states.resize(n);
        return c;
    }
};

}  // namespace popsim
