#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popsim/engine.hpp"
#include "popsim/protocol.hpp"

namespace popsim {

// ---------------------------------------------------------------------------
// One-way epidemic: (x, y) -> (x, max{x, y}) over {0, 1}.
// ---------------------------------------------------------------------------

inline std::pair<bool, bool> epidemic_transition(bool x, bool y) {
    return {x, x || y};
}

struct Epidemic {
    struct State {
        bool infected = false;
    };

    void interact(State& u, State& v) const { v.infected = u.infected || v.infected; }
    int output(const State& s) const { return s.infected ? 1 : 0; }
    std::uint64_t encode(const State& s) const { return s.infected ? 1 : 0; }

    /// Exact infection count; reports the interaction that infected the
    /// last agent. All-infected is the unique stable outcome, so this is
    /// both the completion and the stabilization time.
    struct Shadow {
        std::uint32_t n = 0;
        std::uint32_t infected = 0;
        std::optional<std::uint64_t> t_all;

        void init(const std::vector<State>& states) {
            infected = 0;
            for (const auto& s : states) infected += s.infected ? 1 : 0;
            if (infected == n) t_all = 0;
        }
        void after(AgentId, AgentId, const State&, const State& old_v, const State&, const State& new_v,
                   std::uint64_t t) {
            if (!old_v.infected && new_v.infected && ++infected == n) t_all = t;
        }
        std::optional<std::uint64_t> done_at() const { return t_all; }
        std::optional<std::uint64_t> stable_at() const { return t_all; }
        void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<State>&) const {
            extras["infected_final"] = infected;
            if (t_all) extras["t_infection"] = static_cast<std::int64_t>(*t_all);
        }
    };
    Shadow make_shadow(std::uint32_t n) const { return Shadow{n}; }

    static Configuration<State> init(std::uint32_t n, std::uint32_t infected_count = 1) {
        Configuration<State> c;
        c.states.resize(n);
        for (std::uint32_t i = 0; i < infected_count && i < n; ++i) c.states[i].infected = true;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Load balancing: (x, y) -> (ceil((x+y)/2), floor((x+y)/2)).
// ---------------------------------------------------------------------------

inline std::pair<std::int64_t, std::int64_t> lb_transition(std::int64_t x, std::int64_t y) {
    const std::int64_t sum = x + y;
    const std::int64_t lo = sum >> 1;        // floor
    return {sum - lo, lo};
}

struct LoadBalancing {
    std::int64_t m_cap;  // state space is [-m_cap, m_cap]

    explicit LoadBalancing(std::int64_t cap) : m_cap(cap) {
        if (cap <= 0) throw std::invalid_argument("LoadBalancing: cap must be positive");
    }

    struct State {
        std::int32_t load = 0;
    };

    void interact(State& u, State& v) const {
        auto [hi, lo] = lb_transition(u.load, v.load);
        u.load = static_cast<std::int32_t>(hi);
        v.load = static_cast<std::int32_t>(lo);
    }
    int output(const State& s) const { return s.load; }
    std::uint64_t encode(const State& s) const { return static_cast<std::uint64_t>(s.load + m_cap); }

    /// Maintained value-count table with lazy min/max pointers, so the
    /// discrepancy <= 2 hitting time needs no full scans.
    struct Shadow {
        std::int64_t cap = 0;
        std::vector<std::uint32_t> counts;  // load + cap -> #agents
        std::int64_t lo = 0, hi = 0;        // current min/max load
        std::int64_t sum = 0;
        std::optional<std::uint64_t> t_balanced;

        void init(const std::vector<State>& states) {
            counts.assign(static_cast<std::size_t>(2 * cap + 1), 0);
            lo = cap;
            hi = -cap;
            sum = 0;
            for (const auto& s : states) {
                bump(s.load, +1);
                sum += s.load;
            }
            if (hi - lo <= 2) t_balanced = 0;
        }
        void bump(std::int64_t value, int delta) {
            auto& c = counts[static_cast<std::size_t>(value + cap)];
            c = static_cast<std::uint32_t>(static_cast<std::int64_t>(c) + delta);
            if (delta > 0) {
                if (value < lo) lo = value;
                if (value > hi) hi = value;
            }
        }
        void settle() {
            while (lo < hi && counts[static_cast<std::size_t>(lo + cap)] == 0) ++lo;
            while (hi > lo && counts[static_cast<std::size_t>(hi + cap)] == 0) --hi;
        }
        void after(AgentId, AgentId, const State& ou, const State& ov, const State& nu, const State& nv,
                   std::uint64_t t) {
            bump(ou.load, -1);
            bump(ov.load, -1);
            bump(nu.load, +1);
            bump(nv.load, +1);
            settle();
            if (!t_balanced && hi - lo <= 2) t_balanced = t;
        }
        std::optional<std::uint64_t> done_at() const { return t_balanced; }
        void fill_extras(std::map<std::string, std::int64_t>& extras, const std::vector<State>& states) const {
            extras["discrepancy_final"] = hi - lo;
            extras["load_sum"] = sum;
            if (t_balanced) extras["t_balanced"] = static_cast<std::int64_t>(*t_balanced);
            std::int64_t check = 0;
            for (const auto& s : states) check += s.load;
            extras["sum_conserved"] = (check == sum) ? 1 : 0;
        }
    };
    Shadow make_shadow(std::uint32_t) const { return Shadow{m_cap}; }

    /// Half the agents at +delta/2, half at -delta/2 (odd agent at 0):
    /// sum-preserving start with discrepancy exactly delta.
    static Configuration<State> init(std::uint32_t n, std::int64_t delta) {
        if (delta % 2 != 0) throw std::invalid_argument("LoadBalancing::init: delta must be even");
        Configuration<State> c;
        c.states.resize(n);
        for (std::uint32_t i = 0; i < n / 2; ++i) c.states[i].load = static_cast<std::int32_t>(delta / 2);
        for (std::uint32_t i = n / 2; i + (n % 2) < n; ++i)
            c.states[i + (n % 2)].load = static_cast<std::int32_t>(-delta / 2);
        return c;
    }
};

// ---------------------------------------------------------------------------
// Timing experiments.
// ---------------------------------------------------------------------------

/// Interaction index at which the last agent becomes infected, one sample
/// per trial. Starts from exactly one infected agent.
inline std::vector<std::uint64_t> infection_time_experiment(std::uint32_t n, std::uint32_t trials,
                                                            std::uint64_t master_seed,
                                                            std::uint64_t budget = 0) {
    if (n < 2) throw std::invalid_argument("infection_time_experiment: n >= 2 required");
    Epidemic proto;
    RunOptions opt;
    opt.budget = budget ? budget : 200 * static_cast<std::uint64_t>(n) * (64 - __builtin_clzll(n));
    opt.expected_output = 1;
    std::vector<std::uint64_t> samples;
    samples.reserve(trials);
    for (std::uint32_t i = 0; i < trials; ++i) {
        auto res = run_trial(proto, Epidemic::init(n), opt, Rng(trial_seed(master_seed, i)));
        if (!res.shadow.t_all) throw std::runtime_error("infection_time_experiment: budget hit before full infection");
        samples.push_back(*res.shadow.t_all);
    }
    return samples;
}

/// First interaction index after which max load - min load <= 2, one
/// sample per trial. Censored samples are returned as nullopt.
inline std::vector<std::optional<std::uint64_t>> balancing_time_experiment(std::uint32_t n, std::int64_t delta,
                                                                           std::uint32_t trials,
                                                                           std::uint64_t master_seed,
                                                                           std::uint64_t budget) {
    LoadBalancing proto(std::llabs(delta) + 1);
    RunOptions opt;
    opt.budget = budget;
    std::vector<std::optional<std::uint64_t>> samples;
    samples.reserve(trials);
    for (std::uint32_t i = 0; i < trials; ++i) {
        auto res = run_trial(proto, LoadBalancing::init(n, delta), opt, Rng(trial_seed(master_seed, i)));
        samples.push_back(res.shadow.t_balanced);
    }
    return samples;
}

}  // namespace popsim
