#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "popsim/census.hpp"
#include "popsim/metrics.hpp"
#include "popsim/protocol.hpp"
#include "popsim/rng.hpp"

namespace popsim {

struct RunOptions {
    std::uint64_t budget = 0;          // required, > 0
    std::uint64_t probe_cadence = 0;   // 0 => n
    std::optional<int> expected_output;
    bool track_census = false;
    bool stop_when_stable = true;
};

namespace detail {

template <class Shadow>
concept ShadowStops = requires(const Shadow s) {
    { s.done_at() } -> std::convertible_to<std::optional<std::uint64_t>>;
};

template <class Shadow>
concept ShadowStabilizes = requires(const Shadow s) {
    { s.stable_at() } -> std::convertible_to<std::optional<std::uint64_t>>;
};

struct NoShadow {
    template <class State>
    void after(AgentId, AgentId, const State&, const State&, const State&, const State&, std::uint64_t) {}
};

}  // namespace detail

template <class P>
struct shadow_of {
    using type = detail::NoShadow;
};
template <HasShadow P>
struct shadow_of<P> {
    using type = typename P::Shadow;
};

template <Protocol P>
struct TrialResult {
    TrialMetrics metrics;
    std::vector<ProbeRecord> probes;
    Configuration<typename P::State> config;
    typename shadow_of<P>::type shadow;
    std::vector<std::uint64_t> census_per_agent;
};

/// Apply one interaction to named agents. Exactly the two named states may
/// change; pair order is (initiator, responder).
template <Protocol P>
void apply_interaction(Configuration<typename P::State>& config, const P& proto, AgentId u, AgentId v) {
    if (u == v) throw std::invalid_argument("apply_interaction: initiator == responder");
    proto.interact(config.states[u], config.states[v]);
    ++config.interactions_elapsed;
}

/// Run one trial: simulate until the budget is exhausted, the stability
/// predicate holds, or the protocol's shadow reports completion. Probes are
/// taken every `probe_cadence` interactions plus once at the final state.
/// Deterministic given the seed.
template <Protocol P>
TrialResult<P> run_trial(const P& proto, Configuration<typename P::State> init, const RunOptions& opt, Rng rng) {
    if (opt.budget == 0) throw std::invalid_argument("run_trial: budget must be positive");
    const std::uint32_t n = init.n();
    if (n < 2) throw std::invalid_argument("run_trial: population must have at least 2 agents");
    const std::uint64_t cadence = opt.probe_cadence ? opt.probe_cadence : n;

    TrialResult<P> result;
    result.config = std::move(init);
    auto& states = result.config.states;

    if constexpr (HasShadow<P>) result.shadow = proto.make_shadow(n);
    auto& shadow = result.shadow;
    if constexpr (requires { shadow.init(states); }) shadow.init(states);

    std::optional<CensusTracker> census;
    if (opt.track_census) {
        census.emplace(n);
        for (AgentId i = 0; i < n; ++i) census->visit(i, proto.encode(states[i]));
    }

    std::optional<std::uint64_t> stable_probe_t;
    auto probe = [&](std::uint64_t t) -> const ProbeRecord& {
        ProbeRecord rec;
        rec.t = t;
        if (opt.expected_output) {
            rec.all_correct = true;
            for (const auto& s : states)
                if (proto.output(s) != *opt.expected_output) { rec.all_correct = false; break; }
        }
        if constexpr (HasStablePredicate<P>) {
            rec.stable_hint = proto.is_stable(states);
            if (rec.stable_hint && !stable_probe_t) stable_probe_t = t;
        }
        result.probes.push_back(rec);
        return result.probes.back();
    };

    probe(0);
    bool stopped = result.probes.back().stable_hint && opt.stop_when_stable;

    std::uint64_t t = 0;
    while (!stopped && t < opt.budget) {
        ++t;
        const AgentPair pair = pick_pair(rng, n);
        const auto old_u = states[pair.initiator];
        const auto old_v = states[pair.responder];
        proto.interact(states[pair.initiator], states[pair.responder]);
        result.config.interactions_elapsed = t;

        if (census) {
            census->visit(pair.initiator, proto.encode(states[pair.initiator]));
            census->visit(pair.responder, proto.encode(states[pair.responder]));
        }
        shadow.after(pair.initiator, pair.responder, old_u, old_v,
                     states[pair.initiator], states[pair.responder], t);

        if constexpr (detail::ShadowStops<typename shadow_of<P>::type>) {
            if (shadow.done_at()) {
                probe(t);
                stopped = true;
                break;
            }
        }
        if (t % cadence == 0) {
            const ProbeRecord& rec = probe(t);
            if (rec.stable_hint && opt.stop_when_stable) stopped = true;
        }
    }
    if (result.probes.back().t != result.config.interactions_elapsed) probe(result.config.interactions_elapsed);

    auto& m = result.metrics;
    m.interactions_run = result.config.interactions_elapsed;
    m.final_output_correct = result.probes.back().all_correct;
    m.convergence = measure_convergence(result.probes);
    if constexpr (detail::ShadowStabilizes<typename shadow_of<P>::type>) {
        auto exact = shadow.stable_at();
        m.stabilization = exact ? Censorable::at(*exact) : Censorable::censored_mark();
    } else {
        m.stabilization = stable_probe_t ? Censorable::at(*stable_probe_t) : Censorable::censored_mark();
    }
    if (census) {
        m.distinct_states_max = census->max_per_agent();
        m.extras["census_global"] = static_cast<std::int64_t>(census->total_distinct());
        result.census_per_agent = census->per_agent();
    }
    if constexpr (requires { shadow.fill_extras(m.extras, states); }) {
        shadow.fill_extras(m.extras, states);
    }
    return result;
}

}  // namespace popsim
