#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "popsim/engine.hpp"
#include "popsim/junta.hpp"
#include "popsim/leader.hpp"
#include "popsim/majority.hpp"
#include "popsim/phase_clock.hpp"
#include "popsim/primitives.hpp"

namespace popsim {

/// A reproducible batch: protocol choice plus parameters. Zero means
/// "derive the default" for the optional numeric fields.
struct ExperimentSpec {
    std::string protocol;
    std::uint32_t n = 0;
    std::int32_t s = 2;
    std::uint32_t r = 0;
    std::uint32_t alpha = 1;
    std::uint32_t m = 0;
    std::uint32_t trials = 1;
    std::uint64_t seed = 1;
    std::uint64_t budget = 0;
    std::uint64_t cadence = 0;
    std::int64_t delta = 0;          // load balancing; 0 => n
    std::uint32_t slow_m = 0;        // leader
    std::uint32_t junta_level = 0;   // threshold override
    std::uint16_t counter_max = 600;
    std::int32_t finish_threshold = 3;
    bool census = false;
    bool clamp = false;
    bool keep_probes = false;  // retain per-trial probe records in the rows
    std::uint32_t threads = 0;  // 0 => hardware concurrency
};

/// One CSV/JSON row. Fixed column order:
/// trial_id,protocol,n,s,r,alpha,m,seed,t_convergence,t_stabilization,
/// censored,correct,distinct_states_max,extras_json
struct TrialRow {
    std::uint32_t trial_id = 0;
    std::string protocol;
    std::uint32_t n = 0;
    std::int32_t s = 0;
    std::uint32_t r = 0;
    std::uint32_t alpha = 0;
    std::uint32_t m = 0;
    std::uint64_t seed = 0;
    Censorable convergence;
    Censorable stabilization;
    bool correct = false;
    std::optional<std::uint64_t> distinct_states_max;
    std::string extras_json = "{}";
    bool failed = false;  // an assertion (state budget etc.) aborted the trial
    std::string failure;
    std::vector<ProbeRecord> probes;  // kept only when the spec asks for them

    bool censored() const { return convergence.censored() || stabilization.censored(); }
};

namespace detail {

inline std::string extras_to_json(const std::map<std::string, std::int64_t>& extras) {
    nlohmann::json j(extras);
    return j.dump();
}

/// Runs `spec.trials` trials of a protocol in parallel and collects rows in
/// trial order. The per-trial seed is mix(master, index), so results do not
/// depend on thread scheduling.
template <class ProtoFactory, class InitFactory>
std::vector<TrialRow> run_batch(const ExperimentSpec& spec, ProtoFactory make_proto, InitFactory make_init,
                                std::optional<int> expected, std::uint64_t default_budget) {
    const std::uint32_t workers =
        std::max(1u, spec.threads ? spec.threads : std::thread::hardware_concurrency());
    std::vector<TrialRow> rows(spec.trials);
    std::atomic<std::uint32_t> next{0};

    auto work = [&] {
        auto proto = make_proto();
        for (;;) {
            const std::uint32_t i = next.fetch_add(1);
            if (i >= spec.trials) return;
            TrialRow& row = rows[i];
            row.trial_id = i;
            row.protocol = spec.protocol;
            row.n = spec.n;
            row.s = spec.s;
            row.r = spec.r;
            row.alpha = spec.alpha;
            row.m = spec.m;
            row.seed = trial_seed(spec.seed, i);
            RunOptions opt;
            opt.budget = spec.budget ? spec.budget : default_budget;
            opt.probe_cadence = spec.cadence;
            opt.expected_output = expected;
            opt.track_census = spec.census;
            try {
                auto res = run_trial(proto, make_init(), opt, Rng(row.seed));
                row.convergence = res.metrics.convergence;
                row.stabilization = res.metrics.stabilization;
                row.correct = res.metrics.final_output_correct;
                row.distinct_states_max = res.metrics.distinct_states_max;
                if (spec.keep_probes) row.probes = std::move(res.probes);
                auto extras = res.metrics.extras;
                extras["budget"] = static_cast<std::int64_t>(opt.budget);
                // Convergence/stabilization estimates are probe-resolution
                // quantities; the resolution travels with them.
                extras["cadence"] = static_cast<std::int64_t>(opt.probe_cadence ? opt.probe_cadence : spec.n);
                row.extras_json = extras_to_json(extras);
            } catch (const std::exception& e) {
                row.failed = true;
                row.failure = e.what();
                row.extras_json = nlohmann::json{{"failure", e.what()}}.dump();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::uint32_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

inline void validate(const ExperimentSpec& spec, bool needs_alpha) {
    if (spec.n < 2) throw std::invalid_argument("experiment: n >= 2 required");
    if (spec.trials == 0) return;  // header-only run is legal
    if (needs_alpha) {
        if (spec.alpha > spec.n || (spec.n + spec.alpha) % 2 != 0)
            throw std::invalid_argument("experiment: alpha must satisfy alpha <= n and alpha == n (mod 2)");
    }
}

inline JuntaParams junta_for(const ExperimentSpec& spec, JuntaKind kind) {
    const std::uint32_t level = spec.junta_level ? spec.junta_level : default_junta_threshold(spec.n);
    return JuntaParams{kind, static_cast<std::uint8_t>(level), 60};
}

inline MajorityParams majority_params(const ExperimentSpec& spec, std::uint32_t r) {
    if (spec.m == 0) throw std::invalid_argument("experiment: clocked protocols need m (calibrate first)");
    MajorityParams p;
    p.s = spec.s;
    p.clock = ClockParams{spec.m, r};
    p.junta = junta_for(spec, JuntaKind::Threshold);
    p.load_policy = spec.clamp ? LoadPolicy::ClampCap : LoadPolicy::AssertCap;
    p.counter_max = spec.counter_max;
    p.finish_threshold = spec.finish_threshold;
    return p;
}

}  // namespace detail

/// Runs the batch described by the spec; one row per trial, deterministic
/// for a fixed master seed.
inline std::vector<TrialRow> run_experiment(ExperimentSpec spec) {
    const double n = spec.n;
    const double nln = n * std::log(n);

    // Resolve per-protocol defaults so rows record the effective values.
    if (spec.r == 0) {
        if (spec.protocol == "stable-majority")
            spec.r = spec.n >= 2 ? StableMajority::rounds_for(spec.n, spec.s) : 0;
        else if (spec.protocol == "convergent-majority" || spec.protocol == "clocked-majority" ||
                 spec.protocol == "leader")
            spec.r = 3;
        else if (spec.protocol == "clock")
            spec.r = 64;
    }

    if (spec.protocol == "epidemic") {
        detail::validate(spec, false);
        return detail::run_batch(
            spec, [] { return Epidemic{}; }, [&] { return Epidemic::init(spec.n, 1); }, 1,
            static_cast<std::uint64_t>(40.0 * nln) + 64);
    }
    if (spec.protocol == "load-balancing") {
        detail::validate(spec, false);
        const std::int64_t delta = spec.delta ? spec.delta : static_cast<std::int64_t>(spec.n);
        const auto cap = std::max<std::int64_t>(std::llabs(delta), 2);
        return detail::run_batch(
            spec, [=] { return LoadBalancing{cap}; }, [&] { return LoadBalancing::init(spec.n, delta); },
            std::nullopt,
            static_cast<std::uint64_t>(20.0 * n * std::log(n * static_cast<double>(std::llabs(delta) + 1))) + 64);
    }
    if (spec.protocol == "junta-levels" || spec.protocol == "form-junta" || spec.protocol == "form-junta-ext") {
        detail::validate(spec, false);
        const JuntaKind kind = spec.protocol == "junta-levels"  ? JuntaKind::LevelsOnly
                               : spec.protocol == "form-junta"  ? JuntaKind::Spoiling
                                                                : JuntaKind::Threshold;
        return detail::run_batch(
            spec, [&, kind] { return JuntaProcess{detail::junta_for(spec, kind)}; },
            [&] { return JuntaProcess::init(spec.n); }, std::nullopt,
            static_cast<std::uint64_t>(40.0 * nln));
    }
    if (spec.protocol == "clock") {
        detail::validate(spec, false);
        if (spec.m == 0) throw std::invalid_argument("experiment: clock runs need m");
        return detail::run_batch(
            spec,
            [&] {
                return JuntaClock{detail::junta_for(spec, JuntaKind::Threshold), ClockParams{spec.m, spec.r}};
            },
            [&] { return JuntaClock::init(spec.n); }, std::nullopt,
            static_cast<std::uint64_t>(60.0 * spec.m * n + 150.0 * nln));
    }
    if (spec.protocol == "clocked-majority") {
        detail::validate(spec, true);
        auto params = detail::majority_params(spec, spec.r);
        return detail::run_batch(
            spec, [=] { return ClockedMajority{params}; },
            [&] { return ClockedMajority::init(spec.n, spec.alpha); }, +1,
            static_cast<std::uint64_t>(40.0 * nln * spec.r));
    }
    if (spec.protocol == "stable-majority") {
        detail::validate(spec, true);
        const auto params = detail::majority_params(spec, spec.r);
        return detail::run_batch(
            spec, [=] { return StableMajority{params}; },
            [&] { return StableMajority::init(spec.n, spec.alpha); }, +1,
            static_cast<std::uint64_t>(50.0 * nln * StableMajority::rounds_for(spec.n, spec.s)));
    }
    if (spec.protocol == "convergent-majority") {
        detail::validate(spec, true);
        auto params = detail::majority_params(spec, 3);
        params.load_policy = LoadPolicy::ClampCap;  // runs outlive the window by design
        return detail::run_batch(
            spec, [=] { return ConvergentMajority{params}; },
            [&] { return ConvergentMajority::init(spec.n, spec.alpha); }, +1,
            static_cast<std::uint64_t>(50.0 * nln * StableMajority::rounds_for(spec.n, spec.s)));
    }
    if (spec.protocol == "uniform-majority") {
        detail::validate(spec, true);
        auto params = detail::majority_params(spec, 0);
        return detail::run_batch(
            spec, [=] { return UniformMajority{params}; },
            [&] { return UniformMajority::init(spec.n, spec.alpha); }, +1,
            static_cast<std::uint64_t>(100.0 * nln * StableMajority::rounds_for(spec.n, spec.s)));
    }
    if (spec.protocol == "leader") {
        detail::validate(spec, false);
        if (spec.m == 0) throw std::invalid_argument("experiment: leader runs need m");
        auto params = leader_defaults(spec.n, spec.s, spec.m, spec.slow_m);
        if (spec.junta_level)
            params.junta.threshold_level = static_cast<std::uint8_t>(spec.junta_level);
        const std::uint64_t tick_scale =
            static_cast<std::uint64_t>(params.slow_round_len) << params.marking_trials;
        return detail::run_batch(
            spec, [=] { return LeaderElection{params}; }, [&] { return LeaderElection::init(spec.n); },
            std::nullopt, 8 * tick_scale * spec.n + static_cast<std::uint64_t>(100.0 * nln));
    }
    if (spec.protocol == "backup4") {
        detail::validate(spec, true);
        return detail::run_batch(
            spec, [] { return FourStateMajority{}; },
            [&] { return FourStateMajority::init(spec.n, spec.alpha); }, +1,
            static_cast<std::uint64_t>(4.0 * n * n * std::log(n)) + 64);
    }
    if (spec.protocol == "backup2") {
        detail::validate(spec, false);
        return detail::run_batch(
            spec, [] { return TwoStateLeader{}; }, [&] { return TwoStateLeader::init(spec.n); },
            std::nullopt, static_cast<std::uint64_t>(4.0 * n * n * std::log(n)) + 64);
    }
    throw std::invalid_argument("unknown protocol: " + spec.protocol);
}

// ---------------------------------------------------------------------------
// Report sinks. The CSV header is written even for empty runs.
// ---------------------------------------------------------------------------

inline const char* csv_header() {
    return "trial_id,protocol,n,s,r,alpha,m,seed,t_convergence,t_stabilization,censored,correct,"
           "distinct_states_max,extras_json";
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline void write_csv(std::ostream& os, const std::vector<TrialRow>& rows) {
    os << csv_header() << "\n";
    for (const auto& r : rows) {
        os << r.trial_id << ',' << r.protocol << ',' << r.n << ',' << r.s << ',' << r.r << ',' << r.alpha
           << ',' << r.m << ',' << r.seed << ',';
        if (!r.convergence.censored()) os << *r.convergence.value;
        os << ',';
        if (!r.stabilization.censored()) os << *r.stabilization.value;
        os << ',' << (r.censored() ? 1 : 0) << ',' << (r.correct ? 1 : 0) << ',';
        if (r.distinct_states_max) os << *r.distinct_states_max;
        os << ',' << csv_quote(r.extras_json) << "\n";
    }
}

inline void write_json(std::ostream& os, const std::vector<TrialRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"trial_id", r.trial_id}, {"protocol", r.protocol}, {"n", r.n},
                         {"s", r.s},               {"r", r.r},              {"alpha", r.alpha},
                         {"m", r.m},               {"seed", r.seed},        {"censored", r.censored()},
                         {"correct", r.correct}};
        if (!r.convergence.censored()) j["t_convergence"] = *r.convergence.value;
        if (!r.stabilization.censored()) j["t_stabilization"] = *r.stabilization.value;
        if (r.distinct_states_max) j["distinct_states_max"] = *r.distinct_states_max;
        j["extras"] = nlohmann::json::parse(r.extras_json);
        if (r.failed) j["failure"] = r.failure;
        arr.push_back(j);
    }
    os << arr.dump(2) << "\n";
}

/// Probe records across a batch: trial_id,t,all_correct,stable.
inline void write_probes_csv(std::ostream& os, const std::vector<TrialRow>& rows) {
    os << "trial_id,t,all_correct,stable\n";
    for (const auto& r : rows)
        for (const auto& p : r.probes)
            os << r.trial_id << ',' << p.t << ',' << (p.all_correct ? 1 : 0) << ','
               << (p.stable_hint ? 1 : 0) << "\n";
}

/// Experiment spec from JSON (the `run --spec file` input format).
inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    s.protocol = j.at("protocol").get<std::string>();
    s.n = j.at("n").get<std::uint32_t>();
    s.s = j.value("s", 2);
    s.r = j.value("r", 0u);
    s.alpha = j.value("alpha", 1u);
    s.m = j.value("m", 0u);
    s.trials = j.value("trials", 1u);
    s.seed = j.value("seed", std::uint64_t{1});
    s.budget = j.value("budget", std::uint64_t{0});
    s.cadence = j.value("cadence", std::uint64_t{0});
    s.delta = j.value("delta", std::int64_t{0});
    s.slow_m = j.value("slow_m", 0u);
    s.junta_level = j.value("junta_level", 0u);
    s.counter_max = j.value("counter_max", std::uint16_t{600});
    s.census = j.value("census", false);
    s.clamp = j.value("clamp", false);
    s.threads = j.value("threads", 0u);
    return s;
}

}  // namespace popsim
