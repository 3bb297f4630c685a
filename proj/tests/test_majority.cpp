#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "popsim/engine.hpp"
#include "popsim/majority.hpp"

using namespace popsim;

namespace {

MajorityParams base_params(std::uint32_t n, std::int32_t s, std::uint32_t m, std::uint32_t r) {
    MajorityParams p;
    p.s = s;
    p.clock = ClockParams{m, r};
    p.junta = JuntaParams{JuntaKind::Threshold, static_cast<std::uint8_t>(default_junta_threshold(n)), 60};
    return p;
}

MajorityAgent agent(std::int32_t load, std::uint32_t phase, bool marked = false) {
    MajorityAgent a;
    a.load = load;
    a.positive_memory = load >= 0;
    a.clock.phase = phase;
    a.clock.marked = marked;
    a.junta.has_interacted = true;
    a.junta.active = false;
    return a;
}

}  // namespace

TEST_CASE("4-state backup transition table") {
    auto pair = [](std::uint8_t a, std::uint8_t b) {
        backup4_interact(a, b);
        return std::pair<int, int>{a, b};
    };
    CHECK(pair(kStrongPos, kStrongNeg) == std::pair<int, int>{kWeakPos, kWeakNeg});
    CHECK(pair(kStrongNeg, kStrongPos) == std::pair<int, int>{kWeakNeg, kWeakPos});
    CHECK(pair(kStrongPos, kWeakNeg) == std::pair<int, int>{kStrongPos, kWeakPos});
    CHECK(pair(kStrongNeg, kWeakPos) == std::pair<int, int>{kStrongNeg, kWeakNeg});
    CHECK(pair(kWeakNeg, kStrongPos) == std::pair<int, int>{kWeakPos, kStrongPos});
    CHECK(pair(kWeakPos, kStrongNeg) == std::pair<int, int>{kWeakNeg, kStrongNeg});
    CHECK(pair(kWeakPos, kWeakNeg) == std::pair<int, int>{kWeakPos, kWeakNeg});  // weak-weak no-op
    CHECK(pair(kStrongPos, kStrongPos) == std::pair<int, int>{kStrongPos, kStrongPos});
    CHECK(backup4_output(kStrongPos) == +1);
    CHECK(backup4_output(kWeakPos) == +1);
    CHECK(backup4_output(kStrongNeg) == -1);
    CHECK(backup4_output(kWeakNeg) == -1);
}

TEST_CASE("majority outputs follow the load sign, zero keeps the last sign") {
    CHECK(majority_sign(agent(-5, 0)) == -1);
    CHECK(majority_sign(agent(+1, 0)) == +1);
    auto a = agent(-2, 0);
    detail::set_load(a, 0);
    CHECK(majority_sign(a) == -1);  // remembered
    detail::set_load(a, 3);
    detail::set_load(a, 0);
    CHECK(majority_sign(a) == +1);
}

TEST_CASE("round entry multiplies the carried load") {
    auto p = base_params(64, 4, 4, 3);
    ClockedMajority proto(p);
    auto u = agent(2, 3, true);   // marked, one phase from the boundary
    auto v = agent(2, 3);
    proto.interact(u, v);
    CHECK(u.clock.phase == 4);
    CHECK(u.clock.new_round);
    CHECK(u.load == 8);  // balanced (2,2) then multiplied by s at the crossing
    CHECK(v.load == 2);
}

TEST_CASE("same-round balance splits ceiling/floor toward the initiator") {
    auto p = base_params(64, 2, 24, 3);
    ClockedMajority proto(p);
    auto u = agent(8, 0);
    auto v = agent(-3, 1);
    proto.interact(u, v);
    CHECK(u.load == 3);
    CHECK(v.load == 2);
}

TEST_CASE("different rounds skip balancing") {
    auto p = base_params(64, 2, 24, 3);
    ClockedMajority proto(p);
    auto u = agent(1, 70, false);  // round 2, behind v circularly
    auto v = agent(-3, 30);        // round 1
    proto.interact(u, v);
    CHECK(v.load == -3);  // responder load untouched without a shared round
}

TEST_CASE("load cap is an assertion in assert mode and saturates in clamp mode") {
    auto p = base_params(64, 4, 4, 3);
    p.load_cap = 8;
    SUBCASE("assert") {
        ClockedMajority proto(p);
        auto u = agent(4, 3, true);  // crossing would multiply 4*4 = 16 > 8
        auto v = agent(4, 3);
        CHECK_THROWS_AS(proto.interact(u, v), StateBudgetViolation);
    }
    SUBCASE("clamp") {
        p.load_policy = LoadPolicy::ClampCap;
        ClockedMajority proto(p);
        auto u = agent(4, 3, true);
        auto v = agent(4, 3);
        proto.interact(u, v);
        CHECK(u.load == 8);
    }
}

TEST_CASE("stabilizing majority: threshold load at a fresh round finishes") {
    auto p = base_params(64, 2, 4, 5);
    StableMajority proto(p);
    auto u = agent(4, 3, true);
    auto v = agent(4, 3);
    proto.interact(u, v);
    CHECK(u.finished);       // |balanced load| >= 3 at its own crossing
    CHECK(u.load == 4);      // not multiplied
    CHECK_FALSE(u.error);
}

TEST_CASE("stabilizing majority: overflow finishes regardless of load") {
    auto p = base_params(64, 2, 4, 3);  // ring 12
    StableMajority proto(p);
    auto u = agent(1, 11, true);
    auto v = agent(1, 11);
    proto.interact(u, v);
    CHECK(u.clock.overflowed);
    CHECK(u.finished);
}

TEST_CASE("stabilizing majority: finished pair with opposite signs raises the error") {
    auto p = base_params(64, 2, 4, 5);
    StableMajority proto(p);
    auto u = agent(4, 9);
    auto v = agent(-4, 9);
    u.finished = v.finished = true;
    proto.interact(u, v);
    CHECK(u.error);
    CHECK(v.error);
}

TEST_CASE("stabilizing majority: contagion syncs the round and stays clean") {
    auto p = base_params(64, 2, 4, 5);
    StableMajority proto(p);
    auto u = agent(4, 9);  // finished in round 2
    u.finished = true;
    auto v = agent(3, 5);  // one round behind, same sign
    proto.interact(u, v);
    CHECK(v.finished);
    CHECK(pc_round(p.clock, v.clock) == pc_round(p.clock, u.clock));
    CHECK_FALSE(u.error);
    CHECK_FALSE(v.error);
}

TEST_CASE("stabilizing majority: finished pair in frozen different rounds errors") {
    auto p = base_params(64, 2, 4, 5);
    StableMajority proto(p);
    auto u = agent(4, 9);
    auto v = agent(4, 5);
    u.finished = v.finished = true;  // both frozen, rounds 2 vs 1
    proto.interact(u, v);
    CHECK(u.error);
    CHECK(v.error);
}

TEST_CASE("stabilizing majority output rule") {
    auto p = base_params(64, 2, 4, 5);
    StableMajority proto(p);
    auto a = agent(-2, 7);
    CHECK(proto.output(a) == -1);  // ticked, no error: sign
    a.error = true;
    a.backup = kStrongPos;
    CHECK(proto.output(a) == +1);  // error: backup wins regardless of load
    auto b = agent(-2, 0);
    b.backup = kStrongPos;
    CHECK(proto.output(b) == +1);  // never ticked: backup
    b.clock.overflowed = true;
    CHECK(proto.output(b) == -1);  // wrapped through zero: clock has run
}

TEST_CASE("convergent majority counter rules") {
    auto p = base_params(64, 2, 4, 3);
    p.counter_max = 600;
    ConvergentMajority proto(p);
    SUBCASE("marked responder increments") {
        auto u = agent(1, 1);
        u.streak = 5;
        auto v = agent(1, 1, true);
        proto.interact(u, v);
        CHECK(u.streak == 6);
    }
    SUBCASE("plain responder resets") {
        auto u = agent(1, 1);
        u.streak = 599;
        auto v = agent(1, 1, false);
        proto.interact(u, v);
        CHECK(u.streak == 0);
    }
    SUBCASE("at the limit the initiator stops participating") {
        auto u = agent(4, 1);
        u.streak = 600;
        auto v = agent(-4, 1);
        proto.interact(u, v);
        CHECK(u.streak == 600);
        CHECK(u.load == 4);  // no balance, no clock action
        CHECK(v.load == -4);
    }
    SUBCASE("a switched responder also counts") {
        auto u = agent(1, 1);
        auto v = agent(1, 1, false);
        v.streak = 600;
        proto.interact(u, v);
        CHECK(u.streak == 1);
    }
}

TEST_CASE("convergent majority output rule") {
    auto p = base_params(64, 2, 4, 3);
    ConvergentMajority proto(p);
    auto a = agent(-2, 3);
    CHECK(proto.output(a) == -1);
    a.streak = 600;
    a.backup = kStrongPos;
    CHECK(proto.output(a) == +1);  // counter at the limit: backup
    auto b = agent(-2, 0);
    b.backup = kStrongPos;
    CHECK(proto.output(b) == +1);  // clock has not ticked: backup
}

TEST_CASE("uniform variant: spoil reset rewinds phase and load") {
    MajorityParams p = base_params(64, 2, 8, 0);
    UniformMajority proto(p);
    // Responder x: inactive marked at level 1; initiator y active at level 2.
    UniformMajority::State y = agent(-2, 40);
    y.junta = JuntaState{2, true, true, false, 0};
    UniformMajority::State x = agent(-2, 40, true);
    x.junta = JuntaState{1, false, true, false, 0};
    x.initial_positive = true;
    proto.interact(y, x);
    CHECK(x.junta.spoiled);
    CHECK_FALSE(x.clock.marked);
    CHECK(x.clock.phase == 0);
    CHECK(x.load == 1);  // reset to the initial opinion
}

TEST_CASE("uniform variant never overflows") {
    MajorityParams p = base_params(256, 2, 8, 0);
    UniformMajority proto(p);
    RunOptions opt;
    opt.budget = 2000000;
    opt.expected_output = +1;
    auto res = run_trial(proto, UniformMajority::init(257, 65), opt, Rng(3));
    for (const auto& s : res.config.states) CHECK_FALSE(s.clock.overflowed);
    CHECK(res.metrics.extras.at("spoil_resets") > 0);
}

TEST_CASE("bias conservation: sum of loads is exactly alpha * s^k at multiply milestones") {
    auto p = base_params(129, 2, 64, 8);
    p.load_policy = LoadPolicy::ClampCap;  // run past convergence; checks gate themselves
    ClockedMajority proto(p);
    RunOptions opt;
    opt.budget = 800000;
    opt.expected_output = +1;
    auto res = run_trial(proto, ClockedMajority::init(129, 1), opt, Rng(11));
    CHECK(res.metrics.extras.at("bias_checks") > 0);
    CHECK(res.metrics.extras.at("bias_failures") == 0);
}

TEST_CASE("sum conservation within rounds: balancing never changes the total") {
    auto p = base_params(64, 2, 8, 4);
    p.load_policy = LoadPolicy::ClampCap;
    ClockedMajority proto(p);
    auto config = ClockedMajority::init(64, 2);
    Rng rng(5);
    std::int64_t sum = 2;
    for (int t = 0; t < 30000; ++t) {
        auto [ui, vi] = pick_pair(rng, 64);
        auto& u = config.states[ui];
        auto& v = config.states[vi];
        const auto before_u = u;
        const std::int64_t before = u.load + v.load;
        proto.interact(u, v);
        const bool multiplied = rounds_crossed(p.clock, before_u.clock, u.clock) > 0;
        if (!multiplied) {
            CHECK(u.load + v.load == before);  // balance conserves exactly
        }
        sum += (u.load + v.load) - before;
    }
}

TEST_CASE("stabilizing majority end to end at small n") {
    auto p = base_params(257, 2, 64, StableMajority::rounds_for(257, 2));
    StableMajority proto(p);
    RunOptions opt;
    opt.budget = 6000000;
    opt.expected_output = +1;
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto res = run_trial(proto, StableMajority::init(257, 1), opt, Rng(trial_seed(9, seed)));
        good += !res.metrics.stabilization.censored() && res.metrics.final_output_correct;
    }
    CHECK(good >= 9);
}

TEST_CASE("convergence within budget for the plain clocked protocol") {
    // n=256, alpha=16, s=2: at least 99/100 seeded trials converge.
    auto p = base_params(256, 2, 64, 3);
    p.load_policy = LoadPolicy::ClampCap;
    ClockedMajority proto(p);
    RunOptions opt;
    opt.budget = 5000ULL * 256;
    opt.expected_output = +1;
    int good = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto res = run_trial(proto, ClockedMajority::init(256, 16), opt, Rng(trial_seed(88, seed)));
        good += !res.metrics.convergence.censored() && res.metrics.final_output_correct;
    }
    CHECK(good >= 99);
}

TEST_CASE("junta never forming leaves the backup in charge and still stabilizes") {
    MajorityParams p;
    p.s = 2;
    p.clock = ClockParams{8, StableMajority::rounds_for(32, 2)};
    p.junta = JuntaParams{JuntaKind::LevelsOnly, 1, 60};  // nobody ever gets marked
    StableMajority proto(p);
    RunOptions opt;
    opt.budget = 400000;  // plenty for the 4-state backup at n=32
    opt.expected_output = +1;
    auto res = run_trial(proto, StableMajority::init(32, 2), opt, Rng(3));
    REQUIRE_FALSE(res.metrics.stabilization.censored());
    CHECK(res.metrics.final_output_correct);
    for (const auto& s : res.config.states) CHECK(proto.output(s) == +1);
}

TEST_CASE("monotone flags: finished and error never reset") {
    auto p = base_params(129, 2, 64, StableMajority::rounds_for(129, 2));
    StableMajority proto(p);
    auto config = StableMajority::init(129, 1);
    Rng rng(21);
    std::vector<bool> fin(129, false), err(129, false);
    for (int t = 0; t < 400000; ++t) {
        auto [ui, vi] = pick_pair(rng, 129);
        proto.interact(config.states[ui], config.states[vi]);
        for (auto i : {ui, vi}) {
            const auto& s = config.states[i];
            if (fin[i]) CHECK(s.finished);
            if (err[i]) CHECK(s.error);
            fin[i] = s.finished;
            err[i] = s.error;
        }
    }
}
