#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "popsim/engine.hpp"
#include "popsim/leader.hpp"

using namespace popsim;

namespace {

LeaderParams small_params(std::uint32_t n, std::int32_t s = 2) {
    return leader_defaults(n, s, 64, 256);
}

/// An agent past the marking phase, racing with the given sample state.
LeaderAgent racer(bool contender, std::uint32_t phase = 20) {
    LeaderAgent a;
    a.contender = contender;
    a.marking_done = true;
    a.seen = 8;
    a.sampling_on = true;
    a.clock.phase = phase;
    a.junta.has_interacted = true;
    a.junta.active = false;
    return a;
}

}  // namespace

TEST_CASE("backup2 stability: exactly one candidate left") {
    TwoStateLeader b;
    std::vector<TwoStateLeader::State> one{{true}, {false}, {false}};
    CHECK(b.is_stable(one));
    std::vector<TwoStateLeader::State> two{{true}, {true}, {false}};
    CHECK_FALSE(b.is_stable(two));
}

TEST_CASE("backup2: pairwise elimination, initiator survives") {
    TwoStateLeader b;
    TwoStateLeader::State u{true}, v{true};
    b.interact(u, v);
    CHECK(u.leader);
    CHECK_FALSE(v.leader);
    b.interact(u, v);  // (L,F) unchanged
    CHECK(u.leader);
    CHECK_FALSE(v.leader);
    TwoStateLeader::State f1{false}, f2{false};
    b.interact(f1, f2);
    CHECK_FALSE(f1.leader);
    CHECK_FALSE(f2.leader);
}

TEST_CASE("flip bit toggles every interaction") {
    LeaderElection proto(small_params(64));
    auto u = racer(true);
    auto v = racer(false);
    const bool fu = u.flip, fv = v.flip;
    proto.interact(u, v);
    CHECK(u.flip == !fu);
    CHECK(v.flip == !fv);
}

TEST_CASE("marking trials: slow-marked only when every sampled coin was 1") {
    auto p = small_params(64);
    p.marking_trials = 3;
    p.warmup = 0;
    LeaderElection proto(p);
    SUBCASE("all ones") {
        LeaderAgent x;
        for (int i = 0; i < 3; ++i) {
            LeaderAgent partner;
            partner.flip = true;
            proto.marking_trial(x, partner.flip);
        }
        CHECK(x.marking_done);
        CHECK(x.slow_marked);
    }
    SUBCASE("a zero bit anywhere kills the mark") {
        LeaderAgent x;
        proto.marking_trial(x, true);
        proto.marking_trial(x, false);
        proto.marking_trial(x, true);
        CHECK(x.marking_done);
        CHECK_FALSE(x.slow_marked);
    }
}

TEST_CASE("marked fraction lands near 2^-trials") {
    const std::uint32_t n = 4096;
    auto p = small_params(n);  // trials = 4 at this size
    CHECK(p.marking_trials == 4);
    LeaderElection proto(p);
    RunOptions opt;
    opt.budget = 40 * n;
    auto res = run_trial(proto, LeaderElection::init(n), opt, Rng(13));
    std::int64_t marked = 0;
    for (const auto& s : res.config.states) marked += s.slow_marked ? 1 : 0;
    const double frac = marked / double(n);
    const double want = 1.0 / 16;
    CHECK(frac > want / 2);
    CHECK(frac < want * 2);
}

TEST_CASE("decelerated clock alternation") {
    auto p = small_params(64);
    LeaderElection proto(p);
    SUBCASE("slow-marked responder queues a pending op, main step still runs") {
        auto u = racer(true);
        auto v = racer(false);
        v.slow_marked = true;
        const auto phase_before = u.clock.phase;
        proto.interact(u, v);
        CHECK(u.slow_pending);
        CHECK(u.clock.phase >= phase_before);  // fast protocol ran this turn
    }
    SUBCASE("a pending op spends the step on the slow clock and clears the flag") {
        auto u = racer(true);
        u.slow_pending = true;
        u.clock.marked = true;  // junta member drives the +1
        auto v = racer(false);
        v.slow_phase = 5;
        const auto fast_before = u.clock.phase;
        proto.interact(u, v);
        CHECK_FALSE(u.slow_pending);
        CHECK(u.slow_phase == 6);               // max(own, responder+1)
        CHECK(u.clock.phase == fast_before);    // main step skipped
    }
    SUBCASE("no slow-marked agents: the slow clock never advances") {
        auto u = racer(true);
        auto v = racer(false);
        for (int i = 0; i < 10; ++i) proto.interact(u, v);
        CHECK(u.slow_phase == 0);
        CHECK_FALSE(u.slow_pending);
    }
}

TEST_CASE("slow clock saturates at the round length and ticks") {
    auto p = small_params(64);
    LeaderElection proto(p);
    auto u = racer(true);
    u.slow_pending = true;
    u.clock.marked = true;
    auto v = racer(false);
    v.slow_phase = static_cast<std::uint16_t>(p.slow_round_len - 1);
    proto.interact(u, v);
    CHECK(u.slow_phase == p.slow_round_len);
    CHECK(u.slow_ticked);
    CHECK(u.terminal == kFinalLeader);  // contender observes its own tick
}

TEST_CASE("bit block sampling is most-significant-first") {
    auto p = small_params(64, 256);
    CHECK(p.block_len == 5);
    LeaderElection proto(p);
    auto u = racer(true);
    bool bits[5] = {true, false, true, false, false};  // 10100 = 20
    for (bool b : bits) {
        auto v = racer(false);
        v.flip = b;  // coin reads see the responder's flip before it toggles
        proto.interact(u, v);
    }
    CHECK(u.sample_len == 5);
    CHECK(u.sample == 20);
    CHECK(u.best >= 20);  // own complete sample folds into the broadcast max
}

TEST_CASE("a contender seeing a larger broadcast value becomes a follower") {
    auto p = small_params(64, 256);
    LeaderElection proto(p);
    auto u = racer(true);
    u.sample = 5;
    u.sample_len = p.block_len;
    u.best = 5;
    auto v = racer(false);
    v.best = 6;
    // v responds to u: u passes its best, then v's larger value reaches u
    // when v initiates.
    proto.interact(v, u);  // v initiator: u (responder) adopts best=6
    CHECK(u.best == 6);
    CHECK_FALSE(u.contender);  // complete sample 5 < 6
}

TEST_CASE("the round-best holder is never eliminated") {
    auto p = small_params(64, 16);
    LeaderElection proto(p);
    auto u = racer(true);
    u.sample = 3;
    u.sample_len = p.block_len;
    u.best = 3;
    auto v = racer(false);
    v.best = 3;
    proto.interact(u, v);
    CHECK(u.contender);  // max cannot exceed itself
}

TEST_CASE("checking phase rules") {
    auto p = small_params(64);
    LeaderElection proto(p);
    SUBCASE("follower meeting a final leader becomes a final follower") {
        auto u = racer(false);
        auto v = racer(true);
        v.terminal = kFinalLeader;
        proto.interact(u, v);
        CHECK(u.terminal == kFinalFollower);
    }
    SUBCASE("follower meeting a final follower becomes final too") {
        auto u = racer(false);
        auto v = racer(false);
        v.terminal = kFinalFollower;
        proto.interact(u, v);
        CHECK(u.terminal == kFinalFollower);
    }
    SUBCASE("two final leaders: the responder is eliminated") {
        auto u = racer(true);
        auto v = racer(true);
        u.terminal = kFinalLeader;
        v.terminal = kFinalLeader;
        proto.interact(u, v);
        CHECK(u.terminal == kFinalLeader);
        CHECK(v.terminal == kFinalFollower);
    }
    SUBCASE("a still-racing contender ignores final partners") {
        auto u = racer(true);
        auto v = racer(false);
        v.terminal = kFinalFollower;
        proto.interact(u, v);
        CHECK(u.terminal == kRacing);
        CHECK(u.contender);
    }
}

TEST_CASE("output: terminal states override the backup") {
    LeaderElection proto(small_params(64));
    auto a = racer(true);
    a.terminal = kFinalLeader;
    a.backup_leader = false;
    CHECK(proto.output(a) == 1);
    a.terminal = kFinalFollower;
    a.backup_leader = true;
    CHECK(proto.output(a) == 0);
    a.terminal = kRacing;
    CHECK(proto.output(a) == 1);  // falls back to the backup (L)
    a.backup_leader = false;
    CHECK(proto.output(a) == 0);
}

TEST_CASE("flip-bit balance after warm-up") {
    const std::uint32_t n = 4096;
    LeaderElection proto(small_params(n));
    auto config = LeaderElection::init(n);
    Rng rng(3);
    const auto warmup = static_cast<std::uint64_t>(n * std::log(std::log2(n)) / 2);
    for (std::uint64_t t = 0; t < warmup + 8 * n; ++t) {
        auto [u, v] = pick_pair(rng, n);
        proto.interact(config.states[u], config.states[v]);
    }
    std::int64_t zeros = 0;
    for (const auto& s : config.states) zeros += s.flip ? 0 : 1;
    const double frac = zeros / double(n);
    const double slack = 1.0 / std::log2(std::log2(n));
    CHECK(frac > (1 - slack) / 2);
    CHECK(frac < (1 + slack) / 2);
}

TEST_CASE("contender count never increases") {
    const std::uint32_t n = 256;
    LeaderElection proto(small_params(n));
    auto config = LeaderElection::init(n);
    Rng rng(17);
    auto count = [&] {
        int c = 0;
        for (const auto& s : config.states) c += s.contender ? 1 : 0;
        return c;
    };
    int last = count();
    for (int t = 0; t < 2000000; ++t) {
        auto [u, v] = pick_pair(rng, n);
        proto.interact(config.states[u], config.states[v]);
        if (t % 1000 == 0) {
            const int now = count();
            CHECK(now <= last);
            last = now;
        }
    }
}

TEST_CASE("small run stabilizes to exactly one leader") {
    const std::uint32_t n = 512;
    LeaderElection proto(small_params(n));
    RunOptions opt;
    opt.budget = 20000000;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto res = run_trial(proto, LeaderElection::init(n), opt, Rng(trial_seed(31, seed)));
        REQUIRE_FALSE(res.metrics.stabilization.censored());
        CHECK(res.metrics.extras.at("final_leaders") == 1);
        int leaders = 0;
        for (const auto& s : res.config.states) leaders += proto.output(s) == 1 ? 1 : 0;
        CHECK(leaders == 1);
    }
}
