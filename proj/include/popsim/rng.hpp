#pragma once

#include <cstdint>
#include <stdexcept>

namespace popsim {

/// splitmix64 finalizer. Stateless 64-bit mixing function, also used to
/// derive independent per-trial streams from (master seed, trial index).
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// The single generator used everywhere: splitmix64.
/// Identical seed => identical draw sequence, on every platform.
class Rng {
public:
    explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Unbiased uniform draw from [0, bound) by rejection.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    constexpr bool coin() noexcept { return (next() >> 63) != 0; }

private:
    std::uint64_t state_;
};

/// Stream for trial `index` of a batch: mix(master ^ mix(index + 1)).
/// Streams are reproducible and independent of execution order, so trial
/// batches can run on any number of threads with identical results.
inline constexpr std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return mix64(master_seed ^ mix64(index + 1));
}

/// An ordered interaction pair: initiator first, responder second.
struct AgentPair {
    std::uint32_t initiator;
    std::uint32_t responder;
};

/// Draw an ordered pair of distinct agents, uniform over all n(n-1) pairs.
inline AgentPair pick_pair(Rng& rng, std::uint32_t n) {
    if (n < 2) throw std::invalid_argument("pick_pair: population must have at least 2 agents");
    const auto u = static_cast<std::uint32_t>(rng.below(n));
    auto v = static_cast<std::uint32_t>(rng.below(n - 1));
    if (v >= u) ++v;
    return {u, v};
}

}  // namespace popsim
