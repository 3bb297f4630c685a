#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace popsim {

using AgentId = std::uint32_t;

/// Complete global state of a run: one protocol state per agent plus the
/// interaction counter. Length never changes over a run.
template <class State>
struct Configuration {
    std::vector<State> states;
    std::uint64_t interactions_elapsed = 0;

    std::uint32_t n() const noexcept { return static_cast<std::uint32_t>(states.size()); }
};

/// Protocols are plain structs with value-type agent states:
///
///   using State = ...;                                  agent state
///   void interact(State& u, State& v) const;            initiator u, responder v
///   int  output(const State&) const;                    problem output
///   std::uint64_t encode(const State&) const;           canonical state key
///
/// Optional pieces, detected per protocol:
///
///   struct Shadow { ... };                               trial measurement hooks
///   Shadow make_shadow(std::uint32_t n) const;
///   bool is_stable(const std::vector<State>&) const;     stability predicate
///   std::uint64_t census_budget(...) const;              declared state budget

template <class P>
concept Protocol = requires(const P p, typename P::State a, typename P::State b) {
    typename P::State;
    { p.interact(a, b) };
    { p.output(a) } -> std::convertible_to<int>;
    { p.encode(a) } -> std::convertible_to<std::uint64_t>;
};

template <class P>
concept HasShadow = requires(const P p, std::uint32_t n) {
    typename P::Shadow;
    { p.make_shadow(n) };
};

template <class P>
concept HasStablePredicate = requires(const P p, const std::vector<typename P::State>& s) {
    { p.is_stable(s) } -> std::convertible_to<bool>;
};

/// Raised when an agent leaves the protocol's declared state set
/// (e.g. a load that would exceed its cap in assert mode).
struct StateBudgetViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace popsim
