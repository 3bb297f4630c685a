#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "popsim/protocol.hpp"
#include "popsim/rng.hpp"

namespace popsim {

struct OracleTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleOptions {
    std::size_t max_configs = 10'000'000;
    std::size_t max_edges = 100'000'000;
};

struct OracleVerdict {
    bool exact_and_correct = false;
    bool every_config_reaches_correct_stable = false;
    bool stable_incorrect_reachable = false;
    std::size_t configs = 0;
    std::size_t edges = 0;
    std::size_t stable_configs = 0;
    std::size_t stable_correct_configs = 0;
};

namespace detail {

/// Order-free global state: agents in the same state are indistinguishable,
/// so configurations are multisets, stored as sorted index vectors in one
/// arena with an open-addressing id table.
class ConfigTable {
public:
    explicit ConfigTable(std::uint32_t n) : n_(n) { rehash(1 << 12); }

    std::uint32_t find_or_insert(const std::uint32_t* cfg, bool& inserted) {
        if ((count_ + 1) * 10 > slots_.size() * 7) rehash(slots_.size() * 2);
        const std::uint64_t h = hash(cfg);
        std::uint64_t i = h & mask_;
        while (slots_[i] != 0) {
            const std::uint32_t id = slots_[i] - 1;
            if (std::equal(cfg, cfg + n_, arena_.data() + static_cast<std::size_t>(id) * n_)) {
                inserted = false;
                return id;
            }
            i = (i + 1) & mask_;
        }
        const auto id = static_cast<std::uint32_t>(count_++);
        arena_.insert(arena_.end(), cfg, cfg + n_);
        slots_[i] = id + 1;
        inserted = true;
        return id;
    }

    const std::uint32_t* get(std::uint32_t id) const { return arena_.data() + static_cast<std::size_t>(id) * n_; }
    std::size_t size() const { return count_; }

private:
    std::uint64_t hash(const std::uint32_t* cfg) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (std::uint32_t i = 0; i < n_; ++i) h = mix64(h ^ cfg[i]);
        return h;
    }
    void rehash(std::size_t cap) {
        slots_.assign(cap, 0);
        mask_ = cap - 1;
        for (std::uint32_t id = 0; id < count_; ++id) {
            const std::uint64_t h = hash(get(id));
            std::uint64_t i = h & mask_;
            while (slots_[i] != 0) i = (i + 1) & mask_;
            slots_[i] = id + 1;
        }
    }

    std::uint32_t n_;
    std::vector<std::uint32_t> arena_;
    std::vector<std::uint32_t> slots_;
    std::uint64_t mask_ = 0;
    std::size_t count_ = 0;
};

/// Dense indexing of distinct agent states by canonical key.
template <class P>
class StateIndex {
public:
    explicit StateIndex(const P& proto) : proto_(proto) {}

    std::uint32_t index_of(const typename P::State& s) {
        const std::uint64_t key = proto_.encode(s);
        auto [it, fresh] = by_key_.try_emplace(key, static_cast<std::uint32_t>(states_.size()));
        if (fresh) {
            states_.push_back(s);
            outputs_.push_back(proto_.output(s));
        }
        return it->second;
    }
    const typename P::State& state(std::uint32_t i) const { return states_[i]; }
    int output(std::uint32_t i) const { return outputs_[i]; }

private:
    const P& proto_;
    std::unordered_map<std::uint64_t, std::uint32_t> by_key_;
    std::vector<typename P::State> states_;
    std::vector<int> outputs_;
};

/// Explore the multiset graph from `init`. For each configuration records
/// deduplicated successors and whether any applicable transition changes a
/// participant's output.
template <class P>
void explore(const P& proto, const std::vector<typename P::State>& init, const OracleOptions& opt,
             StateIndex<P>& index, ConfigTable& table, std::vector<std::vector<std::uint32_t>>& successors,
             std::vector<bool>& output_changing, std::size_t& edge_count) {
    const auto n = static_cast<std::uint32_t>(init.size());
    std::vector<std::uint32_t> scratch(n);
    for (std::uint32_t i = 0; i < n; ++i) scratch[i] = index.index_of(init[i]);
    std::sort(scratch.begin(), scratch.end());
    bool inserted = false;
    table.find_or_insert(scratch.data(), inserted);

    std::vector<std::uint32_t> cfg_copy(n);
    for (std::uint32_t id = 0; id < table.size(); ++id) {
        if (table.size() > opt.max_configs)
            throw OracleTooLarge("reachability_oracle: configuration guard exceeded");
        // Copy: the arena may grow (and move) while successors are inserted.
        std::copy(table.get(id), table.get(id) + n, cfg_copy.begin());
        const std::uint32_t* cfg = cfg_copy.data();
        std::vector<std::uint32_t> succ;
        bool changes_output = false;

        for (std::uint32_t a = 0; a < n; ++a) {
            if (a > 0 && cfg[a] == cfg[a - 1]) continue;  // this initiator state already tried
            for (std::uint32_t b = 0; b < n; ++b) {
                if (b == a) continue;
                if (b > 0 && cfg[b] == cfg[b - 1] && b - 1 != a) continue;  // responder state already tried
                auto su = index.state(cfg[a]);
                auto sv = index.state(cfg[b]);
                const int ou = index.output(cfg[a]);
                const int ov = index.output(cfg[b]);
                proto.interact(su, sv);
                const std::uint32_t iu = index.index_of(su);
                const std::uint32_t iv = index.index_of(sv);
                if (iu == cfg[a] && iv == cfg[b]) continue;  // no state change
                if (index.output(iu) != ou || index.output(iv) != ov) changes_output = true;

                std::copy(cfg, cfg + n, scratch.begin());
                scratch[a] = iu;
                scratch[b] = iv;
                std::sort(scratch.begin(), scratch.end());
                succ.push_back(table.find_or_insert(scratch.data(), inserted));
            }
        }
        std::sort(succ.begin(), succ.end());
        succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
        edge_count += succ.size();
        if (edge_count > opt.max_edges) throw OracleTooLarge("reachability_oracle: edge guard exceeded");
        successors.push_back(std::move(succ));
        output_changing.push_back(changes_output);
    }
}

inline void backward_closure(const std::vector<std::vector<std::uint32_t>>& successors, std::size_t edge_count,
                             std::vector<bool>& in_set) {
    const std::size_t total = successors.size();
    std::vector<std::uint32_t> indeg(total + 1, 0);
    for (const auto& succ : successors)
        for (auto to : succ) ++indeg[to];
    std::vector<std::size_t> offset(total + 1, 0);
    for (std::size_t c = 0; c < total; ++c) offset[c + 1] = offset[c] + indeg[c];
    std::vector<std::uint32_t> rev(edge_count);
    std::vector<std::size_t> cursor(offset.begin(), offset.end() - 1);
    for (std::size_t c = 0; c < total; ++c)
        for (auto to : successors[c]) rev[cursor[to]++] = static_cast<std::uint32_t>(c);

    std::vector<std::uint32_t> work;
    for (std::uint32_t c = 0; c < total; ++c)
        if (in_set[c]) work.push_back(c);
    while (!work.empty()) {
        const std::uint32_t c = work.back();
        work.pop_back();
        for (std::size_t e = offset[c]; e < offset[c + 1]; ++e) {
            const std::uint32_t pred = rev[e];
            if (!in_set[pred]) {
                in_set[pred] = true;
                work.push_back(pred);
            }
        }
    }
}

}  // namespace detail

/// Breadth-first exploration of every configuration reachable from `init`
/// under every ordered pair choice, quotiented by agent identity.
///
/// A configuration is stable iff no reachable transition changes any
/// participant's output. The verdict is exact-and-correct iff from every
/// reachable configuration some stable configuration with correct outputs
/// is reachable, and no stable configuration with incorrect outputs is
/// reachable. `correct` judges a sorted vector of per-agent outputs.
template <Protocol P>
OracleVerdict reachability_oracle(const P& proto, const std::vector<typename P::State>& init,
                                  const std::function<bool(const std::vector<int>&)>& correct,
                                  const OracleOptions& opt = {}) {
    const auto n = static_cast<std::uint32_t>(init.size());
    if (n < 2) throw std::invalid_argument("reachability_oracle: n >= 2 required");

    detail::StateIndex<P> index(proto);
    detail::ConfigTable table(n);
    std::vector<std::vector<std::uint32_t>> successors;
    std::vector<bool> output_changing;
    std::size_t edge_count = 0;
    detail::explore(proto, init, opt, index, table, successors, output_changing, edge_count);

    const std::size_t total = table.size();

    // Unstable = can reach an output-changing transition.
    std::vector<bool> unstable(output_changing);
    detail::backward_closure(successors, edge_count, unstable);

    auto outputs_of = [&](std::uint32_t c) {
        std::vector<int> out(n);
        const std::uint32_t* cfg = table.get(c);
        for (std::uint32_t i = 0; i < n; ++i) out[i] = index.output(cfg[i]);
        std::sort(out.begin(), out.end());
        return out;
    };

    OracleVerdict verdict;
    verdict.configs = total;
    verdict.edges = edge_count;
    std::vector<bool> reaches_good(total, false);
    for (std::uint32_t c = 0; c < total; ++c) {
        if (unstable[c]) continue;
        ++verdict.stable_configs;
        if (correct(outputs_of(c))) {
            ++verdict.stable_correct_configs;
            reaches_good[c] = true;
        } else {
            verdict.stable_incorrect_reachable = true;
        }
    }
    detail::backward_closure(successors, edge_count, reaches_good);
    verdict.every_config_reaches_correct_stable =
        std::all_of(reaches_good.begin(), reaches_good.end(), [](bool b) { return b; });
    verdict.exact_and_correct =
        verdict.every_config_reaches_correct_stable && !verdict.stable_incorrect_reachable;
    return verdict;
}

/// Output predicate: every agent outputs `expected`.
inline std::function<bool(const std::vector<int>&)> all_outputs(int expected) {
    return [expected](const std::vector<int>& outs) {
        return std::all_of(outs.begin(), outs.end(), [&](int o) { return o == expected; });
    };
}

/// Output predicate: exactly one agent outputs `special`, everyone else `rest`.
inline std::function<bool(const std::vector<int>&)> exactly_one_output(int special, int rest) {
    return [special, rest](const std::vector<int>& outs) {
        std::size_t special_count = 0;
        for (int o : outs) {
            if (o == special) ++special_count;
            else if (o != rest) return false;
        }
        return special_count == 1;
    };
}

/// Is this configuration stable, by exhaustive search? (No transition in
/// its forward closure changes any output.) Serves protocols without a
/// stability predicate when n is small enough to explore.
template <Protocol P>
bool exhaustive_is_stable(const P& proto, const std::vector<typename P::State>& config,
                          const OracleOptions& opt = {}) {
    detail::StateIndex<P> index(proto);
    detail::ConfigTable table(static_cast<std::uint32_t>(config.size()));
    std::vector<std::vector<std::uint32_t>> successors;
    std::vector<bool> output_changing;
    std::size_t edge_count = 0;
    detail::explore(proto, config, opt, index, table, successors, output_changing, edge_count);
    return std::none_of(output_changing.begin(), output_changing.end(), [](bool b) { return b; });
}

}  // namespace popsim
