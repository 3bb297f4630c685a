#pragma once

#include <cstdint>
#include <vector>

#include "popsim/rng.hpp"

namespace popsim {

/// Counts the distinct encoded states each agent has visited.
///
/// Entries live in one open-addressing table of mixed (agent, state-key)
/// fingerprints, so memory is shared across agents. A 64-bit fingerprint
/// collision would undercount one state per ~2^64/inserts inserts; at the
/// table sizes used here that is negligible.
class CensusTracker {
public:
    explicit CensusTracker(std::uint32_t n) : counts_(n, 0) { rehash(1 << 16); }

    void visit(std::uint32_t agent, std::uint64_t state_key) {
        const std::uint64_t fp = mix64(mix64(state_key) ^ (0x51ed2701a3c5e1b7ULL * (agent + 1)));
        if (insert(fp)) ++counts_[agent];
    }

    std::uint64_t max_per_agent() const {
        std::uint64_t m = 0;
        for (auto c : counts_) m = c > m ? c : m;
        return m;
    }

    std::uint64_t total_distinct() const { return size_; }
    const std::vector<std::uint64_t>& per_agent() const { return counts_; }

private:
    bool insert(std::uint64_t fp) {
        if (fp == 0) fp = 1;
        if ((size_ + 1) * 10 > slots_.size() * 7) rehash(slots_.size() * 2);
        std::uint64_t i = fp & mask_;
        while (slots_[i] != 0) {
            if (slots_[i] == fp) return false;
            i = (i + 1) & mask_;
        }
        slots_[i] = fp;
        ++size_;
        return true;
    }

    void rehash(std::size_t cap) {
        std::vector<std::uint64_t> old;
        old.swap(slots_);
        slots_.assign(cap, 0);
        mask_ = cap - 1;
        size_ = 0;
        for (auto fp : old)
            if (fp != 0) insert(fp);
    }

    std::vector<std::uint64_t> slots_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t mask_ = 0;
    std::uint64_t size_ = 0;
};

/// Packs bit fields into a canonical 64-bit state key.
struct KeyPacker {
    std::uint64_t key = 0;
    unsigned used = 0;

    void put(std::uint64_t value, unsigned bits) {
        // Callers size their fields; an overflow here is a protocol bug.
        if (bits > 64 - used || (bits < 64 && value >> bits) != 0)
            throw std::logic_error("KeyPacker: field overflow");
        key |= value << used;
        used += bits;
    }
    void put_flag(bool b) { put(b ? 1 : 0, 1); }
};

}  // namespace popsim
