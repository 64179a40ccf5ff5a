#pragma once

// Set-associative LRU tag store used for the Link TLBs and page-walk caches.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rtsim {

class LruCache {
public:
    LruCache(std::uint32_t entries, std::uint32_t ways) : ways_(ways) {
        if (entries == 0 || ways == 0 || entries % ways != 0)
            throw std::invalid_argument("cache ways must divide a positive entry count");
        sets_ = entries / ways;
        slots_.resize(entries);
    }

    std::uint32_t entries() const { return static_cast<std::uint32_t>(slots_.size()); }
    std::uint32_t ways() const { return ways_; }
    std::uint32_t sets() const { return sets_; }

    // Hit refreshes recency.
    std::optional<std::uint64_t> lookup(std::uint64_t key) {
        if (Slot* s = find(key)) {
            s->stamp = ++clock_;
            return s->value;
        }
        return std::nullopt;
    }

    bool contains(std::uint64_t key) const { return const_cast<LruCache*>(this)->find(key) != nullptr; }

    // Inserts or refreshes `key`. Returns the evicted key when a valid LRU
    // victim was displaced.
    std::optional<std::uint64_t> insert(std::uint64_t key, std::uint64_t value) {
        if (Slot* s = find(key)) {
            s->value = value;
            s->stamp = ++clock_;
            return std::nullopt;
        }
        Slot* base = &slots_[set_of(key) * ways_];
        Slot* victim = base;
        for (std::uint32_t w = 0; w < ways_; ++w) {
            Slot& s = base[w];
            if (!s.valid) {
                victim = &s;
                break;
            }
            if (s.stamp < victim->stamp) victim = &s;
        }
        std::optional<std::uint64_t> evicted;
        if (victim->valid) evicted = victim->key;
        *victim = Slot{key, value, ++clock_, true};
        return evicted;
    }

    std::uint32_t occupancy() const {
        std::uint32_t n = 0;
        for (const auto& s : slots_) n += s.valid;
        return n;
    }

private:
    struct Slot {
        std::uint64_t key = 0;
        std::uint64_t value = 0;
        std::uint64_t stamp = 0;
        bool valid = false;
    };

    std::uint32_t set_of(std::uint64_t key) const { return static_cast<std::uint32_t>(key % sets_); }

    Slot* find(std::uint64_t key) {
        Slot* base = &slots_[set_of(key) * ways_];
        for (std::uint32_t w = 0; w < ways_; ++w)
            if (base[w].valid && base[w].key == key) return &base[w];
        return nullptr;
    }

    std::uint32_t ways_;
    std::uint32_t sets_ = 0;
    std::vector<Slot> slots_;
    std::uint64_t clock_ = 0;
};

}  // namespace rtsim
