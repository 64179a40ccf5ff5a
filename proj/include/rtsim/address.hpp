#pragma once

// Network physical addresses, pages, and the destination-local frame map.

#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rtsim {

struct GpuId {
    std::uint32_t index = 0;
    auto operator<=>(const GpuId&) const = default;
};

// NPA as seen by the target: offsets are relative to the target's exposed
// buffer region, not a flat pod-wide space.
struct Npa {
    GpuId target;
    std::uint64_t offset = 0;
};

struct PageId {
    GpuId target;
    std::uint64_t page_index = 0;
    auto operator<=>(const PageId&) const = default;
};

struct Spa {
    std::uint64_t frame = 0;
    std::uint64_t offset_in_page = 0;
};

inline constexpr std::uint64_t kDefaultPageSize = 2ull << 20;

inline constexpr bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

class BufferLayout {
public:
    BufferLayout(std::uint64_t base, std::uint64_t size, std::uint64_t page_size)
        : base_(base), size_(size), page_size_(page_size) {
        if (!is_power_of_two(page_size)) throw std::invalid_argument("page_size must be a power of two");
    }

    std::uint64_t base() const { return base_; }
    std::uint64_t size() const { return size_; }
    std::uint64_t page_size() const { return page_size_; }

    // Page index holding byte `offset` of the buffer.
    std::uint64_t page_of(std::uint64_t offset) const { return (base_ + offset) / page_size_; }

    PageId npa_to_page(const Npa& npa) const { return PageId{npa.target, page_of(npa.offset)}; }

    std::uint64_t first_page() const { return page_of(0); }
    // One past the last page touched by the buffer.
    std::uint64_t end_page() const { return size_ == 0 ? first_page() : page_of(size_ - 1) + 1; }
    std::uint64_t page_count() const { return end_page() - first_page(); }

private:
    std::uint64_t base_;
    std::uint64_t size_;
    std::uint64_t page_size_;
};

enum class SpaMapping { identity, permuted };

// Page -> frame map at every target GPU. Identity by default; the permuted
// variant draws an independent Fisher-Yates shuffle per GPU from a seeded
// mt19937_64 (std::shuffle is not portable across standard libraries).
class FrameMap {
public:
    FrameMap(std::uint32_t num_gpus, std::uint64_t first_page, std::uint64_t page_count,
             SpaMapping mapping, std::uint64_t seed)
        : first_page_(first_page), page_count_(page_count), mapping_(mapping) {
        if (mapping_ == SpaMapping::identity) return;
        frames_.resize(num_gpus);
        for (std::uint32_t g = 0; g < num_gpus; ++g) {
            std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + g);
            auto& perm = frames_[g];
            perm.resize(page_count);
            for (std::uint64_t i = 0; i < page_count; ++i) perm[i] = first_page + i;
            for (std::uint64_t i = page_count; i > 1; --i) {
                std::uint64_t j = rng() % i;
                std::swap(perm[i - 1], perm[j]);
            }
        }
    }

    std::uint64_t frame(const PageId& page) const {
        if (mapping_ == SpaMapping::identity) return page.page_index;
        if (page.target.index >= frames_.size() || page.page_index < first_page_ ||
            page.page_index - first_page_ >= page_count_)
            throw std::out_of_range("page outside the mapped buffer");
        return frames_[page.target.index][page.page_index - first_page_];
    }

    Spa resolve(const Npa& npa, const BufferLayout& layout) const {
        const auto page = layout.npa_to_page(npa);
        return Spa{frame(page), (layout.base() + npa.offset) % layout.page_size()};
    }

private:
    std::uint64_t first_page_;
    std::uint64_t page_count_;
    SpaMapping mapping_;
    std::vector<std::vector<std::uint64_t>> frames_;
};

}  // namespace rtsim
