#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmdemand/grid.hpp"

namespace mmdemand::detail {

/// Live per-cell vehicle counts plus, for every cell, the index of the
/// nearest distance class holding a nonempty cell. Only 0 <-> positive
/// transitions touch neighbours, and only those within dist_max.
class NearestTracker {
public:
    NearestTracker(const GridSpec& grid, const DistanceClassTable& classes)
        : grid_(&grid),
          classes_(&classes),
          class_count_(static_cast<std::uint32_t>(classes.class_count())),
          counts_(static_cast<std::size_t>(grid.cell_count()), 0),
          nonempty_at_(static_cast<std::size_t>(grid.cell_count()) * classes.class_count(), 0),
          nearest_(static_cast<std::size_t>(grid.cell_count()), class_count_) {}

    /// Sentinel class index meaning "no vehicle within dist_max".
    std::uint32_t none() const noexcept { return class_count_; }

    std::int32_t count(CellIndex c) const noexcept { return counts_[idx(c)]; }
    std::uint32_t nearest(CellIndex c) const noexcept { return nearest_[idx(c)]; }
    std::span<const std::int32_t> counts() const noexcept { return counts_; }

    /// Applies a count change; `on_change(cell, old_class, new_class)` fires
    /// for every cell whose nearest class moved. Returns the new count.
    template <class F>
    std::int32_t apply(CellIndex c, std::int32_t delta, F&& on_change) {
        std::int32_t& n = counts_[idx(c)];
        const bool was_empty = n == 0;
        n += delta;
        const bool is_empty = n == 0;
        if (was_empty && !is_empty) {
            classes_->for_each_within(*grid_, c, [&](CellIndex nb, std::size_t l) {
                ++nonempty_at_[idx(nb) * class_count_ + l];
                std::uint32_t& near = nearest_[idx(nb)];
                if (l < near) {
                    const std::uint32_t old = near;
                    near = static_cast<std::uint32_t>(l);
                    on_change(nb, old, near);
                }
            });
        } else if (!was_empty && is_empty) {
            classes_->for_each_within(*grid_, c, [&](CellIndex nb, std::size_t l) {
                const std::size_t base = idx(nb) * class_count_;
                --nonempty_at_[base + l];
                std::uint32_t& near = nearest_[idx(nb)];
                if (l == near && nonempty_at_[base + l] == 0) {
                    const std::uint32_t old = near;
                    std::uint32_t k = old + 1;
                    while (k < class_count_ && nonempty_at_[base + k] == 0) ++k;
                    near = k;
                    on_change(nb, old, near);
                }
            });
        }
        return n;
    }

private:
    static std::size_t idx(CellIndex c) noexcept { return static_cast<std::size_t>(c.value); }

    const GridSpec* grid_;
    const DistanceClassTable* classes_;
    std::uint32_t class_count_;
    std::vector<std::int32_t> counts_;
    std::vector<std::int32_t> nonempty_at_;
    std::vector<std::uint32_t> nearest_;
};

} // namespace mmdemand::detail
