#pragma once

#include <cstdint>
#include <compare>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mmdemand {

/// Mean earth radius used for both the local projection and haversine.
inline constexpr double kEarthRadiusMeters = 6371008.8;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

/// Row-major, zero-based cell index.
struct CellIndex {
    std::int32_t value = 0;

    friend constexpr auto operator<=>(CellIndex, CellIndex) = default;
};

struct RowCol {
    std::int32_t row = 0;
    std::int32_t col = 0;

    friend constexpr bool operator==(RowCol, RowCol) = default;
};

/// Uniform metric grid anchored at its south-west corner. Positions are
/// projected with an equirectangular approximation around the grid's mean
/// latitude; row 0 is the southernmost row.
struct GridSpec {
    double origin_lat = 0.0;
    double origin_lon = 0.0;
    double cell_width = 400.0;
    std::int32_t rows = 1;
    std::int32_t cols = 1;
    double meters_per_deg_lat = 0.0;
    double meters_per_deg_lon = 0.0;

    std::int32_t cell_count() const noexcept { return rows * cols; }

    RowCol row_col(CellIndex cell) const noexcept {
        return {cell.value / cols, cell.value % cols};
    }
    CellIndex index(RowCol rc) const noexcept { return {rc.row * cols + rc.col}; }
    bool contains(RowCol rc) const noexcept {
        return rc.row >= 0 && rc.row < rows && rc.col >= 0 && rc.col < cols;
    }

    LatLon center(CellIndex cell) const noexcept;

    /// Projected offset of a position from the grid origin, in meters (x east, y north).
    std::pair<double, double> project(LatLon p) const noexcept;

    /// Builds a grid with explicit extent. Projection constants come from the
    /// latitude midway between the south and north edges.
    static GridSpec fixed(LatLon origin, double cell_width, std::int32_t rows, std::int32_t cols);
};

/// Smallest grid covering every point plus `padding` meters on each side.
/// Throws std::invalid_argument on an empty point set, a non-positive width or
/// coordinates outside the valid lat/lon range.
GridSpec build_grid(std::span<const LatLon> points, double cell_width, double padding);

/// Cell containing `p`. Cells are half-open, [low, high) on both axes.
/// Returns nullopt when the point is outside the grid box.
std::optional<CellIndex> locate(const GridSpec& grid, LatLon p);

/// Great-circle distance in meters.
double haversine_meters(LatLon a, LatLon b);

/// Distance of the equirectangular projection around the pair's mean latitude.
double equirectangular_meters(LatLon a, LatLon b);

struct CellOffset {
    std::int32_t drow = 0;
    std::int32_t dcol = 0;
};

/// Center-to-center distance classes of a grid, truncated at `dist_max`.
///
/// classes()[0] is always 0 (same cell). Every lattice distance strictly
/// below dist_max is a class; dist_max itself is the terminal boundary of
/// the last class, so boundaries() has one more entry than classes().
/// Neighbour lists are stored as offsets and clipped at query time.
class DistanceClassTable {
public:
    DistanceClassTable() = default;

    /// Lattice distances closer than this are merged into one class.
    static constexpr double kMergeTolerance = 1e-6;

    DistanceClassTable(const GridSpec& grid, double dist_max);

    std::size_t class_count() const noexcept { return classes_.size(); }
    const std::vector<double>& classes() const noexcept { return classes_; }
    const std::vector<double>& boundaries() const noexcept { return boundaries_; }
    double dist_max() const noexcept { return dist_max_; }
    double cell_width() const noexcept { return cell_width_; }

    /// Offsets (in cells) belonging to class `l`.
    std::span<const CellOffset> offsets(std::size_t l) const noexcept {
        return {offsets_.data() + class_begin_[l], class_begin_[l + 1] - class_begin_[l]};
    }

    /// Every offset within dist_max, ordered by class.
    std::span<const CellOffset> all_offsets() const noexcept { return offsets_; }
    std::span<const std::uint32_t> offset_classes() const noexcept { return offset_class_; }

    /// Class of the offset between two cells, or nullopt beyond dist_max.
    std::optional<std::size_t> class_between(const GridSpec& grid, CellIndex a, CellIndex b) const;
    std::optional<std::size_t> class_of_offset(std::int32_t drow, std::int32_t dcol) const noexcept;

    /// Cells exactly class `l` away from `cell`, clipped at the grid border.
    std::vector<CellIndex> neighbors(const GridSpec& grid, CellIndex cell, std::size_t l) const;

    template <class F>
    void for_each_neighbor(const GridSpec& grid, CellIndex cell, std::size_t l, F&& f) const {
        const RowCol rc = grid.row_col(cell);
        for (const CellOffset& o : offsets(l)) {
            const RowCol n{rc.row + o.drow, rc.col + o.dcol};
            if (grid.contains(n)) f(grid.index(n));
        }
    }

    /// Visits every in-grid cell within dist_max together with its class index.
    template <class F>
    void for_each_within(const GridSpec& grid, CellIndex cell, F&& f) const {
        const RowCol rc = grid.row_col(cell);
        for (std::size_t k = 0; k < offsets_.size(); ++k) {
            const RowCol n{rc.row + offsets_[k].drow, rc.col + offsets_[k].dcol};
            if (grid.contains(n)) f(grid.index(n), static_cast<std::size_t>(offset_class_[k]));
        }
    }

    std::int32_t reach() const noexcept { return reach_; }

private:
    double cell_width_ = 0.0;
    double dist_max_ = 0.0;
    std::int32_t reach_ = 0;
    std::vector<double> classes_;
    std::vector<double> boundaries_;
    std::vector<CellOffset> offsets_;
    std::vector<std::uint32_t> offset_class_;
    std::vector<std::size_t> class_begin_;
    // (2*reach+1)^2 lookup, -1 beyond dist_max
    std::vector<std::int32_t> lookup_;
};

inline DistanceClassTable distance_classes(const GridSpec& grid, double dist_max) {
    return DistanceClassTable(grid, dist_max);
}

} // namespace mmdemand
