#include "mmdemand/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmdemand {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double meters_per_degree_lat() { return kEarthRadiusMeters * kDegToRad; }

double meters_per_degree_lon(double lat_deg) {
    return kEarthRadiusMeters * kDegToRad * std::cos(lat_deg * kDegToRad);
}

void check_coordinate(LatLon p) {
    if (!(p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0)) {
        throw std::invalid_argument("coordinate outside [-90,90]x[-180,180]");
    }
}

} // namespace

LatLon GridSpec::center(CellIndex cell) const noexcept {
    const RowCol rc = row_col(cell);
    return {origin_lat + (rc.row + 0.5) * cell_width / meters_per_deg_lat,
            origin_lon + (rc.col + 0.5) * cell_width / meters_per_deg_lon};
}

std::pair<double, double> GridSpec::project(LatLon p) const noexcept {
    return {(p.lon - origin_lon) * meters_per_deg_lon, (p.lat - origin_lat) * meters_per_deg_lat};
}

GridSpec GridSpec::fixed(LatLon origin, double cell_width, std::int32_t rows, std::int32_t cols) {
    check_coordinate(origin);
    if (!(cell_width > 0.0)) throw std::invalid_argument("cell_width must be positive");
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("rows and cols must be positive");
    GridSpec g;
    g.origin_lat = origin.lat;
    g.origin_lon = origin.lon;
    g.cell_width = cell_width;
    g.rows = rows;
    g.cols = cols;
    g.meters_per_deg_lat = meters_per_degree_lat();
    const double mid_lat = origin.lat + 0.5 * rows * cell_width / g.meters_per_deg_lat;
    g.meters_per_deg_lon = meters_per_degree_lon(mid_lat);
    return g;
}

GridSpec build_grid(std::span<const LatLon> points, double cell_width, double padding) {
    if (points.empty()) throw std::invalid_argument("build_grid: empty point set");
    if (!(cell_width > 0.0)) throw std::invalid_argument("build_grid: cell_width must be positive");
    if (!(padding >= 0.0)) throw std::invalid_argument("build_grid: padding must be non-negative");

    double lat_lo = 90.0, lat_hi = -90.0, lon_lo = 180.0, lon_hi = -180.0;
    for (const LatLon& p : points) {
        check_coordinate(p);
        lat_lo = std::min(lat_lo, p.lat);
        lat_hi = std::max(lat_hi, p.lat);
        lon_lo = std::min(lon_lo, p.lon);
        lon_hi = std::max(lon_hi, p.lon);
    }

    GridSpec g;
    g.cell_width = cell_width;
    g.meters_per_deg_lat = meters_per_degree_lat();
    g.meters_per_deg_lon = meters_per_degree_lon(0.5 * (lat_lo + lat_hi));
    g.origin_lat = lat_lo - padding / g.meters_per_deg_lat;
    g.origin_lon = lon_lo - padding / g.meters_per_deg_lon;

    const double extent_y = (lat_hi - lat_lo) * g.meters_per_deg_lat + 2.0 * padding;
    const double extent_x = (lon_hi - lon_lo) * g.meters_per_deg_lon + 2.0 * padding;
    // +1 keeps the far edge inside the half-open box
    g.rows = static_cast<std::int32_t>(std::floor(extent_y / cell_width)) + 1;
    g.cols = static_cast<std::int32_t>(std::floor(extent_x / cell_width)) + 1;
    return g;
}

std::optional<CellIndex> locate(const GridSpec& grid, LatLon p) {
    const auto [x, y] = grid.project(p);
    const double fc = std::floor(x / grid.cell_width);
    const double fr = std::floor(y / grid.cell_width);
    if (!(fc >= 0.0 && fr >= 0.0 && fc < grid.cols && fr < grid.rows)) return std::nullopt;
    return grid.index({static_cast<std::int32_t>(fr), static_cast<std::int32_t>(fc)});
}

double haversine_meters(LatLon a, LatLon b) {
    const double dlat = (b.lat - a.lat) * kDegToRad;
    const double dlon = (b.lon - a.lon) * kDegToRad;
    const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.lat * kDegToRad) * std::cos(b.lat * kDegToRad) *
                         std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(s)));
}

double equirectangular_meters(LatLon a, LatLon b) {
    const double dy = (b.lat - a.lat) * meters_per_degree_lat();
    const double dx = (b.lon - a.lon) * meters_per_degree_lon(0.5 * (a.lat + b.lat));
    return std::hypot(dx, dy);
}

DistanceClassTable::DistanceClassTable(const GridSpec& grid, double dist_max)
    : cell_width_(grid.cell_width), dist_max_(dist_max) {
    if (!(dist_max >= 0.0)) throw std::invalid_argument("distance_classes: dist_max must be >= 0");
    const double w = grid.cell_width;
    reach_ = static_cast<std::int32_t>(std::floor(dist_max / w));

    struct Candidate {
        double dist;
        CellOffset off;
    };
    std::vector<Candidate> cands;
    for (std::int32_t dr = -reach_; dr <= reach_; ++dr) {
        for (std::int32_t dc = -reach_; dc <= reach_; ++dc) {
            const double d = w * std::sqrt(static_cast<double>(dr * dr + dc * dc));
            if (d == 0.0 || d < dist_max - kMergeTolerance) cands.push_back({d, {dr, dc}});
        }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });

    const std::int32_t side = 2 * reach_ + 1;
    lookup_.assign(static_cast<std::size_t>(side) * side, -1);
    for (const Candidate& c : cands) {
        if (classes_.empty() || c.dist - classes_.back() > kMergeTolerance) {
            classes_.push_back(c.dist);
            class_begin_.push_back(offsets_.size());
        }
        const auto cls = static_cast<std::uint32_t>(classes_.size() - 1);
        offsets_.push_back(c.off);
        offset_class_.push_back(cls);
        lookup_[static_cast<std::size_t>((c.off.drow + reach_) * side + (c.off.dcol + reach_))] =
            static_cast<std::int32_t>(cls);
    }
    class_begin_.push_back(offsets_.size());

    boundaries_ = classes_;
    boundaries_.push_back(std::max(dist_max, classes_.back()));
}

std::optional<std::size_t> DistanceClassTable::class_of_offset(std::int32_t drow,
                                                               std::int32_t dcol) const noexcept {
    if (std::abs(drow) > reach_ || std::abs(dcol) > reach_) return std::nullopt;
    const std::int32_t side = 2 * reach_ + 1;
    const std::int32_t cls = lookup_[static_cast<std::size_t>((drow + reach_) * side + (dcol + reach_))];
    if (cls < 0) return std::nullopt;
    return static_cast<std::size_t>(cls);
}

std::optional<std::size_t> DistanceClassTable::class_between(const GridSpec& grid, CellIndex a,
                                                              CellIndex b) const {
    const RowCol ra = grid.row_col(a);
    const RowCol rb = grid.row_col(b);
    return class_of_offset(rb.row - ra.row, rb.col - ra.col);
}

std::vector<CellIndex> DistanceClassTable::neighbors(const GridSpec& grid, CellIndex cell,
                                                     std::size_t l) const {
    std::vector<CellIndex> out;
    if (l >= class_count()) return out;
    for_each_neighbor(grid, cell, l, [&](CellIndex n) { out.push_back(n); });
    return out;
}

} // namespace mmdemand
