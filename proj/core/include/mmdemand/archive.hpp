#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mmdemand/grid.hpp"
#include "mmdemand/time.hpp"

namespace mmdemand {

enum class ServiceLevel { ok, low_service, insufficient_data };

std::string_view to_string(ServiceLevel s) noexcept;
std::optional<ServiceLevel> parse_service_level(std::string_view s) noexcept;

/// insufficient_data below the alpha floor; low_service when the estimated
/// demand is positive and at least twice the observed trip rate.
ServiceLevel classify_service(std::optional<double> demand, double trip_rate, double alpha, double alpha_floor);

/// One (period, cell) line of a result archive.
struct ArchiveRow {
    std::int32_t period = 0;
    std::int32_t cell = 0;
    std::int32_t row = 0;
    std::int32_t col = 0;
    double center_lat = 0.0;
    double center_lon = 0.0;
    std::optional<double> mu_em;
    std::optional<double> mu_naive;
    double alpha = 0.0;
    double trip_rate = 0.0;
    double avail_frac = 0.0;
    ServiceLevel category = ServiceLevel::insufficient_data;
};

/// Self-contained estimation result: run manifest, grid description and
/// one row per (period, cell). Serialized as a single JSON document.
struct ResultArchive {
    static constexpr std::string_view kFormat = "mmdemand-archive";
    static constexpr int kVersion = 1;

    /// Manifest as canonical JSON text (config, input hash, diagnostics).
    std::string manifest_json = "{}";
    GridSpec grid;
    PeriodScheme periods;
    double alpha_floor = 1e-2;
    std::vector<ArchiveRow> rows;

    std::string to_json() const;
    /// Throws ParseError on malformed or incomplete documents.
    static ResultArchive from_json(std::string_view text);

    /// Columns in archive order.
    static const std::vector<std::string>& columns();
    void write_csv(std::ostream& out) const;
};

enum class WindowKind { single, range, all };

/// A period or a contiguous union of periods.
struct PeriodWindow {
    std::int32_t first = 0;
    std::int32_t last = 0;
    WindowKind kind = WindowKind::all;

    /// "all", "h" or "a-b" (inclusive). Throws ValidationError on bad input.
    static PeriodWindow parse(std::string_view text, std::int32_t period_count);
};

struct LayerCell {
    std::int32_t cell = 0;
    std::int32_t row = 0;
    std::int32_t col = 0;
    std::optional<double> demand;
    double availability = 0.0;
    double trip_rate = 0.0;
    double alpha = 0.0;
    ServiceLevel category = ServiceLevel::insufficient_data;
};

/// The four map layers for a window. Over a multi-period window each value
/// is the mean across its periods (demand over estimable periods only) and
/// the service level is classified from those means.
struct LayerSet {
    PeriodWindow window;
    std::vector<LayerCell> cells;
};

LayerSet compute_layers(const ResultArchive& archive, const PeriodWindow& window);

std::string layers_to_json(const ResultArchive& archive, const LayerSet& layers);

} // namespace mmdemand
