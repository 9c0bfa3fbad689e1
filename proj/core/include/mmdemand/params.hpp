#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mmdemand/pipeline.hpp"

namespace mmdemand {

/// Text forms shared by the command line and the HTTP API. Each parser
/// throws ValidationError naming `field`.

/// "uniform", "trips" or "gamma=G" with G in [0, 1].
void parse_init(std::string_view text, EMConfig& em, const std::string& field = "init");

/// "HH:MM-HH:MM".
std::pair<Seconds, Seconds> parse_service_hours(std::string_view text, const std::string& field = "service_hours");

/// "hourly" or a period count N that tiles the service window.
std::int32_t parse_period_count(std::string_view text, Seconds window_start, Seconds window_end,
                                const std::string& field = "periods");

/// "-05:00", "+0130", "0"; minutes east of UTC.
int parse_utc_offset_text(std::string_view text, const std::string& field = "utc_offset");

/// "a:b:step" (inclusive) or a comma list; every value in [lo, hi].
std::vector<double> parse_number_list(std::string_view text, double lo, double hi, const std::string& field);

/// Builds a configuration from string parameters using the canonical
/// names: cell_width, p0, max_dist, periods, service_hours, init, tol,
/// max_iters, alpha_floor, rebalance, seed, utc_offset, day_start, threads,
/// delimiter. Unknown names are rejected. All problems are reported together.
EstimateConfig config_from_params(const std::map<std::string, std::string>& params);

} // namespace mmdemand
