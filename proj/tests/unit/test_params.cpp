#include <gtest/gtest.h>

#include <algorithm>

#include "mmdemand/error.hpp"
#include "mmdemand/params.hpp"

using namespace mmdemand;

namespace {

bool has_field(const ValidationError& e, const std::string& field) {
    return std::any_of(e.errors().begin(), e.errors().end(), [&](const FieldError& f) { return f.field == field; });
}

} // namespace

TEST(ConfigFromParams, DefaultsAreThePlannerDefaults) {
    const EstimateConfig cfg = config_from_params({});
    EXPECT_DOUBLE_EQ(cfg.cell_width, 400.0);
    EXPECT_DOUBLE_EQ(cfg.p0, 0.7);
    EXPECT_DOUBLE_EQ(cfg.dist_max, 1000.0);
    EXPECT_EQ(cfg.periods.count, 24);
    EXPECT_DOUBLE_EQ(cfg.em.alpha_floor, 0.01);
    EXPECT_EQ(cfg.em.init_mode, InitMode::uniform);
}

TEST(ConfigFromParams, ReadsEveryKnownParameter) {
    const EstimateConfig cfg = config_from_params({{"cell_width", "300"},
                                                   {"p0", "0.6"},
                                                   {"max_dist", "1200"},
                                                   {"service_hours", "06:00-22:00"},
                                                   {"periods", "8"},
                                                   {"init", "gamma=0.5"},
                                                   {"tol", "1e-8"},
                                                   {"max_iters", "50"},
                                                   {"alpha_floor", "0.02"},
                                                   {"rebalance", "perfect"},
                                                   {"seed", "42"},
                                                   {"utc_offset", "-05:00"},
                                                   {"day_start", "04:00"},
                                                   {"threads", "2"},
                                                   {"delimiter", "tab"}});
    EXPECT_DOUBLE_EQ(cfg.cell_width, 300.0);
    EXPECT_EQ(cfg.periods.window_start, 6 * 3600);
    EXPECT_EQ(cfg.periods.count, 8);
    EXPECT_EQ(cfg.em.init_mode, InitMode::gamma_blend);
    EXPECT_DOUBLE_EQ(cfg.em.gamma, 0.5);
    EXPECT_EQ(cfg.em.max_iters, 50);
    EXPECT_EQ(cfg.rebalance, RebalanceMode::perfect);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.schema.utc_offset_minutes, -300);
    EXPECT_EQ(cfg.day_start_offset, 4 * 3600);
    EXPECT_EQ(cfg.schema.delimiter, '\t');
}

TEST(ConfigFromParams, ReportsEveryProblemTogether) {
    try {
        config_from_params({{"p0", "1.5"}, {"cell_width", "abc"}, {"colour", "red"}, {"periods", "7"}});
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_TRUE(has_field(e, "p0"));
        EXPECT_TRUE(has_field(e, "cell_width"));
        EXPECT_TRUE(has_field(e, "colour"));
        EXPECT_TRUE(has_field(e, "periods"));
    }
}

TEST(ConfigFromParams, UnachievableP0NamesTheRange) {
    try {
        config_from_params({{"p0", "0.2"}});
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        ASSERT_TRUE(has_field(e, "p0"));
        EXPECT_NE(std::string(e.errors()[0].message).find("choose a value"), std::string::npos);
    }
}

TEST(ParseNumberList, RangesAndLists) {
    const auto g = parse_number_list("0:1:0.1", 0.0, 1.0, "gammas");
    ASSERT_EQ(g.size(), 11u);
    EXPECT_DOUBLE_EQ(g[3], 0.3);
    EXPECT_DOUBLE_EQ(g.back(), 1.0);
    EXPECT_EQ(parse_number_list("0.1, 0.5,1", 0.0, 1.0, "p").size(), 3u);
    EXPECT_THROW(parse_number_list("0:2:0.5", 0.0, 1.0, "p"), ValidationError);
    EXPECT_THROW(parse_number_list("1:0:0.1", 0.0, 1.0, "p"), ValidationError);
}

TEST(ParseInit, AcceptsThreeForms) {
    EMConfig em;
    parse_init("trips", em);
    EXPECT_EQ(em.init_mode, InitMode::trips);
    parse_init("gamma=0.25", em);
    EXPECT_EQ(em.init_mode, InitMode::gamma_blend);
    EXPECT_DOUBLE_EQ(em.gamma, 0.25);
    EXPECT_THROW(parse_init("gamma=2", em), ValidationError);
    EXPECT_THROW(parse_init("random", em), ValidationError);
}

TEST(ParseOffsets, Forms) {
    EXPECT_EQ(parse_utc_offset_text("-05:00"), -300);
    EXPECT_EQ(parse_utc_offset_text("+0130"), 90);
    EXPECT_EQ(parse_utc_offset_text("Z"), 0);
    EXPECT_THROW(parse_utc_offset_text("-25:00"), ValidationError);
}

TEST(EstimateConfig, JsonRoundTrip) {
    EstimateConfig cfg = config_from_params({{"p0", "0.6"}, {"init", "gamma=0.4"}, {"service_hours", "07:00-19:00"}});
    cfg.grid = FixedGrid{{41.8, -71.4}, 7, 8};
    cfg.schema.columns = {{"start_time", "Start Time"}};
    const EstimateConfig back = EstimateConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
}
