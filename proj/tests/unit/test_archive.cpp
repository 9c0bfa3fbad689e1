#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "mmdemand/archive.hpp"
#include "mmdemand/error.hpp"

using namespace mmdemand;
using json = nlohmann::json;

namespace {

// Two periods over a 1 x 3 grid with hand-picked values.
ResultArchive sample_archive() {
    ResultArchive a;
    a.grid = GridSpec::fixed({41.8, -71.4}, 400.0, 1, 3);
    a.periods = PeriodScheme{12 * 3600, 14 * 3600, 2};
    a.manifest_json = R"({"source":"estimate","reupload":false})";
    const double mu[2][3] = {{4.0, 2.0, 0.0}, {2.0, 2.0, 0.0}};
    for (std::int32_t h = 0; h < 2; ++h) {
        for (std::int32_t c = 0; c < 3; ++c) {
            ArchiveRow r;
            r.period = h;
            r.cell = c;
            r.row = 0;
            r.col = c;
            r.center_lat = a.grid.center({c}).lat;
            r.center_lon = a.grid.center({c}).lon;
            r.alpha = c == 2 ? 0.0 : 0.5 + 0.1 * c;
            r.trip_rate = 1.5;
            r.avail_frac = c == 2 ? 0.0 : 1.0 / 3.0;
            if (c != 2) {
                r.mu_em = mu[h][c];
                r.mu_naive = mu[h][c] * 0.9;
            }
            r.category = classify_service(r.mu_em, r.trip_rate, r.alpha, a.alpha_floor);
            a.rows.push_back(r);
        }
    }
    return a;
}

} // namespace

TEST(ServiceLevel, ThresholdArithmetic) {
    EXPECT_EQ(classify_service(4.0, 1.5, 0.8, 0.01), ServiceLevel::low_service);
    EXPECT_EQ(classify_service(3.0, 1.5, 0.8, 0.01), ServiceLevel::low_service);
    EXPECT_EQ(classify_service(2.0, 1.5, 0.8, 0.01), ServiceLevel::ok);
    EXPECT_EQ(classify_service(std::nullopt, 0.0, 0.0, 0.01), ServiceLevel::insufficient_data);
    EXPECT_EQ(classify_service(5.0, 1.0, 0.005, 0.01), ServiceLevel::insufficient_data);
    EXPECT_EQ(classify_service(0.0, 0.0, 0.9, 0.01), ServiceLevel::ok);
}

TEST(Archive, RoundTripsByteForByte) {
    const ResultArchive a = sample_archive();
    const std::string text = a.to_json();
    const ResultArchive b = ResultArchive::from_json(text);
    EXPECT_EQ(b.to_json(), text);
    ASSERT_EQ(b.rows.size(), a.rows.size());
    EXPECT_FALSE(b.rows[2].mu_em.has_value());
    EXPECT_EQ(b.rows[0].mu_em, a.rows[0].mu_em);
}

TEST(Archive, SchemaCarriesBothEstimatorsAndAlpha) {
    const json doc = json::parse(sample_archive().to_json());
    const auto cols = doc.at("columns").get<std::vector<std::string>>();
    EXPECT_EQ(cols, ResultArchive::columns());
    for (const char* c : {"mu_em", "mu_naive", "alpha", "trip_rate", "avail_frac", "category"}) {
        EXPECT_NE(std::find(cols.begin(), cols.end(), c), cols.end()) << c;
    }
    EXPECT_EQ(doc.at("manifest").at("source"), "estimate");
}

TEST(Archive, RejectsPartialAndMalformedDocuments) {
    const std::string text = sample_archive().to_json();
    EXPECT_THROW(ResultArchive::from_json(text.substr(0, text.size() / 2)), ParseError);
    json doc = json::parse(text);
    doc["rows"].erase(doc["rows"].begin());
    EXPECT_THROW(ResultArchive::from_json(doc.dump()), ParseError);
    doc = json::parse(text);
    doc.erase("manifest");
    EXPECT_THROW(ResultArchive::from_json(doc.dump()), ParseError);
    doc = json::parse(text);
    doc["format"] = "something-else";
    EXPECT_THROW(ResultArchive::from_json(doc.dump()), ParseError);
}

TEST(Archive, CsvHasHeaderAndOneLinePerRow) {
    std::ostringstream out;
    sample_archive().write_csv(out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("period,cell,row,col", 0), 0u);
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 6);
}

TEST(PeriodWindow, ParsesAllSingleAndRange) {
    EXPECT_EQ(PeriodWindow::parse("all", 24).kind, WindowKind::all);
    EXPECT_EQ(PeriodWindow::parse("", 24).kind, WindowKind::all);
    const auto one = PeriodWindow::parse("5", 24);
    EXPECT_EQ(one.kind, WindowKind::single);
    EXPECT_EQ(one.first, 5);
    const auto range = PeriodWindow::parse("12-14", 24);
    EXPECT_EQ(range.first, 12);
    EXPECT_EQ(range.last, 14);
    for (const char* bad : {"24", "-1", "5-3", "x", "3-30"}) {
        EXPECT_THROW(PeriodWindow::parse(bad, 24), ValidationError) << bad;
    }
}

TEST(Layers, SinglePeriodUsesRowValues) {
    const ResultArchive a = sample_archive();
    const LayerSet l = compute_layers(a, PeriodWindow::parse("0", 2));
    ASSERT_EQ(l.cells.size(), 3u);
    EXPECT_EQ(l.cells[0].category, ServiceLevel::low_service);
    EXPECT_EQ(l.cells[1].category, ServiceLevel::ok);
    EXPECT_EQ(l.cells[2].category, ServiceLevel::insufficient_data);
    EXPECT_FALSE(l.cells[2].demand.has_value());
}

TEST(Layers, WindowClassifiesFromMeans) {
    const ResultArchive a = sample_archive();
    // cell 0: demand (4 + 2) / 2 = 3.0 against trips 1.5, so low service
    const LayerSet l = compute_layers(a, PeriodWindow::parse("all", 2));
    EXPECT_DOUBLE_EQ(*l.cells[0].demand, 3.0);
    EXPECT_EQ(l.cells[0].category, ServiceLevel::low_service);
    EXPECT_DOUBLE_EQ(*l.cells[1].demand, 2.0);
    EXPECT_EQ(l.cells[1].category, ServiceLevel::ok);
}

TEST(Layers, JsonCarriesGridAndFourLayers) {
    const ResultArchive a = sample_archive();
    const json doc = json::parse(layers_to_json(a, compute_layers(a, PeriodWindow::parse("1", 2))));
    EXPECT_EQ(doc.at("grid").at("rows"), 1);
    EXPECT_EQ(doc.at("grid").at("cols"), 3);
    for (const char* layer : {"demand", "availability", "trips", "service_level"}) {
        EXPECT_EQ(doc.at("layers").at(layer).size(), 3u) << layer;
    }
    EXPECT_TRUE(doc.at("layers").at("demand")[2].is_null());
}
