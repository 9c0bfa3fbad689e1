#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "mmdemand/error.hpp"
#include "mmdemand/params.hpp"
#include "mmdemand/service.hpp"
#include "mmdemand/simulation.hpp"

using namespace mmdemand;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

std::filesystem::path fresh_workspace(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("mmdemand-test-" + name + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(dir);
    return dir;
}

std::string small_dataset(std::uint64_t seed = 5) {
    SyntheticConfig sc;
    sc.trips = 800;
    sc.days = 3;
    sc.vehicles = 0;
    sc.radius = 1500.0;
    sc.seed = seed;
    std::ostringstream out;
    write_synthetic_trips(out, sc);
    return out.str();
}

EstimateConfig quick_config() { return config_from_params({{"service_hours", "06:00-22:00"}, {"max_iters", "200"}}); }

struct ServerFixture : ::testing::Test {
    std::filesystem::path root = fresh_workspace("http");
    std::unique_ptr<JobService> jobs;
    std::unique_ptr<HttpServer> server;
    std::thread thread;
    int port = 0;

    void SetUp() override {
        jobs = std::make_unique<JobService>(ServiceConfig{root, 1});
        server = std::make_unique<HttpServer>(*jobs);
        port = server->bind("127.0.0.1", 0);
        ASSERT_GT(port, 0);
        thread = std::thread([this] { server->serve(); });
    }
    void TearDown() override {
        server->stop();
        thread.join();
        jobs->shutdown();
        std::filesystem::remove_all(root);
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        return c;
    }
    json wait_done(const std::string& id) {
        jobs->wait(id, 120s);
        auto r = client().Get("/jobs/" + id);
        return json::parse(r->body);
    }
};

} // namespace

TEST(JobRecord, JsonRoundTrip) {
    JobRecord r;
    r.id = "000007";
    r.state = JobState::failed;
    r.config_json = quick_config().to_json();
    r.error = "boom";
    r.failure_report_json = R"({"rows_read":3})";
    EXPECT_EQ(JobRecord::from_json(r.to_json()).to_json(), r.to_json());
}

TEST(JobServiceTest, SubmitRunsToDoneAndPersists) {
    const auto root = fresh_workspace("submit");
    std::string id;
    {
        JobService svc(ServiceConfig{root, 1});
        const JobRecord r = svc.submit(quick_config(), small_dataset());
        id = r.id;
        EXPECT_EQ(id, "000001");
        const auto done = svc.wait(id, 120s);
        ASSERT_TRUE(done);
        EXPECT_EQ(done->state, JobState::done);
        EXPECT_TRUE(svc.archive(id).has_value());
        const json summary = json::parse(done->summary_json);
        EXPECT_GT(summary.at("trips_used").get<int>(), 0);
        EXPECT_EQ(summary.at("periods"), 16);
    }
    EXPECT_TRUE(std::filesystem::exists(root / "index.json"));
    EXPECT_TRUE(std::filesystem::exists(root / "jobs" / id / "dataset.csv"));
    JobService again(ServiceConfig{root, 1});
    EXPECT_EQ(again.status(id)->state, JobState::done);
    EXPECT_EQ(again.submit(quick_config(), small_dataset()).id, "000002");
    again.shutdown();
    std::filesystem::remove_all(root);
}

TEST(JobServiceTest, DuplicateSubmissionsGiveIdenticalArchives) {
    const auto root = fresh_workspace("dup");
    JobService svc(ServiceConfig{root, 1});
    const std::string data = small_dataset(8);
    const auto a = svc.submit(quick_config(), data).id;
    const auto b = svc.submit(quick_config(), data).id;
    svc.wait(a, 120s);
    svc.wait(b, 120s);
    EXPECT_EQ(*svc.archive(a), *svc.archive(b));
    EXPECT_EQ(svc.status(a)->input_sha256, svc.status(b)->input_sha256);
    svc.shutdown();
    std::filesystem::remove_all(root);
}

TEST(JobServiceTest, RejectsBadInputUpFront) {
    const auto root = fresh_workspace("reject");
    JobService svc(ServiceConfig{root, 1});
    EXPECT_THROW(svc.submit(quick_config(), ""), ValidationError);
    EXPECT_THROW(svc.submit(quick_config(), "a,b,c\n1,2,3\n"), ValidationError);
    EstimateConfig bad = quick_config();
    bad.p0 = 1.5;
    EXPECT_THROW(svc.submit(bad, small_dataset()), ValidationError);
    EXPECT_THROW(svc.import_archive("{\"format\":"), ParseError);
    EXPECT_TRUE(svc.list().empty());
    svc.shutdown();
    std::filesystem::remove_all(root);
}

TEST(JobServiceTest, FailedJobCarriesIngestReport) {
    const auto root = fresh_workspace("fail");
    JobService svc(ServiceConfig{root, 1});
    // every row malformed: the header passes, estimation finds no trips
    const std::string data =
        "trip_id,start_time,end_time,start_lat,start_lon,end_lat,end_lon\n1,x,y,41.8,-71.4,41.8,-71.4\n";
    const auto id = svc.submit(quick_config(), data).id;
    const auto r = svc.wait(id, 60s);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->state, JobState::failed);
    EXPECT_FALSE(r->error.empty());
    const json report = json::parse(r->failure_report_json);
    EXPECT_EQ(report.at("rows_read"), 1);
    svc.shutdown();
    std::filesystem::remove_all(root);
}

TEST(JobServiceTest, RestartFailsInterruptedAndResumesQueued) {
    const auto root = fresh_workspace("restart");
    {
        JobStore store(root);
        JobRecord running;
        running.state = JobState::running;
        running.config_json = quick_config().to_json();
        store.create(running, small_dataset());
        JobRecord queued;
        queued.config_json = quick_config().to_json();
        store.create(queued, small_dataset());
    }
    JobService svc(ServiceConfig{root, 1});
    const auto interrupted = svc.status("000001");
    ASSERT_TRUE(interrupted);
    EXPECT_EQ(interrupted->state, JobState::failed);
    EXPECT_FALSE(interrupted->error.empty());
    const auto resumed = svc.wait("000002", 120s);
    ASSERT_TRUE(resumed);
    EXPECT_EQ(resumed->state, JobState::done);
    svc.shutdown();
    std::filesystem::remove_all(root);
}

TEST(WriteFileAtomic, ReplacesWholeFile) {
    const auto root = fresh_workspace("atomic");
    std::filesystem::create_directories(root);
    write_file_atomic(root / "f.txt", "first version, longer");
    write_file_atomic(root / "f.txt", "second");
    std::ifstream in(root / "f.txt");
    std::string s((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(s, "second");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(root)) ++files;
    EXPECT_EQ(files, 1u);
    std::filesystem::remove_all(root);
}

TEST_F(ServerFixture, HealthAndEmptyList) {
    auto c = client();
    auto h = c.Get("/health");
    ASSERT_TRUE(h);
    EXPECT_EQ(h->status, 200);
    auto l = c.Get("/jobs");
    EXPECT_EQ(json::parse(l->body).at("jobs").size(), 0u);
}

TEST_F(ServerFixture, JobLifecycleOverHttp) {
    auto c = client();
    auto post = c.Post("/jobs?service_hours=06:00-22:00&max_iters=200", small_dataset(), "text/csv");
    ASSERT_TRUE(post);
    ASSERT_EQ(post->status, 202) << post->body;
    const std::string id = json::parse(post->body).at("id");
    EXPECT_EQ(post->get_header_value("Location"), "/jobs/" + id);

    const json status = wait_done(id);
    EXPECT_EQ(status.at("state"), "done");

    auto archive = c.Get("/jobs/" + id + "/archive");
    ASSERT_EQ(archive->status, 200);
    EXPECT_EQ(archive->body, *jobs->archive(id));

    auto layers = c.Get("/jobs/" + id + "/layers?period=2-4");
    ASSERT_EQ(layers->status, 200);
    const json l = json::parse(layers->body);
    EXPECT_TRUE(l.at("layers").contains("service_level"));
    EXPECT_EQ(c.Get("/jobs/" + id + "/layers?period=99")->status, 400);
    EXPECT_EQ(c.Get("/jobs/" + id + "/layers")->status, 200);

    auto reup = c.Post("/archives", archive->body, "application/json");
    ASSERT_EQ(reup->status, 201);
    const std::string rid = json::parse(reup->body).at("id");
    EXPECT_EQ(json::parse(c.Get("/jobs/" + rid)->body).at("source"), "reupload");
    EXPECT_EQ(c.Get("/jobs/" + rid + "/archive")->body, archive->body);

    EXPECT_EQ(json::parse(c.Get("/jobs")->body).at("jobs").size(), 2u);
}

TEST_F(ServerFixture, ErrorsUseStatusCodesAndFieldLists) {
    auto c = client();
    auto bad = c.Post("/jobs?p0=1.5&colour=red", small_dataset(), "text/csv");
    ASSERT_EQ(bad->status, 400);
    const json err = json::parse(bad->body);
    EXPECT_EQ(err.at("error"), "validation");
    std::set<std::string> fields;
    for (const auto& f : err.at("fields")) fields.insert(f.at("field").get<std::string>());
    EXPECT_TRUE(fields.count("p0"));
    EXPECT_TRUE(fields.count("colour"));

    EXPECT_EQ(c.Post("/jobs", "", "text/csv")->status, 400);
    EXPECT_EQ(c.Get("/jobs/999999")->status, 404);
    EXPECT_EQ(c.Get("/jobs/999999/archive")->status, 404);
    auto malformed = c.Post("/archives", "{\"format\": \"mmdemand", "application/json");
    EXPECT_EQ(malformed->status, 400);
    EXPECT_EQ(json::parse(malformed->body).at("error"), "malformed_archive");
}

TEST_F(ServerFixture, ArchiveOfUnfinishedJobIsConflict) {
    auto c = client();
    // a long job keeps the single worker busy while the second waits in the queue
    SyntheticConfig sc;
    sc.trips = 30000;
    sc.days = 10;
    sc.vehicles = 0;
    std::ostringstream big;
    write_synthetic_trips(big, sc);
    const std::string first = json::parse(c.Post("/jobs", big.str(), "text/csv")->body).at("id");
    const std::string second = json::parse(c.Post("/jobs", small_dataset(), "text/csv")->body).at("id");
    auto r = c.Get("/jobs/" + second + "/archive");
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(json::parse(r->body).at("error"), "not_ready");
    EXPECT_EQ(json::parse(c.Get("/jobs/" + second)->body).at("state"), "queued");
    jobs->wait(first, 300s);
    jobs->wait(second, 300s);
}
