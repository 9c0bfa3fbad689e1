#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mmdemand/archive.hpp"
#include "mmdemand/error.hpp"
#include "mmdemand/pipeline.hpp"

namespace mmdemand {

enum class JobState { queued, running, done, failed };

std::string_view to_string(JobState s) noexcept;
std::optional<JobState> parse_job_state(std::string_view s) noexcept;

struct JobRecord {
    std::string id;
    JobState state = JobState::queued;
    /// "estimate" for uploaded trip data, "reupload" for imported archives.
    std::string source = "estimate";
    std::string created_at;
    std::string started_at;
    std::string finished_at;
    /// Canonical JSON of the run configuration.
    std::string config_json = "{}";
    std::string input_sha256;
    std::string error;
    /// Ingest report JSON when a failed job's input could still be parsed.
    std::string failure_report_json;
    /// Short run summary once done (iterations, estimable cells, trips).
    std::string summary_json = "{}";

    std::string to_json() const;
    static JobRecord from_json(std::string_view text);
};

/// In-memory progress of the running job.
struct JobProgress {
    std::string stage;
    std::int32_t iteration = 0;
};

/// Job directories under a workspace root:
///   <root>/index.json            list of job ids
///   <root>/jobs/<id>/job.json     JobRecord, rewritten on every transition
///   <root>/jobs/<id>/dataset.csv  uploaded trips
///   <root>/jobs/<id>/archive.json result archive
/// Files are replaced by rename so a crash never leaves a torn record.
class JobStore {
public:
    explicit JobStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    /// Allocates the next id and writes the record plus optional dataset.
    JobRecord create(JobRecord record, std::string_view dataset);
    void save(const JobRecord& record);
    std::optional<JobRecord> load(const std::string& id) const;
    std::vector<std::string> ids() const;

    std::filesystem::path dataset_path(const std::string& id) const;
    std::filesystem::path archive_path(const std::string& id) const;
    void write_archive(const std::string& id, std::string_view archive_json);
    std::optional<std::string> read_archive(const std::string& id) const;

private:
    std::filesystem::path job_dir(const std::string& id) const;
    void write_index() const;

    std::filesystem::path root_;
    mutable std::mutex mutex_;
    std::vector<std::string> ids_;
    std::uint64_t next_id_ = 1;
};

/// Writes `bytes` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

struct ServiceConfig {
    std::filesystem::path workspace;
    /// Worker threads executing jobs in submission order.
    std::int32_t workers = 1;
};

/// Job queue over a JobStore. On construction, jobs left running by a
/// previous process are marked failed and queued jobs are resumed.
class JobService {
public:
    explicit JobService(ServiceConfig cfg);
    ~JobService();
    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    /// Validates and queues. Throws ValidationError with field messages.
    JobRecord submit(const EstimateConfig& cfg, std::string dataset);
    /// Stores an archive as a finished job without re-estimating. Throws ParseError.
    JobRecord import_archive(std::string_view archive_json);

    std::optional<JobRecord> status(const std::string& id) const;
    std::optional<JobProgress> progress(const std::string& id) const;
    std::vector<JobRecord> list() const;
    std::optional<std::string> archive(const std::string& id) const;

    /// Blocks until the job is done or failed, or the timeout expires.
    std::optional<JobRecord> wait(const std::string& id, std::chrono::milliseconds timeout);

    void shutdown();

private:
    void worker_loop();
    void run_job(const std::string& id);

    JobStore store_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::deque<std::string> queue_;
    std::map<std::string, JobProgress> progress_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// HTTP front end:
///   POST /jobs                      CSV body, parameters in the query string
///   GET  /jobs                      all jobs
///   GET  /jobs/{id}                 record plus progress
///   GET  /jobs/{id}/layers?period=  all | h | a-b
///   GET  /jobs/{id}/archive         result archive
///   POST /archives                  re-upload an archive
///   GET  /health
class HttpServer {
public:
    explicit HttpServer(JobService& jobs);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks the calling thread.
    bool serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace mmdemand
