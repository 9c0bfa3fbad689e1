#include "mmdemand/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <sstream>

// Uploads arrive with whatever content type the client picked; keep
// form-encoded bodies within the general payload cap.
#define CPPHTTPLIB_FORM_URL_ENCODED_PAYLOAD_MAX_LENGTH (std::size_t{1} << 30)
#include <httplib.h>
#include <json.hpp>

#include "mmdemand/params.hpp"

namespace mmdemand {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string now_text() {
    const auto now = std::chrono::system_clock::now();
    return format_timestamp(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()) + "Z";
}

json object_or_null(const std::string& text) {
    if (text.empty()) return nullptr;
    return json::parse(text, nullptr, false);
}

std::string dump_or_empty(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    return j.at(key).dump();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string format_id(std::uint64_t n) {
    std::string digits = std::to_string(n);
    if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
    return digits;
}

} // namespace

std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "failed";
}

std::optional<JobState> parse_job_state(std::string_view s) noexcept {
    for (JobState st : {JobState::queued, JobState::running, JobState::done, JobState::failed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

std::string JobRecord::to_json() const {
    json j = {{"id", id},
              {"state", std::string(to_string(state))},
              {"source", source},
              {"created_at", created_at},
              {"started_at", started_at},
              {"finished_at", finished_at},
              {"config", object_or_null(config_json)},
              {"input_sha256", input_sha256},
              {"error", error},
              {"failure_report", object_or_null(failure_report_json)},
              {"summary", object_or_null(summary_json)}};
    return j.dump();
}

JobRecord JobRecord::from_json(std::string_view text) {
    JobRecord r;
    try {
        const json j = json::parse(text);
        r.id = j.at("id").get<std::string>();
        const auto st = parse_job_state(j.at("state").get<std::string>());
        if (!st) throw ParseError("unknown job state");
        r.state = *st;
        r.source = j.at("source").get<std::string>();
        r.created_at = j.value("created_at", "");
        r.started_at = j.value("started_at", "");
        r.finished_at = j.value("finished_at", "");
        r.config_json = dump_or_empty(j, "config");
        r.input_sha256 = j.value("input_sha256", "");
        r.error = j.value("error", "");
        r.failure_report_json = dump_or_empty(j, "failure_report");
        r.summary_json = dump_or_empty(j, "summary");
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad job record: ") + e.what());
    }
    return r;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

JobStore::JobStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "jobs");
    const fs::path index = root_ / "index.json";
    if (fs::exists(index)) {
        try {
            ids_ = json::parse(read_file(index)).get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError("corrupt job index " + index.string() + ": " + e.what());
        }
    }
    // Job directories are the source of truth; the index only keeps order.
    for (const auto& entry : fs::directory_iterator(root_ / "jobs")) {
        const std::string id = entry.path().filename().string();
        if (fs::exists(entry.path() / "job.json") && std::find(ids_.begin(), ids_.end(), id) == ids_.end()) {
            ids_.push_back(id);
        }
    }
    std::sort(ids_.begin(), ids_.end());
    for (const std::string& id : ids_) {
        std::uint64_t n = 0;
        const auto [p, ec] = std::from_chars(id.data(), id.data() + id.size(), n);
        if (ec == std::errc{} && p == id.data() + id.size()) next_id_ = std::max(next_id_, n + 1);
    }
}

fs::path JobStore::job_dir(const std::string& id) const { return root_ / "jobs" / id; }
fs::path JobStore::dataset_path(const std::string& id) const { return job_dir(id) / "dataset.csv"; }
fs::path JobStore::archive_path(const std::string& id) const { return job_dir(id) / "archive.json"; }

void JobStore::write_index() const { write_file_atomic(root_ / "index.json", json(ids_).dump()); }

JobRecord JobStore::create(JobRecord record, std::string_view dataset) {
    std::lock_guard lock(mutex_);
    record.id = format_id(next_id_++);
    fs::create_directories(job_dir(record.id));
    if (!dataset.empty()) write_file_atomic(dataset_path(record.id), dataset);
    write_file_atomic(job_dir(record.id) / "job.json", record.to_json());
    ids_.push_back(record.id);
    write_index();
    return record;
}

void JobStore::save(const JobRecord& record) {
    std::lock_guard lock(mutex_);
    write_file_atomic(job_dir(record.id) / "job.json", record.to_json());
}

std::optional<JobRecord> JobStore::load(const std::string& id) const {
    std::lock_guard lock(mutex_);
    if (std::find(ids_.begin(), ids_.end(), id) == ids_.end()) return std::nullopt;
    return JobRecord::from_json(read_file(job_dir(id) / "job.json"));
}

std::vector<std::string> JobStore::ids() const {
    std::lock_guard lock(mutex_);
    return ids_;
}

void JobStore::write_archive(const std::string& id, std::string_view archive_json) {
    write_file_atomic(archive_path(id), archive_json);
}

std::optional<std::string> JobStore::read_archive(const std::string& id) const {
    const fs::path p = archive_path(id);
    if (!fs::exists(p)) return std::nullopt;
    return read_file(p);
}

JobService::JobService(ServiceConfig cfg) : store_(std::move(cfg.workspace)) {
    for (const std::string& id : store_.ids()) {
        auto rec = store_.load(id);
        if (!rec) continue;
        if (rec->state == JobState::running) {
            rec->state = JobState::failed;
            rec->error = "interrupted: the service stopped while this job was running";
            rec->finished_at = now_text();
            store_.save(*rec);
        } else if (rec->state == JobState::queued) {
            queue_.push_back(id);
        }
    }
    const std::int32_t n = std::max(1, cfg.workers);
    for (std::int32_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() { shutdown(); }

void JobService::shutdown() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    done_cv_.notify_all();
    for (std::thread& t : workers_) {
        if (t.joinable()) t.join();
    }
    workers_.clear();
}

JobRecord JobService::submit(const EstimateConfig& cfg, std::string dataset) {
    std::vector<FieldError> errs = cfg.validation_errors();
    if (dataset.empty()) {
        errs.push_back({"dataset", "the upload is empty"});
    } else {
        // Header problems are reported now; row problems surface in the ingest report.
        const auto eol = dataset.find('\n');
        std::istringstream header(dataset.substr(0, eol));
        try {
            parse_trips(header, cfg.schema);
        } catch (const ParseError& e) {
            errs.push_back({"dataset", e.what()});
        }
    }
    if (!errs.empty()) throw ValidationError(std::move(errs));

    JobRecord rec;
    rec.state = JobState::queued;
    rec.source = "estimate";
    rec.created_at = now_text();
    rec.config_json = cfg.to_json();
    rec.input_sha256 = sha256_hex(dataset);
    rec.summary_json.clear();
    rec = store_.create(std::move(rec), dataset);
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(rec.id);
        progress_[rec.id] = JobProgress{"queued", 0};
    }
    cv_.notify_one();
    return rec;
}

JobRecord JobService::import_archive(std::string_view archive_json) {
    const ResultArchive archive = ResultArchive::from_json(archive_json);
    const json manifest = json::parse(archive.manifest_json, nullptr, false);

    JobRecord rec;
    rec.state = JobState::done;
    rec.source = "reupload";
    rec.created_at = now_text();
    rec.finished_at = rec.created_at;
    if (manifest.is_object()) {
        rec.config_json = dump_or_empty(manifest, "config");
        rec.input_sha256 = manifest.value("input_sha256", "");
    }
    json summary = {{"periods", archive.periods.count},
                    {"cells", archive.grid.cell_count()},
                    {"rows", archive.rows.size()}};
    if (manifest.is_object() && manifest.contains("em")) {
        summary["iterations"] = manifest["em"].value("iterations", 0);
        summary["converged"] = manifest["em"].value("converged", false);
    }
    rec.summary_json = summary.dump();
    rec = store_.create(std::move(rec), {});
    // Stored verbatim so a later download is byte-identical to the upload.
    store_.write_archive(rec.id, archive_json);
    done_cv_.notify_all();
    return rec;
}

std::optional<JobRecord> JobService::status(const std::string& id) const { return store_.load(id); }

std::optional<JobProgress> JobService::progress(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = progress_.find(id);
    if (it == progress_.end()) return std::nullopt;
    return it->second;
}

std::vector<JobRecord> JobService::list() const {
    std::vector<JobRecord> out;
    for (const std::string& id : store_.ids()) {
        if (auto r = store_.load(id)) out.push_back(std::move(*r));
    }
    return out;
}

std::optional<std::string> JobService::archive(const std::string& id) const {
    auto rec = store_.load(id);
    if (!rec || rec->state != JobState::done) return std::nullopt;
    return store_.read_archive(id);
}

std::optional<JobRecord> JobService::wait(const std::string& id, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(mutex_);
    while (true) {
        auto rec = store_.load(id);
        if (!rec) return std::nullopt;
        if (rec->state == JobState::done || rec->state == JobState::failed) return rec;
        if (stopping_) return rec;
        if (done_cv_.wait_until(lock, deadline) == std::cv_status::timeout) return store_.load(id);
    }
}

void JobService::worker_loop() {
    while (true) {
        std::string id;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
        }
        run_job(id);
        {
            std::lock_guard lock(mutex_);
            progress_.erase(id);
        }
        done_cv_.notify_all();
    }
}

void JobService::run_job(const std::string& id) {
    auto loaded = store_.load(id);
    if (!loaded) return;
    JobRecord rec = std::move(*loaded);
    rec.state = JobState::running;
    rec.started_at = now_text();
    store_.save(rec);

    const auto set_progress = [&](std::string_view stage, std::int32_t iteration) {
        std::lock_guard lock(mutex_);
        progress_[id] = JobProgress{std::string(stage), iteration};
    };
    set_progress(stage::ingest, 0);

    EstimateConfig cfg;
    try {
        cfg = EstimateConfig::from_json(rec.config_json);
        std::ifstream in(store_.dataset_path(id), std::ios::binary);
        if (!in) throw Error("dataset missing from the workspace");
        EstimateResult result = estimate(in, cfg, rec.input_sha256, set_progress);
        store_.write_archive(id, result.archive.to_json());
        json summary = {{"iterations", result.diagnostics.iterations},
                        {"converged", result.diagnostics.converged},
                        {"days", result.days},
                        {"trips_used", result.trips_used},
                        {"estimable_entries", result.estimable_entries},
                        {"rows_read", result.report.rows_read},
                        {"rows_dropped", result.report.dropped_total()},
                        {"periods", result.archive.periods.count},
                        {"cells", result.archive.grid.cell_count()}};
        rec.summary_json = summary.dump();
        rec.state = JobState::done;
    } catch (const std::exception& e) {
        rec.state = JobState::failed;
        rec.error = e.what();
        // Attach whatever the ingest stage can still say about the input.
        try {
            std::ifstream again(store_.dataset_path(id), std::ios::binary);
            const ParsedTrips parsed = parse_trips(again, cfg.schema);
            rec.failure_report_json = ingest_report_json(parsed.report);
        } catch (const std::exception&) {
            rec.failure_report_json.clear();
        }
    }
    rec.finished_at = now_text();
    store_.save(rec);
}

// ---------------------------------------------------------------- HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                const std::vector<FieldError>& fields = {}) {
    json f = json::array();
    for (const FieldError& e : fields) f.push_back({{"field", e.field}, {"message", e.message}});
    send_json(res, status, {{"error", kind}, {"message", message}, {"fields", f}});
}

// Query-string parameters only; a form-encoded body is data, not options.
std::map<std::string, std::string> query_params(const httplib::Request& req) {
    std::map<std::string, std::string> out;
    const auto q = req.target.find('?');
    if (q == std::string::npos) return out;
    httplib::Params params;
    httplib::detail::parse_query_text(req.target.substr(q + 1), params);
    for (const auto& [k, v] : params) out[k] = v;
    return out;
}

json record_view(const JobRecord& rec, const std::optional<JobProgress>& progress) {
    json j = json::parse(rec.to_json());
    if (progress && rec.state != JobState::done && rec.state != JobState::failed) {
        j["progress"] = {{"stage", progress->stage}, {"iteration", progress->iteration}};
    } else {
        j["progress"] = nullptr;
    }
    return j;
}

} // namespace

struct HttpServer::Impl {
    JobService& jobs;
    httplib::Server server;
    std::mutex cache_mutex;
    // Parsed archives of finished jobs; finished archives never change.
    std::map<std::string, std::shared_ptr<const ResultArchive>> cache;

    explicit Impl(JobService& j) : jobs(j) { routes(); }

    std::shared_ptr<const ResultArchive> parsed_archive(const std::string& id, const std::string& text) {
        std::lock_guard lock(cache_mutex);
        auto it = cache.find(id);
        if (it != cache.end()) return it->second;
        auto parsed = std::make_shared<const ResultArchive>(ResultArchive::from_json(text));
        cache.emplace(id, parsed);
        return parsed;
    }

    // Shared lookup for endpoints that need a finished job. Sends 404 or 409.
    std::optional<std::string> finished_archive(const std::string& id, httplib::Response& res) {
        auto rec = jobs.status(id);
        if (!rec) {
            send_error(res, 404, "not_found", "no job with id " + id);
            return std::nullopt;
        }
        if (rec->state != JobState::done) {
            send_error(res, 409, "not_ready", "job " + id + " is " + std::string(to_string(rec->state)));
            return std::nullopt;
        }
        auto text = jobs.archive(id);
        if (!text) send_error(res, 500, "internal", "archive missing for job " + id);
        return text;
    }

    void routes() {
        server.set_payload_max_length(std::size_t{1} << 30);
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            } catch (...) {
                send_error(res, 500, "internal", "unknown error");
            }
        });
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });

        server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const EstimateConfig cfg = config_from_params(query_params(req));
                const JobRecord rec = jobs.submit(cfg, req.body);
                res.set_header("Location", "/jobs/" + rec.id);
                send_json(res, 202, record_view(rec, jobs.progress(rec.id)));
            } catch (const ValidationError& e) {
                send_error(res, 400, "validation", "invalid job parameters", e.errors());
            }
        });

        server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
            json arr = json::array();
            for (const JobRecord& r : jobs.list()) arr.push_back(record_view(r, jobs.progress(r.id)));
            send_json(res, 200, {{"jobs", arr}});
        });

        server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto rec = jobs.status(id);
            if (!rec) return send_error(res, 404, "not_found", "no job with id " + id);
            send_json(res, 200, record_view(*rec, jobs.progress(id)));
        });

        server.Get(R"(/jobs/([^/]+)/archive)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto text = finished_archive(id, res);
            if (!text) return;
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"archive-" + id + ".json\"");
            res.set_content(*text, "application/json");
        });

        server.Get(R"(/jobs/([^/]+)/layers)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto text = finished_archive(id, res);
            if (!text) return;
            const auto archive = parsed_archive(id, *text);
            const std::string period = req.has_param("period") ? req.get_param_value("period") : "all";
            try {
                const PeriodWindow window = PeriodWindow::parse(period, archive->periods.count);
                res.status = 200;
                res.set_content(layers_to_json(*archive, compute_layers(*archive, window)), "application/json");
            } catch (const ValidationError& e) {
                send_error(res, 400, "validation", "invalid period", e.errors());
            }
        });

        server.Post("/archives", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const JobRecord rec = jobs.import_archive(req.body);
                res.set_header("Location", "/jobs/" + rec.id);
                send_json(res, 201, record_view(rec, std::nullopt));
            } catch (const ParseError& e) {
                send_error(res, 400, "malformed_archive", e.what());
            }
        });
    }
};

HttpServer::HttpServer(JobService& jobs) : impl_(std::make_unique<Impl>(jobs)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

} // namespace mmdemand
