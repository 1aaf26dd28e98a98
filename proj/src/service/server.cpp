#include "playertrack/service/server.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "httplib.h"
#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/core/io.hpp"
#include "playertrack/core/log.hpp"

namespace playertrack {

std::string to_string(JobState s) {
    switch (s) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "failed";
}

JobState job_state_from_string(const std::string& s) {
    if (s == "queued") return JobState::queued;
    if (s == "running") return JobState::running;
    if (s == "done") return JobState::done;
    if (s == "failed") return JobState::failed;
    throw FormatError("unknown job state '" + s + "'");
}

nlohmann::json to_json(const Job& j) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : j.curve) {
        curve.push_back({{"epoch", e.epoch}, {"loss_id", e.id}, {"loss_triplet", e.triplet}, {"total", e.total}});
    }
    return {{"id", j.id},
            {"state", to_string(j.state)},
            {"round", j.round},
            {"alpha", j.alpha},
            {"seed", j.seed},
            {"epoch", static_cast<int>(j.curve.size())},
            {"epochs", j.epochs},
            {"loss_curve", std::move(curve)},
            {"checkpoint", j.checkpoint_hash},
            {"error", j.error}};
}

Job job_from_json(const nlohmann::json& j) {
    Job job;
    job.id = j.at("id").get<int>();
    job.state = job_state_from_string(j.at("state").get<std::string>());
    job.round = j.value("round", 0);
    job.alpha = j.value("alpha", 0);
    job.seed = j.value("seed", std::uint64_t{0});
    job.epochs = j.value("epochs", 0);
    for (const auto& e : j.value("loss_curve", nlohmann::json::array())) {
        job.curve.push_back({e.at("epoch").get<int>(), e.at("loss_id").get<double>(),
                             e.at("loss_triplet").get<double>(), e.at("total").get<double>()});
    }
    job.checkpoint_hash = j.value("checkpoint", std::string());
    job.error = j.value("error", std::string());
    return job;
}

namespace {

struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& message) : std::runtime_error(message), status(s) {}
};

void reply(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw HttpError(400, std::string("malformed JSON: ") + e.what());
    }
}

template <typename T>
T field(const nlohmann::json& body, const char* key) {
    if (!body.contains(key)) throw HttpError(422, std::string("missing field '") + key + "'");
    try {
        return body.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw HttpError(422, std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T field_or(const nlohmann::json& body, const char* key, T fallback) {
    return body.contains(key) ? field<T>(body, key) : fallback;
}

long long path_id(const httplib::Request& req) {
    try {
        return std::stoll(req.matches[1].str());
    } catch (const std::exception&) {
        throw HttpError(404, "unknown id " + req.matches[1].str());
    }
}

std::string frame_url(int frame) { return "/api/frames/" + std::to_string(frame); }

// Frame images follow the MOT naming: 1-based, six digits.
std::optional<std::filesystem::path> frame_file(const std::filesystem::path& dir, int frame) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d", frame + 1);
    for (const char* ext : {".jpg", ".jpeg", ".png"}) {
        const auto p = dir / (std::string(name) + ext);
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

Server::Server(const std::filesystem::path& project_dir)
    : http_(std::make_unique<httplib::Server>()), store_(ProjectStore::open(project_dir)) {
    if (std::filesystem::exists(store_.paths().jobs())) {
        const auto saved = io::read_json(store_.paths().jobs());
        for (const auto& j : saved.at("jobs")) jobs_.push_back(job_from_json(j));
    }
    bool changed = false;
    for (auto& job : jobs_) {
        if (job.state == JobState::queued || job.state == JobState::running) {
            job.state = JobState::failed;
            job.error = "interrupted by a server restart";
            changed = true;
        }
    }
    if (changed) {
        std::lock_guard lock(jobs_mutex_);
        save_jobs();
    }
    routes();
}

Server::~Server() { stop(); }

bool Server::listen(const std::string& host, int port) { return http_->listen(host, port); }
int Server::bind_to_any_port(const std::string& host) { return http_->bind_to_any_port(host); }
bool Server::listen_after_bind() { return http_->listen_after_bind(); }
bool Server::is_running() const { return http_->is_running(); }
void Server::wait_until_ready() const { http_->wait_until_ready(); }

void Server::stop() {
    cancel_ = true;
    if (http_->is_running()) http_->stop();
    if (worker_.joinable()) worker_.join();
}

void Server::wait_for_jobs() {
    std::unique_lock lock(jobs_mutex_);
    jobs_cv_.wait(lock, [this] { return !job_active(); });
}

void Server::save_jobs() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& j : jobs_) arr.push_back(to_json(j));
    io::write_json(store_.paths().jobs(), {{"v", io::kSchemaVersion}, {"jobs", std::move(arr)}});
}

Job* Server::find_job(int id) {
    for (auto& j : jobs_) {
        if (j.id == id) return &j;
    }
    return nullptr;
}

bool Server::job_active() const {
    return std::any_of(jobs_.begin(), jobs_.end(),
                       [](const Job& j) { return j.state == JobState::queued || j.state == JobState::running; });
}

void Server::start_job(Job job) {
    // Caller holds jobs_mutex_ and has checked that nothing is active.
    if (worker_.joinable()) worker_.join();
    jobs_.push_back(job);
    save_jobs();
    worker_ = std::thread([this, id = job.id] { run_job(id); });
}

void Server::run_job(int job_id) {
    Job snapshot;
    {
        std::lock_guard lock(jobs_mutex_);
        Job* job = find_job(job_id);
        job->state = JobState::running;
        save_jobs();
        snapshot = *job;
    }
    std::vector<Annotation> annotations;
    {
        std::shared_lock lock(store_mutex_);
        annotations = store_.annotations();
    }
    try {
        nn::TrainOptions options;
        options.settings = store_.config().training;
        options.alpha = snapshot.alpha;
        options.seed = snapshot.seed;
        options.cancel = &cancel_;
        options.on_epoch = [&](const nn::EpochLoss& e) {
            std::lock_guard lock(jobs_mutex_);
            find_job(job_id)->curve.push_back(e);
            save_jobs();
        };
        const auto result = nn::train(store_.tracklets(), store_.embeddings(), annotations, store_.config(), options);
        TrainOutcome outcome;
        {
            std::unique_lock lock(store_mutex_);
            outcome = store_.commit_training(snapshot.round, result);
        }
        std::lock_guard lock(jobs_mutex_);
        Job* job = find_job(job_id);
        job->state = JobState::done;
        job->alpha = outcome.alpha;
        job->checkpoint_hash = outcome.checkpoint_hash;
        save_jobs();
    } catch (const std::exception& e) {
        log::error(std::string("training job ") + std::to_string(job_id) + " failed: " + e.what());
        std::lock_guard lock(jobs_mutex_);
        Job* job = find_job(job_id);
        job->state = JobState::failed;
        job->error = e.what();
        save_jobs();
    }
    jobs_cv_.notify_all();
}

void Server::routes() {
    using httplib::Request;
    using httplib::Response;
    auto& s = *http_;

    s.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const HttpError& e) {
            reply(res, {{"error", e.what()}}, e.status);
        } catch (const InvalidArgument& e) {
            reply(res, {{"error", e.what()}}, 422);
        } catch (const std::exception& e) {
            reply(res, {{"error", e.what()}}, 500);
        }
    });
    s.set_error_handler([](const Request&, Response& res) {
        if (res.body.empty()) reply(res, {{"error", "not found"}}, res.status);
    });

    // Lock order everywhere: jobs_mutex_ before store_mutex_.
    s.Get("/api/project", [this](const Request&, Response& res) {
        int active = 0;
        {
            std::lock_guard jl(jobs_mutex_);
            for (const auto& j : jobs_) {
                if (j.state == JobState::queued || j.state == JobState::running) active = j.id;
            }
        }
        std::shared_lock lock(store_mutex_);
        const auto& st = store_.state();
        nlohmann::json checkpoint = nullptr;
        if (!st.checkpoint.empty()) {
            checkpoint = {{"file", st.checkpoint},
                          {"hash", st.checkpoint_hash},
                          {"round", st.checkpoint_round},
                          {"alpha", st.checkpoint_alpha}};
        }
        const std::size_t annotated = store_.annotations().size();
        reply(res, {{"config", io::to_json(store_.config())},
                    {"counts",
                     {{"detections", store_.detections().size()},
                      {"tracklets", store_.tracklets().size()},
                      {"annotations", store_.annotation_log().size()},
                      {"annotated_tracklets", annotated},
                      {"associations", st.associations}}},
                    {"round", st.round},
                    {"checkpoint", checkpoint},
                    {"has_ground_truth", store_.ground_truth().has_value()},
                    {"has_frames", store_.has_frames()},
                    {"active_job", active == 0 ? nlohmann::json(nullptr) : nlohmann::json(active)}});
    });

    // Current identity, provenance and class scores of every tracklet.
    auto summaries = [this](std::optional<Identity> only) {
        const auto association = store_.latest_association();
        const auto scores = store_.latest_scores();
        std::unordered_map<TrackletId, Identity> labels;
        for (const auto& a : store_.annotations()) labels[a.tracklet_id] = a.identity;
        const bool thumbs = store_.has_frames();

        nlohmann::json out = nlohmann::json::array();
        for (const auto& t : store_.tracklets()) {
            nlohmann::json identity = nullptr, provenance = nullptr, score = nullptr;
            if (const auto* e = association ? association->find(t.id) : nullptr) {
                identity = e->identity;
                provenance = to_string(e->provenance);
                score = e->score;
            }
            if (auto it = labels.find(t.id); it != labels.end()) {
                identity = it->second;
                provenance = to_string(Provenance::annotated);
            }
            if (only && (identity.is_null() || identity.get<Identity>() != *only)) continue;
            const auto* probs = scores ? scores->find(t.id) : nullptr;
            out.push_back({{"id", t.id},
                           {"identity", identity},
                           {"provenance", provenance},
                           {"score", score},
                           {"scores", probs ? nlohmann::json(*probs) : nlohmann::json(nullptr)},
                           {"first_frame", t.first_frame()},
                           {"last_frame", t.last_frame()},
                           {"length", t.length()},
                           {"thumbnail", thumbs}});
        }
        return out;
    };

    s.Get("/api/tracklets", [this, summaries](const Request& req, Response& res) {
        std::optional<Identity> only;
        if (req.has_param("identity")) {
            const std::string v = req.get_param_value("identity");
            try {
                std::size_t used = 0;
                only = std::stoi(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw HttpError(422, "identity must be an integer");
            }
        }
        std::shared_lock lock(store_mutex_);
        if (only && (*only < 0 || *only > store_.config().n_players)) {
            throw HttpError(422, "identity outside [0, " + std::to_string(store_.config().n_players) + "]");
        }
        reply(res, {{"tracklets", summaries(only)}});
    });

    s.Get(R"(/api/tracklets/(\d+))", [this, summaries](const Request& req, Response& res) {
        const auto id = static_cast<TrackletId>(path_id(req));
        std::shared_lock lock(store_mutex_);
        const Tracklet* t = store_.find_tracklet(id);
        if (!t) throw HttpError(404, "unknown tracklet " + std::to_string(id));

        nlohmann::json detail;
        for (auto& row : summaries(std::nullopt)) {
            if (row.at("id").get<TrackletId>() == id) detail = std::move(row);
        }
        std::vector<std::size_t> picks;
        const auto d_t = static_cast<std::size_t>(store_.config().d_t);
        if (t->length() >= d_t) {
            picks = resample_indices(t->length(), d_t);
        } else {
            for (std::size_t i = 0; i < t->detections.size(); ++i) picks.push_back(i);
        }
        nlohmann::json boxes = nlohmann::json::array(), crops = nlohmann::json::array();
        for (auto i : picks) {
            const auto& d = t->detections[i];
            nlohmann::json box{{"frame", d.frame},       {"left", d.box.left},     {"top", d.box.top},
                               {"width", d.box.width},   {"height", d.box.height}, {"confidence", d.confidence}};
            if (store_.has_frames() && frame_file(store_.paths().frames(), d.frame)) {
                crops.push_back({{"frame", d.frame}, {"url", frame_url(d.frame)}, {"box", box}});
            }
            boxes.push_back(std::move(box));
        }
        detail["boxes"] = std::move(boxes);
        detail["crops"] = std::move(crops);
        reply(res, detail);
    });

    s.Get(R"(/api/frames/(\d+))", [this](const Request& req, Response& res) {
        const auto frame = static_cast<int>(path_id(req));
        const auto file = frame_file(store_.paths().frames(), frame);
        if (!file) throw HttpError(404, "no image for frame " + std::to_string(frame));
        const auto bytes = io::read_file(*file);
        const auto ext = file->extension().string();
        res.set_content(std::string(bytes.begin(), bytes.end()), ext == ".png" ? "image/png" : "image/jpeg");
    });

    s.Post("/api/annotations", [this](const Request& req, Response& res) {
        const auto body = parse_body(req);
        const auto tracklet_id = field<TrackletId>(body, "tracklet_id");
        const auto identity = field<Identity>(body, "identity");
        std::unique_lock lock(store_mutex_);
        if (!store_.find_tracklet(tracklet_id)) throw HttpError(404, "unknown tracklet " + std::to_string(tracklet_id));
        const Annotation a = store_.annotate(tracklet_id, identity);
        reply(res, {{"tracklet_id", a.tracklet_id}, {"identity", a.identity}, {"round", a.round}}, 201);
    });

    s.Post("/api/train", [this](const Request& req, Response& res) {
        const auto body = parse_body(req);
        const int alpha = field_or<int>(body, "alpha", store_.config().alpha);
        const auto seed = field_or<std::uint64_t>(body, "seed", store_.config().seed);
        if (alpha != 0 && alpha != 1) throw HttpError(422, "alpha must be 0 or 1");

        std::lock_guard jl(jobs_mutex_);
        if (job_active()) throw HttpError(409, "a training job is already running");
        Job job;
        {
            std::unique_lock lock(store_mutex_);
            if (store_.annotations().empty()) throw HttpError(422, "no annotations to train on");
            job.round = store_.begin_round();
        }
        job.id = jobs_.empty() ? 1 : jobs_.back().id + 1;
        job.alpha = alpha;
        job.seed = seed;
        job.epochs = store_.config().training.epochs;
        start_job(job);
        reply(res, {{"job_id", job.id}, {"round", job.round}}, 202);
    });

    s.Get(R"(/api/jobs/(\d+))", [this](const Request& req, Response& res) {
        const auto id = static_cast<int>(path_id(req));
        std::lock_guard jl(jobs_mutex_);
        const Job* job = find_job(id);
        if (!job) throw HttpError(404, "unknown job " + std::to_string(id));
        reply(res, to_json(*job));
    });

    s.Post("/api/associate", [this](const Request& req, Response& res) {
        const auto body = parse_body(req);
        AssociationMethod method;
        try {
            method = association_method_from_string(field<std::string>(body, "method"));
        } catch (const InvalidArgument& e) {
            throw HttpError(422, e.what());
        }
        std::lock_guard jl(jobs_mutex_);
        if (job_active()) throw HttpError(409, "a training job is running");
        std::unique_lock lock(store_mutex_);
        if (store_.state().checkpoint.empty()) throw HttpError(409, "no trained model yet");
        reply(res, to_json(store_.associate(method)), 201);
    });

    s.Get("/api/associations/latest", [this](const Request&, Response& res) {
        std::shared_lock lock(store_mutex_);
        const auto a = store_.latest_association();
        if (!a) throw HttpError(404, "no association yet");
        reply(res, to_json(*a));
    });

    s.Get("/api/metrics", [this](const Request&, Response& res) {
        std::shared_lock lock(store_mutex_);
        if (!store_.ground_truth()) throw HttpError(404, "project has no ground truth");
        const auto a = store_.latest_association();
        if (!a) throw HttpError(404, "no association yet");
        auto report = to_json(store_.metrics());
        report["method"] = a->method;
        report["checkpoint"] = a->checkpoint;
        report["round"] = a->round;
        reply(res, report);
    });
}

}  // namespace playertrack
