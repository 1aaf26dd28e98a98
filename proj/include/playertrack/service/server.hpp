#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "playertrack/reid/trainer.hpp"
#include "playertrack/service/project.hpp"

namespace httplib {
class Server;
}

namespace playertrack {

enum class JobState { queued, running, done, failed };

std::string to_string(JobState s);
JobState job_state_from_string(const std::string& s);

struct Job {
    int id = 0;
    JobState state = JobState::queued;
    int round = 0;
    int alpha = 0;
    std::uint64_t seed = 0;
    int epochs = 0;
    std::vector<nn::EpochLoss> curve;
    std::string checkpoint_hash;
    std::string error;
};

nlohmann::json to_json(const Job& j);
Job job_from_json(const nlohmann::json& j);

/// HTTP front end of one project; all routes live under /api/. Training runs
/// on a single background thread.
class Server {
public:
    /// Opens the project. Jobs left queued or running by a previous process
    /// are marked failed.
    explicit Server(const std::filesystem::path& project_dir);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Blocks until stop() is called. Returns false if binding fails.
    bool listen(const std::string& host, int port);
    /// Binds to a free port and returns it; serve with listen_after_bind().
    int bind_to_any_port(const std::string& host);
    bool listen_after_bind();
    bool is_running() const;
    void wait_until_ready() const;

    /// Cancels a running job, stops listening and joins the worker.
    void stop();
    /// Blocks until no job is queued or running.
    void wait_for_jobs();

private:
    void routes();
    void start_job(Job job);
    void run_job(int job_id);
    void save_jobs() const;  // caller holds jobs_mutex_
    Job* find_job(int id);
    bool job_active() const;  // caller holds jobs_mutex_

    std::unique_ptr<httplib::Server> http_;
    ProjectStore store_;
    mutable std::shared_mutex store_mutex_;

    mutable std::mutex jobs_mutex_;
    std::condition_variable jobs_cv_;
    std::vector<Job> jobs_;
    std::thread worker_;
    std::atomic<bool> cancel_{false};
};

}  // namespace playertrack
