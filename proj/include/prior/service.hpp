#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "prior/trainer.hpp"

namespace httplib {
class Server;
}

namespace prior::service {

enum class QueryStatus { Pending, Answered, Expired };
std::string to_string(QueryStatus s);

struct PendingQuery {
    std::string id;
    std::size_t session = 0;
    std::size_t index = 0;
    Query query;
    std::int64_t created_at = 0;
    QueryStatus status = QueryStatus::Pending;
};

nlohmann::json to_json(const PendingQuery& q, const grid::GridConfig& cfg);

enum class SubmitResult { Accepted, UnknownQuery, AlreadyAnswered };

// Label source fed by human submissions. The training thread blocks in label() until
// every query of the session has an answer; answers are returned in arrival order.
class HumanLabelChannel final : public LabelProvider {
public:
    explicit HumanLabelChannel(std::string run_id) : run_id_(std::move(run_id)) {}

    LabelSource source() const override { return LabelSource::Human; }
    std::vector<LabelledQuery> label(std::size_t session, const std::vector<Query>& queries,
                                     const grid::GridConfig& cfg) override;

    SubmitResult submit(const std::string& query_id, const Label& label);
    std::vector<PendingQuery> pending() const;
    bool knows(const std::string& query_id) const;
    void cancel();

private:
    std::string run_id_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<PendingQuery> session_;
    std::vector<LabelledQuery> answers_;
    std::map<std::string, QueryStatus> history_;
    bool cancelled_ = false;
};

// One experiment executing on its own thread, observable through immutable snapshots.
class Run {
public:
    Run(std::string id, ExperimentConfig cfg, std::filesystem::path out_dir);
    ~Run();
    Run(const Run&) = delete;
    Run& operator=(const Run&) = delete;

    const std::string& id() const { return id_; }
    const ExperimentConfig& config() const { return cfg_; }
    std::string state() const;
    bool active() const;
    nlohmann::json metrics_json() const;
    std::string heatmap() const;
    std::size_t dataset_size() const;
    std::vector<PendingQuery> pending() const;
    SubmitResult submit(const std::string& query_id, const Label& label);
    void wait();

private:
    void execute();

    std::string id_;
    ExperimentConfig cfg_;
    std::filesystem::path out_dir_;
    std::unique_ptr<HumanLabelChannel> channel_;
    mutable std::mutex mutex_;
    std::string state_ = "created";
    std::string error_;
    std::vector<nlohmann::json> metrics_;
    std::string heatmap_;
    std::size_t dataset_size_ = 0;
    std::thread worker_;
};

// Single-active-run HTTP facade. Bind with PRIOR_HOST / PRIOR_PORT from the CLI.
class Server {
public:
    explicit Server(std::filesystem::path out_dir);
    ~Server();

    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and returns it; follow with listen_after_bind().
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    bool wait_until_ready() const;

    std::shared_ptr<Run> find(const std::string& id) const;

private:
    void routes();

    std::filesystem::path out_dir_;
    std::unique_ptr<httplib::Server> http_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Run>> runs_;
    std::size_t next_id_ = 1;
};

}  // namespace prior::service
