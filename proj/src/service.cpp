#include "prior/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "httplib.h"

namespace prior::service {

std::string to_string(QueryStatus s) {
    switch (s) {
        case QueryStatus::Pending: return "pending";
        case QueryStatus::Answered: return "answered";
        case QueryStatus::Expired: return "expired";
    }
    return "?";
}

nlohmann::json to_json(const PendingQuery& q, const grid::GridConfig& cfg) {
    return {{"id", q.id},
            {"session", q.session},
            {"tau0", trajectory_json(q.query.tau0, cfg)},
            {"tau1", trajectory_json(q.query.tau1, cfg)},
            {"created_at", q.created_at},
            {"status", to_string(q.status)}};
}

std::vector<LabelledQuery> HumanLabelChannel::label(std::size_t session, const std::vector<Query>& queries,
                                                    const grid::GridConfig&) {
    std::unique_lock lock(mutex_);
    session_.clear();
    answers_.clear();
    const auto created = now_millis();
    for (std::size_t i = 0; i < queries.size(); ++i) {
        PendingQuery p{run_id_ + "-s" + std::to_string(session + 1) + "-q" + std::to_string(i + 1), session + 1, i,
                       queries[i], created, QueryStatus::Pending};
        history_[p.id] = QueryStatus::Pending;
        session_.push_back(std::move(p));
    }
    cv_.wait(lock, [&] { return cancelled_ || answers_.size() == session_.size(); });
    if (cancelled_) throw std::runtime_error("labelling cancelled");
    auto out = std::move(answers_);
    answers_.clear();
    session_.clear();
    return out;
}

SubmitResult HumanLabelChannel::submit(const std::string& query_id, const Label& label) {
    std::lock_guard lock(mutex_);
    auto known = history_.find(query_id);
    if (known == history_.end()) return SubmitResult::UnknownQuery;
    if (known->second != QueryStatus::Pending) return SubmitResult::AlreadyAnswered;
    auto it = std::find_if(session_.begin(), session_.end(), [&](const auto& p) { return p.id == query_id; });
    if (it == session_.end()) return SubmitResult::UnknownQuery;
    it->status = QueryStatus::Answered;
    known->second = QueryStatus::Answered;
    answers_.push_back({it->index, label, now_millis()});
    if (answers_.size() == session_.size()) cv_.notify_all();
    return SubmitResult::Accepted;
}

std::vector<PendingQuery> HumanLabelChannel::pending() const {
    std::lock_guard lock(mutex_);
    std::vector<PendingQuery> out;
    for (const auto& p : session_)
        if (p.status == QueryStatus::Pending) out.push_back(p);
    return out;
}

bool HumanLabelChannel::knows(const std::string& query_id) const {
    std::lock_guard lock(mutex_);
    return history_.count(query_id) > 0;
}

void HumanLabelChannel::cancel() {
    std::lock_guard lock(mutex_);
    cancelled_ = true;
    cv_.notify_all();
}

Run::Run(std::string id, ExperimentConfig cfg, std::filesystem::path out_dir)
    : id_(std::move(id)), cfg_(std::move(cfg)), out_dir_(std::move(out_dir)) {
    if (cfg_.teacher == LabelSource::Human) channel_ = std::make_unique<HumanLabelChannel>(id_);
    worker_ = std::thread([this] { execute(); });
}

Run::~Run() {
    if (channel_) channel_->cancel();
    if (worker_.joinable()) worker_.join();
}

void Run::execute() {
    RunHooks hooks;
    hooks.on_phase = [this](RunPhase p) {
        std::lock_guard lock(mutex_);
        state_ = to_string(p);
    };
    hooks.on_metrics = [this](const nlohmann::json& line) {
        std::lock_guard lock(mutex_);
        metrics_.push_back(line);
        if (line.contains("dataset_size")) dataset_size_ = line.at("dataset_size").get<std::size_t>();
    };
    hooks.on_reward_update = [this](const RewardNet& net) {
        auto csv = heatmap_csv(reward_table(net));
        std::lock_guard lock(mutex_);
        heatmap_ = std::move(csv);
    };
    try {
        const auto artifacts = run_experiment(cfg_, channel_.get(), hooks);
        write_run_outputs(artifacts, out_dir_ / id_);
        std::lock_guard lock(mutex_);
        state_ = to_string(RunPhase::Finished);
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        state_ = "failed";
        error_ = e.what();
    }
}

std::string Run::state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

bool Run::active() const {
    const auto s = state();
    return s != "finished" && s != "failed";
}

nlohmann::json Run::metrics_json() const {
    std::lock_guard lock(mutex_);
    std::size_t sessions = 0;
    for (const auto& m : metrics_)
        if (m.contains("session")) ++sessions;
    nlohmann::json out{{"id", id_},
                       {"state", state_},
                       {"sessions_completed", sessions},
                       {"dataset_size", dataset_size_},
                       {"metrics", metrics_}};
    if (!error_.empty()) out["error"] = error_;
    return out;
}

std::string Run::heatmap() const {
    std::lock_guard lock(mutex_);
    return heatmap_;
}

std::size_t Run::dataset_size() const {
    std::lock_guard lock(mutex_);
    return dataset_size_;
}

std::vector<PendingQuery> Run::pending() const { return channel_ ? channel_->pending() : std::vector<PendingQuery>{}; }

SubmitResult Run::submit(const std::string& query_id, const Label& label) {
    if (!channel_) return SubmitResult::UnknownQuery;
    const auto result = channel_->submit(query_id, label);
    if (result == SubmitResult::Accepted) {
        std::lock_guard lock(mutex_);
        ++dataset_size_;
    }
    return result;
}

void Run::wait() {
    if (worker_.joinable()) worker_.join();
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

}  // namespace

Server::Server(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)), http_(std::make_unique<httplib::Server>()) {
    routes();
}

Server::~Server() {
    stop();
    std::lock_guard lock(mutex_);
    runs_.clear();
}

std::shared_ptr<Run> Server::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(id);
    return it == runs_.end() ? nullptr : it->second;
}

void Server::routes() {
    const char* origin = std::getenv("PRIOR_CORS_ORIGIN");
    http_->set_default_headers({{"Access-Control-Allow-Origin", origin ? origin : "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    http_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http_->Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
        ExperimentConfig cfg;
        try {
            cfg = config_from_json(nlohmann::json::parse(req.body));
        } catch (const ConfigError& e) {
            nlohmann::json errors = nlohmann::json::array();
            for (const auto& f : e.errors()) errors.push_back({{"field", f.field}, {"message", f.message}});
            return send_json(res, 400, {{"error", "invalid config"}, {"fields", errors}});
        } catch (const nlohmann::json::exception& e) {
            return send_error(res, 400, std::string("malformed JSON: ") + e.what());
        }
        std::lock_guard lock(mutex_);
        for (const auto& [id, run] : runs_)
            if (run->active()) return send_error(res, 409, "run " + id + " is still active");
        const std::string id = "run-" + std::to_string(next_id_++);
        runs_[id] = std::make_shared<Run>(id, cfg, out_dir_);
        send_json(res, 201, {{"id", id}});
    });

    http_->Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto run = find(req.matches[1]);
        if (!run) return send_error(res, 404, "unknown run");
        send_json(res, 200, {{"id", run->id()}, {"state", run->state()}, {"config", to_json(run->config())}});
    });

    http_->Get(R"(/runs/([^/]+)/pending)", [this](const httplib::Request& req, httplib::Response& res) {
        auto run = find(req.matches[1]);
        if (!run) return send_error(res, 404, "unknown run");
        nlohmann::json out = nlohmann::json::array();
        for (const auto& p : run->pending()) out.push_back(to_json(p, run->config().grid()));
        send_json(res, 200, out);
    });

    http_->Post(R"(/runs/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
        auto run = find(req.matches[1]);
        if (!run) return send_error(res, 404, "unknown run");
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            return send_error(res, 400, "malformed JSON");
        }
        if (!body.contains("query_id") || !body["query_id"].is_string() || !body.contains("choice"))
            return send_error(res, 400, "expected {query_id, choice}");
        const auto& choice = body["choice"];
        Label label;
        if (choice == 0 || choice == "0") label = Label::first();
        else if (choice == 1 || choice == "1") label = Label::second();
        else if (choice == "tie") label = Label::tie();
        else return send_error(res, 400, "choice must be 0, 1 or \"tie\"");
        switch (run->submit(body["query_id"].get<std::string>(), label)) {
            case SubmitResult::Accepted:
                return send_json(res, 200, {{"ok", true}, {"dataset_size", run->dataset_size()}});
            case SubmitResult::UnknownQuery: return send_error(res, 404, "unknown query");
            case SubmitResult::AlreadyAnswered: return send_error(res, 409, "query already answered");
        }
    });

    http_->Get(R"(/runs/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
        auto run = find(req.matches[1]);
        if (!run) return send_error(res, 404, "unknown run");
        send_json(res, 200, run->metrics_json());
    });

    http_->Get(R"(/runs/([^/]+)/heatmap)", [this](const httplib::Request& req, httplib::Response& res) {
        auto run = find(req.matches[1]);
        if (!run) return send_error(res, 404, "unknown run");
        res.set_content(run->heatmap(), "text/csv");
    });
}

bool Server::listen(const std::string& host, int port) { return http_->listen(host, port); }

int Server::bind_any_port(const std::string& host) { return http_->bind_to_any_port(host); }

bool Server::listen_after_bind() { return http_->listen_after_bind(); }

void Server::stop() { http_->stop(); }

bool Server::wait_until_ready() const {
    http_->wait_until_ready();
    return http_->is_running();
}

}  // namespace prior::service
