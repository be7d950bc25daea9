#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "prior/evaluation.hpp"
#include "prior/service.hpp"
#include "support.hpp"

using namespace prior;
using namespace prior::service;
using namespace std::chrono_literals;

namespace {

nlohmann::json tiny_config(const std::string& teacher) {
    return {{"grid_n", 5},        {"query_budget", 8},     {"queries_per_session", 8}, {"query_length", 4},
            {"reward_hidden", 16}, {"reward_epochs", 10},  {"recon_dim", 8},           {"recon_epochs", 2},
            {"recon_windows", 16}, {"proxy_dim", 8},       {"proxy_epochs", 2},        {"rollout_episodes", 20},
            {"epc_episodes", 30},  {"teacher", teacher},   {"seed", 3}};
}

template <typename Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = 60s) {
    const auto end = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < end) {
        if (pred()) return true;
        std::this_thread::sleep_for(10ms);
    }
    return pred();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Harness {
    std::filesystem::path dir;
    Server server;
    int port = 0;
    std::thread thread;
    httplib::Client client;

    explicit Harness(const std::string& name)
        : dir(std::filesystem::temp_directory_path() / name), server(dir), port(bind()), client("127.0.0.1", port) {
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Harness() {
        server.stop();
        thread.join();
        std::filesystem::remove_all(dir);
    }
    int bind() {
        std::filesystem::remove_all(dir);
        return server.bind_any_port("127.0.0.1");
    }
    nlohmann::json get_json(const std::string& path) {
        auto res = client.Get(path);
        REQUIRE(res);
        return nlohmann::json::parse(res->body);
    }
    std::string state(const std::string& id) { return get_json("/runs/" + id)["state"]; }
    httplib::Result label(const std::string& id, const nlohmann::json& body) {
        return client.Post("/runs/" + id + "/labels", body.dump(), "application/json");
    }
};

}  // namespace

TEST_SUITE("service") {

TEST_CASE("label channel state machine") {
    HumanLabelChannel channel("r");
    const auto cfg = grid::GridConfig::square(5);
    std::vector<Query> queries(3);
    for (std::size_t i = 0; i < 3; ++i) {
        queries[i].tau0 = testing::parked({0, static_cast<int>(i)}, 3);
        queries[i].tau1 = testing::parked({4, static_cast<int>(i)}, 3);
    }
    std::vector<LabelledQuery> answers;
    std::thread trainer([&] { answers = channel.label(0, queries, cfg); });
    REQUIRE(eventually([&] { return channel.pending().size() == 3; }));

    const auto pending = channel.pending();
    std::set<std::string> ids;
    for (const auto& p : pending) ids.insert(p.id);
    CHECK(ids.size() == 3);

    CHECK(channel.submit(pending[2].id, Label::first()) == SubmitResult::Accepted);
    CHECK(channel.submit(pending[2].id, Label::second()) == SubmitResult::AlreadyAnswered);
    CHECK(channel.submit("nope", Label::first()) == SubmitResult::UnknownQuery);
    CHECK(channel.pending().size() == 2);
    for (const auto& p : channel.pending()) CHECK(p.id != pending[2].id);
    CHECK(channel.submit(pending[0].id, Label::tie()) == SubmitResult::Accepted);
    CHECK(channel.submit(pending[1].id, Label::second()) == SubmitResult::Accepted);
    trainer.join();

    REQUIRE(answers.size() == 3);
    CHECK(answers[0].query_index == 2);
    CHECK(answers[0].label == Label::first());
    CHECK(answers[1].query_index == 0);
    CHECK(answers[1].label.is_tie());
    CHECK(channel.pending().empty());
    // answered ids stay known and immutable after the session closes
    CHECK(channel.knows(pending[0].id));
    CHECK(channel.submit(pending[0].id, Label::first()) == SubmitResult::AlreadyAnswered);
}

TEST_CASE("cancel releases a blocked session") {
    HumanLabelChannel channel("r");
    std::vector<Query> queries(1);
    queries[0].tau0 = queries[0].tau1 = testing::parked({1, 1}, 2);
    bool threw = false;
    std::thread trainer([&] {
        try {
            channel.label(0, queries, grid::GridConfig::square(3));
        } catch (const std::runtime_error&) {
            threw = true;
        }
    });
    REQUIRE(eventually([&] { return channel.pending().size() == 1; }));
    channel.cancel();
    trainer.join();
    CHECK(threw);
}

TEST_CASE("http: synthetic run lifecycle") {
    Harness h("prior_service_synthetic");

    auto bad = h.client.Post("/runs", nlohmann::json{{"lambda_p", -1}}.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    const auto fields = nlohmann::json::parse(bad->body)["fields"];
    REQUIRE(fields.size() >= 1);
    CHECK(fields[0]["field"] == "lambda_p");

    auto garbage = h.client.Post("/runs", "{not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);

    auto created = h.client.Post("/runs", tiny_config("synthetic").dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = nlohmann::json::parse(created->body)["id"];
    CHECK(h.get_json("/runs/" + id + "/pending") == nlohmann::json::array());

    REQUIRE(eventually([&] { return h.state(id) == "finished"; }));
    const auto metrics = h.get_json("/runs/" + id + "/metrics");
    CHECK(metrics["sessions_completed"] == 1);
    CHECK(metrics["dataset_size"] == 8);

    auto heat = h.client.Get("/runs/" + id + "/heatmap");
    REQUIRE(heat);
    CHECK(heat->body == slurp(h.dir / id / "heatmap_final.csv"));

    auto missing = h.client.Get("/runs/run-99/metrics");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto unknown_label = h.label(id, {{"query_id", "x"}, {"choice", 0}});
    REQUIRE(unknown_label);
    CHECK(unknown_label->status == 404);

    auto options = h.client.Options("/runs");
    REQUIRE(options);
    CHECK(options->status == 204);
    CHECK(options->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("http: human-teacher round trip") {
    Harness h("prior_service_human");
    auto created = h.client.Post("/runs", tiny_config("human").dump(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const std::string id = nlohmann::json::parse(created->body)["id"];

    REQUIRE(eventually([&] { return h.state(id) == "awaiting_labels"; }));
    auto second = h.client.Post("/runs", tiny_config("synthetic").dump(), "application/json");
    REQUIRE(second);
    CHECK(second->status == 409);

    // before the first update: no sessions and the initialised net's heatmap
    const auto before = h.get_json("/runs/" + id + "/metrics");
    CHECK(before["sessions_completed"] == 0);
    auto rng = nn::make_rng(3, "reward_init");
    RewardNet fresh(grid::GridConfig::square(5), {16, 2, RewardMode::Standard}, rng);
    CHECK(h.client.Get("/runs/" + id + "/heatmap")->body == heatmap_csv(reward_table(fresh)));

    auto pending = h.get_json("/runs/" + id + "/pending");
    REQUIRE(pending.size() == 8);
    CHECK(pending[0]["tau0"].size() == 4);
    CHECK(pending[0]["tau0"][0]["symbols"].size() == grid::kNumSymbols);

    // answer in reverse order; arrival order must be kept
    std::vector<nlohmann::json> clicked;
    for (int i = 7; i >= 5; --i) {
        auto res = h.label(id, {{"query_id", pending[i]["id"]}, {"choice", i % 2}});
        REQUIRE(res);
        CHECK(res->status == 200);
        clicked.push_back(pending[i]);
    }
    CHECK(h.get_json("/runs/" + id + "/pending").size() == 5);

    auto dup = h.label(id, {{"query_id", pending[7]["id"]}, {"choice", 0}});
    REQUIRE(dup);
    CHECK(dup->status == 409);
    auto bad_choice = h.label(id, {{"query_id", pending[0]["id"]}, {"choice", 2}});
    REQUIRE(bad_choice);
    CHECK(bad_choice->status == 400);
    CHECK(h.get_json("/runs/" + id + "/metrics")["dataset_size"] == 3);

    for (int i = 4; i >= 0; --i) {
        auto res = h.label(id, {{"query_id", pending[i]["id"]}, {"choice", i == 0 ? nlohmann::json("tie") : nlohmann::json(1)}});
        REQUIRE(res);
        CHECK(res->status == 200);
        clicked.push_back(pending[i]);
    }
    CHECK(eventually([&] { return h.state(id) != "awaiting_labels"; }));
    REQUIRE(eventually([&] { return h.state(id) == "finished"; }));

    std::ifstream prefs(h.dir / id / "preferences.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(prefs, line)) {
        const auto entry = nlohmann::json::parse(line);
        CHECK(entry["source"] == "human");
        REQUIRE(n < clicked.size());
        CHECK(entry["tau0"] == clicked[n]["tau0"]);
        ++n;
    }
    CHECK(n == 8);
    CHECK(h.client.Get("/runs/" + id + "/heatmap")->body == slurp(h.dir / id / "heatmap_final.csv"));
}

}
