#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prior/service.hpp"
#include "prior/trainer.hpp"

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(in);
}

int run_command(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                const std::optional<std::string>& variant, const std::optional<std::size_t>& queries,
                const std::optional<std::size_t>& query_len, bool forced_negative, const std::string& out_dir) {
    auto doc = config_path.empty() ? nlohmann::json::object() : read_json(config_path);
    if (seed) doc["seed"] = *seed;
    if (variant) {
        // Switching variant resets the prior coefficients to that variant's defaults.
        doc["variant"] = *variant;
        doc.erase("lambda_p");
        doc.erase("lambda_r0");
        doc.erase("lambda_r1");
    }
    if (queries) doc["query_budget"] = *queries;
    if (query_len) doc["query_length"] = *query_len;
    if (forced_negative) doc["forced_negative"] = true;
    const auto cfg = prior::config_from_json(doc);
    if (cfg.teacher == prior::LabelSource::Human) {
        std::cerr << "human-teacher runs need a label source; start them through `prior serve`\n";
        return 2;
    }
    const auto artifacts = prior::run_experiment(cfg);
    prior::write_run_outputs(artifacts, out_dir);
    std::cout << prior::to_json(artifacts.report).dump() << "\n";
    return 0;
}

int compare_command(const std::vector<std::string>& dirs) {
    struct Row {
        std::size_t runs = 0, all_negative = 0, goal = 0, epc_count = 0;
        double negativity = 0, spearman = 0, epc = 0;
    };
    std::map<std::string, Row> rows;
    for (const auto& d : dirs) {
        const auto report = read_json(std::filesystem::path(d) / "report.json");
        const auto cfg = read_json(std::filesystem::path(d) / "config.json");
        std::ostringstream key;
        key << report.at("variant").get<std::string>() << " | " << cfg.at("query_budget").get<std::size_t>() << " | "
            << cfg.at("query_length").get<std::size_t>() << " | " << (cfg.at("forced_negative").get<bool>() ? "yes" : "no");
        auto& r = rows[key.str()];
        const auto rep = prior::recovery_report_from_json(report);
        ++r.runs;
        r.all_negative += rep.all_negative;
        r.goal += rep.goal_reached;
        r.negativity += rep.negativity_fraction;
        r.spearman += rep.spearman_vs_distance;
        if (rep.epc) {
            r.epc += *rep.epc;
            ++r.epc_count;
        }
    }
    std::cout << "| variant | queries | length | forced negative | runs | all negative | mean negativity | "
                 "mean spearman | mean EPC | goal reached |\n";
    std::cout << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& [key, r] : rows) {
        const double n = static_cast<double>(r.runs);
        std::ostringstream line;
        line.setf(std::ios::fixed);
        line.precision(3);
        line << "| " << key << " | " << r.runs << " | " << r.all_negative << "/" << r.runs << " | "
             << r.negativity / n << " | " << r.spearman / n << " | ";
        if (r.epc_count > 0) line << r.epc / static_cast<double>(r.epc_count);
        else line << "n/a";
        line << " | " << r.goal << "/" << r.runs << " |";
        std::cout << line.str() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference-based reward learning with hindsight priors on a gridworld"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run one experiment and write its outputs");
    std::string config_path, out_dir = "run_out";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<std::size_t> queries, query_len;
    bool forced_negative = false;
    run->add_option("--config", config_path, "Experiment config (JSON)");
    run->add_option("--seed", seed, "Override the seed");
    run->add_option("--variant", variant, "pebble | oprior | prior")
        ->check(CLI::IsMember({"pebble", "oprior", "prior"}));
    run->add_option("--queries", queries, "Total query budget");
    run->add_option("--query-len", query_len, "Query length in steps");
    run->add_flag("--forced-negative", forced_negative, "Constrain rewards to [-1, 0]");
    run->add_option("--out", out_dir, "Output directory");

    auto* compare = app.add_subcommand("compare", "Markdown summary table over run directories");
    std::vector<std::string> dirs;
    compare->add_option("dirs", dirs, "Run output directories")->required();

    auto* serve = app.add_subcommand("serve", "Start the HTTP service (PRIOR_HOST / PRIOR_PORT)");
    std::string serve_out = "runs";
    serve->add_option("--out", serve_out, "Directory for run outputs");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return run_command(config_path, seed, variant, queries, query_len, forced_negative, out_dir);
        if (*compare) return compare_command(dirs);
        if (*serve) {
            const char* host = std::getenv("PRIOR_HOST");
            const char* port = std::getenv("PRIOR_PORT");
            prior::service::Server server(serve_out);
            const std::string bind = host ? host : "127.0.0.1";
            const int p = port ? std::atoi(port) : 8080;
            std::cout << "listening on " << bind << ":" << p << std::endl;
            return server.listen(bind, p) ? 0 : 1;
        }
    } catch (const prior::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
