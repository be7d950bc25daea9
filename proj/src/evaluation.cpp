#include "prior/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prior {

RewardTable reward_table(const RewardNet& net) { return {net.grid(), net.reward_table()}; }

NegativityResult all_negative_check(const RewardTable& table) {
    if (table.values.empty()) return {};
    const auto negative = std::count_if(table.values.begin(), table.values.end(), [](double r) { return r < 0.0; });
    const double fraction = static_cast<double>(negative) / static_cast<double>(table.values.size());
    return {static_cast<std::size_t>(negative) == table.values.size(), fraction};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal-length samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw std::domain_error("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Fractional (average) ranks, 1-based.
std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) { return pearson(ranks(x), ranks(y)); }

StructureResult structure_check(const RewardTable& table) {
    std::vector<double> scores, closeness;
    for (std::size_t c = 0; c < table.grid.num_cells(); ++c) {
        const auto cell = table.grid.cell(c);
        scores.push_back(table.cell_max(cell));
        closeness.push_back(grid::gt_reward(cell, table.grid));
    }
    try {
        return {spearman(scores, closeness), false};
    } catch (const std::domain_error&) {
        return {0.0, true};
    }
}

double epc_distance(const RewardTable& table, std::size_t episodes, std::size_t length, nn::Rng& rng) {
    if (episodes < 2) throw std::invalid_argument("epc_distance: need at least 2 episodes");
    const auto& cfg = table.grid;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(grid::kNumActions) - 1);
    std::vector<double> learned, truth;
    for (std::size_t e = 0; e < episodes; ++e) {
        auto obs = cfg.start;
        double rl = 0.0, rt = 0.0;
        for (std::size_t t = 0; t < length; ++t) {
            const auto a = grid::action_from_index(pick(rng));
            rl += table.at(obs, a);
            rt += grid::gt_reward(obs, cfg);
            obs = grid::transition(obs, a, cfg);
        }
        learned.push_back(rl);
        truth.push_back(rt);
    }
    const double rho = pearson(learned, truth);
    return std::sqrt(std::max(0.0, (1.0 - rho) / 2.0));
}

GoalReach goal_reach_check(const QTable& qt) {
    const auto& cfg = qt.grid();
    const std::size_t limit = 4 * static_cast<std::size_t>(cfg.n - 1);
    auto obs = cfg.start;
    for (std::size_t t = 0; t <= limit; ++t) {
        if (obs == cfg.goal) return {true, t};
        obs = grid::transition(obs, qt.greedy(obs), cfg);
    }
    return {false, std::nullopt};
}

std::string heatmap_csv(const RewardTable& table) {
    std::string out;
    char buf[64];
    const int n = table.grid.n;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double v = table.cell_max({r, c});
            std::snprintf(buf, sizeof buf, "%.6f", v);
            std::string cell(buf);  // no "-0.000000"
            if (cell == "-0.000000") cell = "0.000000";
            if (c > 0) out += ',';
            out += cell;
        }
        out += '\n';
    }
    return out;
}

void heatmap_export(const RewardTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("heatmap_export: cannot open " + path.string());
    out << heatmap_csv(table);
    if (!out) throw std::runtime_error("heatmap_export: write failed for " + path.string());
}

std::vector<std::vector<double>> parse_heatmap_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json to_json(const RecoveryReport& r) {
    return {{"all_negative", r.all_negative},
            {"negativity_fraction", r.negativity_fraction},
            {"spearman_vs_distance", r.spearman_vs_distance},
            {"spearman_degenerate", r.spearman_degenerate},
            {"epc", r.epc ? nlohmann::json(*r.epc) : nlohmann::json(nullptr)},
            {"goal_reached", r.goal_reached},
            {"steps_to_goal", r.steps_to_goal ? nlohmann::json(*r.steps_to_goal) : nlohmann::json(nullptr)}};
}

RecoveryReport recovery_report_from_json(const nlohmann::json& j) {
    RecoveryReport r;
    r.all_negative = j.at("all_negative");
    r.negativity_fraction = j.at("negativity_fraction");
    r.spearman_vs_distance = j.at("spearman_vs_distance");
    r.spearman_degenerate = j.value("spearman_degenerate", false);
    if (!j.at("epc").is_null()) r.epc = j.at("epc").get<double>();
    r.goal_reached = j.at("goal_reached");
    if (!j.at("steps_to_goal").is_null()) r.steps_to_goal = j.at("steps_to_goal").get<std::size_t>();
    return r;
}

}  // namespace prior
