#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prior/q_learning.hpp"
#include "prior/reward_model.hpp"

namespace prior {

RewardTable reward_table(const RewardNet& net);

struct NegativityResult {
    bool all_negative = false;
    double fraction = 0.0;
};
NegativityResult all_negative_check(const RewardTable& table);

struct StructureResult {
    double spearman = 0.0;
    bool degenerate = false;
};
// Spearman rank correlation between per-cell max-over-action reward and -distance to goal.
StructureResult structure_check(const RewardTable& table);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Pearson distance sqrt((1 - rho) / 2) between learned and ground-truth returns of random-policy
// episodes from the start cell. Throws std::domain_error when either return vector is constant.
double epc_distance(const RewardTable& table, std::size_t episodes, std::size_t length, nn::Rng& rng);

struct GoalReach {
    bool reached = false;
    std::optional<std::size_t> steps;
};
// Greedy rollout from the start, allowed 2 * 2(n - 1) moves.
GoalReach goal_reach_check(const QTable& qt);

std::string heatmap_csv(const RewardTable& table);
void heatmap_export(const RewardTable& table, const std::filesystem::path& path);
std::vector<std::vector<double>> parse_heatmap_csv(const std::string& text);

struct RecoveryReport {
    bool all_negative = false;
    double negativity_fraction = 0.0;
    double spearman_vs_distance = 0.0;
    bool spearman_degenerate = false;
    std::optional<double> epc;
    bool goal_reached = false;
    std::optional<std::size_t> steps_to_goal;
};

nlohmann::json to_json(const RecoveryReport& r);
RecoveryReport recovery_report_from_json(const nlohmann::json& j);

}  // namespace prior
