#include "prior/q_learning.hpp"

#include <algorithm>
#include <cmath>

namespace prior {

double RewardTable::cell_max(grid::Observation obs) const {
    const auto base = values.begin() + static_cast<std::ptrdiff_t>(grid.index(obs) * grid::kNumActions);
    return *std::max_element(base, base + static_cast<std::ptrdiff_t>(grid::kNumActions));
}

RewardTable gt_reward_table(const grid::GridConfig& cfg) {
    RewardTable table{cfg, {}};
    for (std::size_t c = 0; c < cfg.num_cells(); ++c)
        for (std::size_t a = 0; a < grid::kNumActions; ++a) table.values.push_back(grid::gt_reward(cfg.cell(c), cfg));
    return table;
}

QTable::QTable(grid::GridConfig grid, QConfig config)
    : grid_(grid), config_(config), values_(grid.num_cells() * grid::kNumActions, 0.0) {}

double QTable::q(grid::Observation obs, grid::Action a) const {
    return values_[grid_.index(obs) * grid::kNumActions + static_cast<std::size_t>(a)];
}

void QTable::update(grid::Observation obs, grid::Action a, double reward, grid::Observation next) {
    double best = 0.0;
    if (!(config_.absorbing_goal && next == grid_.goal)) {
        best = q(next, grid::Action::Up);
        for (auto b : grid::kAllActions) best = std::max(best, q(next, b));
    }
    double& v = values_[grid_.index(obs) * grid::kNumActions + static_cast<std::size_t>(a)];
    v += config_.alpha * (reward + config_.gamma * best - v);
}

grid::Action QTable::greedy(grid::Observation obs) const {
    grid::Action best = grid::Action::Up;
    for (auto a : grid::kAllActions)
        if (q(obs, a) > q(obs, best)) best = a;
    return best;
}

grid::Action QTable::epsilon_greedy(grid::Observation obs, nn::Rng& rng) const {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < config_.epsilon) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(grid::kNumActions) - 1);
        return grid::action_from_index(pick(rng));
    }
    return greedy(obs);
}

std::vector<Trajectory> QTable::run_episodes(const RewardTable& rewards, std::size_t episodes, std::size_t length,
                                             nn::Rng& rng) {
    std::vector<Trajectory> out;
    out.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        Trajectory tau;
        auto obs = grid_.start;
        for (std::size_t t = 0; t < length; ++t) {
            const auto a = epsilon_greedy(obs, rng);
            const auto next = grid::transition(obs, a, grid_);
            update(obs, a, rewards.at(obs, a), next);
            tau.steps.push_back({obs, a});
            obs = next;
        }
        out.push_back(std::move(tau));
    }
    return out;
}

std::size_t QTable::sweep_to_convergence(const RewardTable& rewards, double tol, std::size_t max_sweeps) {
    for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
            const auto obs = grid_.cell(c);
            for (auto a : grid::kAllActions) {
                const double before = q(obs, a);
                update(obs, a, rewards.at(obs, a), grid::transition(obs, a, grid_));
                change = std::max(change, std::abs(q(obs, a) - before));
            }
        }
        if (change < tol) return sweep;
    }
    return max_sweeps;
}

}  // namespace prior
