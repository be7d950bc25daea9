#pragma once

#include <optional>
#include <vector>

#include "prior/gridworld.hpp"
#include "prior/nn.hpp"
#include "prior/teacher.hpp"

namespace prior {

// Reward per (cell, action), indexed cell * 4 + action.
struct RewardTable {
    grid::GridConfig grid;
    std::vector<double> values;

    double at(grid::Observation obs, grid::Action a) const {
        return values[grid.index(obs) * grid::kNumActions + static_cast<std::size_t>(a)];
    }
    // Best reward over the four actions in a cell.
    double cell_max(grid::Observation obs) const;
};

RewardTable gt_reward_table(const grid::GridConfig& cfg);

struct QConfig {
    double epsilon = 0.5;
    double alpha = 0.1;
    double gamma = 0.99;
    // Entering the goal ends the return: no bootstrapping past it.
    bool absorbing_goal = true;
};

class QTable {
public:
    QTable(grid::GridConfig grid, QConfig config);

    const grid::GridConfig& grid() const { return grid_; }
    const QConfig& config() const { return config_; }
    double q(grid::Observation obs, grid::Action a) const;
    const std::vector<double>& values() const { return values_; }

    // One-step Q-learning: Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)),
    // with the bootstrap term dropped when s' is an absorbing goal.
    void update(grid::Observation obs, grid::Action a, double reward, grid::Observation next);
    // Lowest action index wins ties.
    grid::Action greedy(grid::Observation obs) const;
    grid::Action epsilon_greedy(grid::Observation obs, nn::Rng& rng) const;

    // Runs epsilon-greedy episodes from the start cell, learning from the table; returns the trajectories.
    std::vector<Trajectory> run_episodes(const RewardTable& rewards, std::size_t episodes, std::size_t length,
                                         nn::Rng& rng);
    // Sweeps the update over every (cell, action) until the largest change falls below tol.
    std::size_t sweep_to_convergence(const RewardTable& rewards, double tol = 1e-7, std::size_t max_sweeps = 200000);

private:
    grid::GridConfig grid_;
    QConfig config_;
    std::vector<double> values_;
};

}  // namespace prior
