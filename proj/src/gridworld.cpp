#include "prior/gridworld.hpp"

#include <cstdlib>
#include <stdexcept>

namespace prior::grid {

std::string to_string(Action a) {
    switch (a) {
        case Action::Up: return "up";
        case Action::Down: return "down";
        case Action::Left: return "left";
        case Action::Right: return "right";
    }
    return "?";
}

Action action_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kNumActions))
        throw std::invalid_argument("action index out of range: " + std::to_string(index));
    return static_cast<Action>(index);
}

GridConfig GridConfig::square(int n) { return GridConfig{n, {0, 0}, {n - 1, n - 1}}; }

void GridConfig::validate() const {
    if (n < 2) throw std::invalid_argument("grid: n must be >= 2, got " + std::to_string(n));
    if (!contains(start) || !contains(goal)) throw std::invalid_argument("grid: start/goal outside the grid");
    if (start == goal) throw std::invalid_argument("grid: start and goal coincide");
}

Observation transition(Observation obs, Action a, const GridConfig& cfg) {
    Observation next = obs;
    switch (a) {
        case Action::Up: next.row -= 1; break;
        case Action::Down: next.row += 1; break;
        case Action::Left: next.col -= 1; break;
        case Action::Right: next.col += 1; break;
    }
    return cfg.contains(next) ? next : obs;
}

SymbolVector symbolize(Observation obs, const GridConfig& cfg) {
    const bool top = obs.row == 0;
    const bool left = obs.col == 0;
    const bool right = obs.col == cfg.n - 1;
    const bool bottom = obs.row == cfg.n - 1;
    return {top, left, right, bottom, top && left, top && right, bottom && left, bottom && right};
}

int manhattan_to_goal(Observation obs, const GridConfig& cfg) {
    return std::abs(obs.row - cfg.goal.row) + std::abs(obs.col - cfg.goal.col);
}

double gt_reward(Observation obs, const GridConfig& cfg) { return -static_cast<double>(manhattan_to_goal(obs, cfg)); }

std::vector<double> encode_observation(Observation obs, const GridConfig& cfg) {
    std::vector<double> out(2 * static_cast<std::size_t>(cfg.n), 0.0);
    out[static_cast<std::size_t>(obs.row)] = 1.0;
    out[static_cast<std::size_t>(cfg.n + obs.col)] = 1.0;
    return out;
}

std::vector<double> encode_action(Action a) {
    std::vector<double> out(kNumActions, 0.0);
    out[static_cast<std::size_t>(a)] = 1.0;
    return out;
}

std::vector<double> encode_symbols(const SymbolVector& s) {
    std::vector<double> out(kNumSymbols);
    for (std::size_t i = 0; i < kNumSymbols; ++i) out[i] = s[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace prior::grid
