#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace prior::grid {

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

using Observation = Cell;

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr std::size_t kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Up, Action::Down, Action::Left, Action::Right};

std::string to_string(Action a);
Action action_from_index(int index);

struct GridConfig {
    int n = 8;
    Cell start{0, 0};
    Cell goal{7, 7};

    static GridConfig square(int n);
    // Throws std::invalid_argument when n < 2, start == goal or a corner lies off the grid.
    void validate() const;
    bool contains(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < n && c.col < n; }
    std::size_t num_cells() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * n + c.col); }
    Cell cell(std::size_t index) const { return {static_cast<int>(index) / n, static_cast<int>(index) % n}; }
};

// Flag order is part of the serialization contract.
inline constexpr std::size_t kNumSymbols = 8;
inline constexpr std::array<const char*, kNumSymbols> kSymbolNames{
    "at_top_edge",           "at_left_edge",          "at_right_edge",          "at_bottom_edge",
    "at_top_left_corner",    "at_top_right_corner",   "at_bottom_left_corner",  "at_bottom_right_corner"};

using SymbolVector = std::array<bool, kNumSymbols>;

Observation transition(Observation obs, Action a, const GridConfig& cfg);
SymbolVector symbolize(Observation obs, const GridConfig& cfg);
int manhattan_to_goal(Observation obs, const GridConfig& cfg);
double gt_reward(Observation obs, const GridConfig& cfg);

// Network encodings: row one-hot ++ col one-hot (2n), action one-hot (4), symbols as 0/1 (8).
std::vector<double> encode_observation(Observation obs, const GridConfig& cfg);
std::vector<double> encode_action(Action a);
std::vector<double> encode_symbols(const SymbolVector& s);

}  // namespace prior::grid
