#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "prior/gridworld.hpp"
#include "prior/nn.hpp"

namespace prior {

struct Step {
    grid::Observation obs;
    grid::Action action = grid::Action::Up;
    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::vector<Step> steps;

    std::size_t size() const { return steps.size(); }
    bool empty() const { return steps.empty(); }
    std::vector<grid::SymbolVector> symbols(const grid::GridConfig& cfg) const;
    Trajectory window(std::size_t offset, std::size_t length) const;
    bool operator==(const Trajectory&) const = default;
};

// True when each stored action moves obs[i] to obs[i+1].
bool is_consistent(const Trajectory& tau, const grid::GridConfig& cfg);

struct Label {
    double y0 = 0.5;
    double y1 = 0.5;

    static Label first() { return {1.0, 0.0}; }
    static Label second() { return {0.0, 1.0}; }
    static Label tie() { return {0.5, 0.5}; }
    bool is_tie() const { return y0 == 0.5 && y1 == 0.5; }
    // Index of the preferred trajectory; undefined for ties.
    int preferred() const { return y0 > y1 ? 0 : 1; }
    bool operator==(const Label&) const = default;
};

struct PreferencePair {
    Trajectory tau0;
    Trajectory tau1;
    Label y;
    bool tie = true;
};

enum class LabelSource { Synthetic, Human };
std::string to_string(LabelSource s);
LabelSource label_source_from_string(const std::string& s);

double mean_goal_distance(const Trajectory& tau, const grid::GridConfig& cfg);
PreferencePair oracle_label(const Trajectory& tau0, const Trajectory& tau1, const grid::GridConfig& cfg);

struct Query {
    Trajectory tau0;
    Trajectory tau1;
    std::size_t source0 = 0;
    std::size_t source1 = 0;
    std::size_t offset0 = 0;
    std::size_t offset1 = 0;
};

// Uniformly picks two distinct buffer trajectories and a contiguous window of `length` from each.
// A single-trajectory buffer yields two windows of that trajectory, non-overlapping when it is long enough.
std::vector<Query> sample_queries(const std::vector<Trajectory>& buffer, std::size_t count, std::size_t length,
                                  nn::Rng& rng);

struct DatasetEntry {
    PreferencePair pair;
    LabelSource source = LabelSource::Synthetic;
    std::int64_t timestamp = 0;  // ms since epoch
};

// Append-only. Appends and snapshots are serialized by an internal lock.
class PreferenceDataset {
public:
    PreferenceDataset() = default;
    PreferenceDataset(const PreferenceDataset& other);
    PreferenceDataset& operator=(const PreferenceDataset& other);

    void append(PreferencePair pair, LabelSource source, std::int64_t timestamp);
    std::vector<DatasetEntry> snapshot() const;
    std::size_t size() const;

    std::string to_jsonl(const grid::GridConfig& cfg) const;
    static PreferenceDataset from_jsonl(const std::string& text);

private:
    mutable std::mutex mutex_;
    std::vector<DatasetEntry> entries_;
};

nlohmann::json trajectory_json(const Trajectory& tau, const grid::GridConfig& cfg);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json entry_json(const DatasetEntry& e, const grid::GridConfig& cfg);

std::int64_t now_millis();

}  // namespace prior
