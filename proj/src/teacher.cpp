#include "prior/teacher.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

namespace prior {

std::vector<grid::SymbolVector> Trajectory::symbols(const grid::GridConfig& cfg) const {
    std::vector<grid::SymbolVector> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(grid::symbolize(s.obs, cfg));
    return out;
}

Trajectory Trajectory::window(std::size_t offset, std::size_t length) const {
    if (offset + length > steps.size())
        throw std::out_of_range("trajectory window [" + std::to_string(offset) + ", " +
                                std::to_string(offset + length) + ") exceeds length " + std::to_string(steps.size()));
    Trajectory out;
    out.steps.assign(steps.begin() + static_cast<std::ptrdiff_t>(offset),
                     steps.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return out;
}

bool is_consistent(const Trajectory& tau, const grid::GridConfig& cfg) {
    for (std::size_t i = 0; i + 1 < tau.steps.size(); ++i)
        if (grid::transition(tau.steps[i].obs, tau.steps[i].action, cfg) != tau.steps[i + 1].obs) return false;
    return true;
}

std::string to_string(LabelSource s) { return s == LabelSource::Synthetic ? "synthetic" : "human"; }

LabelSource label_source_from_string(const std::string& s) {
    if (s == "synthetic") return LabelSource::Synthetic;
    if (s == "human") return LabelSource::Human;
    throw std::invalid_argument("unknown label source: " + s);
}

double mean_goal_distance(const Trajectory& tau, const grid::GridConfig& cfg) {
    if (tau.empty()) throw std::invalid_argument("mean_goal_distance: empty trajectory");
    long total = 0;
    for (const auto& s : tau.steps) total += grid::manhattan_to_goal(s.obs, cfg);
    return static_cast<double>(total) / static_cast<double>(tau.size());
}

PreferencePair oracle_label(const Trajectory& tau0, const Trajectory& tau1, const grid::GridConfig& cfg) {
    if (tau0.size() != tau1.size())
        throw std::invalid_argument("oracle_label: trajectory lengths differ (" + std::to_string(tau0.size()) + " vs " +
                                    std::to_string(tau1.size()) + ")");
    // Equal lengths, so comparing integer distance totals is the exact form of comparing means.
    long d0 = 0, d1 = 0;
    for (const auto& s : tau0.steps) d0 += grid::manhattan_to_goal(s.obs, cfg);
    for (const auto& s : tau1.steps) d1 += grid::manhattan_to_goal(s.obs, cfg);
    PreferencePair out{tau0, tau1, Label::tie(), true};
    if (d0 < d1) out = {tau0, tau1, Label::first(), false};
    else if (d1 < d0) out = {tau0, tau1, Label::second(), false};
    return out;
}

std::vector<Query> sample_queries(const std::vector<Trajectory>& buffer, std::size_t count, std::size_t length,
                                  nn::Rng& rng) {
    if (buffer.empty()) throw std::invalid_argument("sample_queries: empty buffer");
    if (length == 0) throw std::invalid_argument("sample_queries: zero query length");
    for (const auto& t : buffer)
        if (t.size() < length)
            throw std::invalid_argument("sample_queries: buffer trajectory shorter than query length " +
                                        std::to_string(length));
    std::vector<Query> out;
    out.reserve(count);
    for (std::size_t q = 0; q < count; ++q) {
        Query query;
        if (buffer.size() >= 2) {
            std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
            query.source0 = pick(rng);
            std::uniform_int_distribution<std::size_t> other(0, buffer.size() - 2);
            query.source1 = other(rng);
            if (query.source1 >= query.source0) ++query.source1;
            std::uniform_int_distribution<std::size_t> off0(0, buffer[query.source0].size() - length);
            std::uniform_int_distribution<std::size_t> off1(0, buffer[query.source1].size() - length);
            query.offset0 = off0(rng);
            query.offset1 = off1(rng);
        } else {
            const std::size_t len = buffer.front().size();
            if (len >= 2 * length) {
                // First window inside [0, len - 2L], second placed after it.
                std::uniform_int_distribution<std::size_t> first(0, len - 2 * length);
                query.offset0 = first(rng);
                std::uniform_int_distribution<std::size_t> second(query.offset0 + length, len - length);
                query.offset1 = second(rng);
                if (std::uniform_int_distribution<int>(0, 1)(rng) == 1) std::swap(query.offset0, query.offset1);
            } else {
                std::uniform_int_distribution<std::size_t> off(0, len - length);
                query.offset0 = off(rng);
                query.offset1 = off(rng);
            }
        }
        query.tau0 = buffer[query.source0].window(query.offset0, length);
        query.tau1 = buffer[query.source1].window(query.offset1, length);
        out.push_back(std::move(query));
    }
    return out;
}

PreferenceDataset::PreferenceDataset(const PreferenceDataset& other) : entries_(other.snapshot()) {}

PreferenceDataset& PreferenceDataset::operator=(const PreferenceDataset& other) {
    if (this != &other) {
        auto copy = other.snapshot();
        std::lock_guard lock(mutex_);
        entries_ = std::move(copy);
    }
    return *this;
}

void PreferenceDataset::append(PreferencePair pair, LabelSource source, std::int64_t timestamp) {
    std::lock_guard lock(mutex_);
    entries_.push_back({std::move(pair), source, timestamp});
}

std::vector<DatasetEntry> PreferenceDataset::snapshot() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::size_t PreferenceDataset::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

nlohmann::json trajectory_json(const Trajectory& tau, const grid::GridConfig& cfg) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : tau.steps) {
        const auto sym = grid::symbolize(s.obs, cfg);
        steps.push_back({{"row", s.obs.row},
                         {"col", s.obs.col},
                         {"action", static_cast<int>(s.action)},
                         {"symbols", std::vector<bool>(sym.begin(), sym.end())}});
    }
    return steps;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory tau;
    for (const auto& s : j)
        tau.steps.push_back({{s.at("row").get<int>(), s.at("col").get<int>()},
                             grid::action_from_index(s.at("action").get<int>())});
    return tau;
}

nlohmann::json entry_json(const DatasetEntry& e, const grid::GridConfig& cfg) {
    return {{"tau0", trajectory_json(e.pair.tau0, cfg)},
            {"tau1", trajectory_json(e.pair.tau1, cfg)},
            {"y", {e.pair.y.y0, e.pair.y.y1}},
            {"tie", e.pair.tie},
            {"source", to_string(e.source)},
            {"timestamp", e.timestamp}};
}

std::string PreferenceDataset::to_jsonl(const grid::GridConfig& cfg) const {
    std::ostringstream out;
    for (const auto& e : snapshot()) out << entry_json(e, cfg).dump() << '\n';
    return out.str();
}

PreferenceDataset PreferenceDataset::from_jsonl(const std::string& text) {
    PreferenceDataset ds;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        PreferencePair pair{trajectory_from_json(j.at("tau0")), trajectory_from_json(j.at("tau1")),
                            Label{j.at("y")[0].get<double>(), j.at("y")[1].get<double>()}, j.at("tie").get<bool>()};
        if (pair.tie != pair.y.is_tie()) throw std::runtime_error("preferences: tie flag disagrees with label");
        ds.append(std::move(pair), label_source_from_string(j.at("source")), j.at("timestamp").get<std::int64_t>());
    }
    return ds;
}

std::int64_t now_millis() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace prior
