#include "prior/state_view.hpp"

namespace prior {

std::string to_string(StateView v) { return v == StateView::Symbols ? "symbols" : "observations"; }

std::size_t state_dim(StateView view, const grid::GridConfig& cfg) {
    return view == StateView::Symbols ? grid::kNumSymbols : 2 * static_cast<std::size_t>(cfg.n);
}

namespace {

std::vector<double> state_features(grid::Observation obs, StateView view, const grid::GridConfig& cfg) {
    return view == StateView::Symbols ? grid::encode_symbols(grid::symbolize(obs, cfg))
                                      : grid::encode_observation(obs, cfg);
}

}  // namespace

ad::Tensor encode_states(const Trajectory& tau, StateView view, const grid::GridConfig& cfg) {
    std::vector<double> values;
    for (const auto& s : tau.steps) {
        const auto f = state_features(s.obs, view, cfg);
        values.insert(values.end(), f.begin(), f.end());
    }
    return ad::Tensor(ad::Shape{tau.size(), state_dim(view, cfg)}, std::move(values));
}

ad::Tensor encode_state_actions(const Trajectory& tau, StateView view, const grid::GridConfig& cfg,
                                bool requires_grad) {
    std::vector<double> values;
    for (const auto& s : tau.steps) {
        const auto f = state_features(s.obs, view, cfg);
        const auto a = grid::encode_action(s.action);
        values.insert(values.end(), f.begin(), f.end());
        values.insert(values.end(), a.begin(), a.end());
    }
    return ad::Tensor(ad::Shape{tau.size(), state_dim(view, cfg) + grid::kNumActions}, std::move(values),
                      requires_grad);
}

}  // namespace prior
