#pragma once

#include <string>

#include "prior/autodiff.hpp"
#include "prior/gridworld.hpp"
#include "prior/teacher.hpp"

namespace prior {

// Which representation the prior models see: the boolean symbol abstraction or raw observations.
enum class StateView { Symbols, Observations };

std::string to_string(StateView v);
std::size_t state_dim(StateView view, const grid::GridConfig& cfg);
// T x state_dim, one row per step.
ad::Tensor encode_states(const Trajectory& tau, StateView view, const grid::GridConfig& cfg);
// T x (state_dim + 4): state features followed by the action one-hot.
ad::Tensor encode_state_actions(const Trajectory& tau, StateView view, const grid::GridConfig& cfg,
                                bool requires_grad = false);

}  // namespace prior
