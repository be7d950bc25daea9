#pragma once

#include <utility>
#include <vector>

#include "json.hpp"
#include "prior/gridworld.hpp"
#include "prior/nn.hpp"
#include "prior/teacher.hpp"

namespace prior {

enum class RewardMode { Standard, ForcedNegative };

struct RewardNetConfig {
    std::size_t hidden = 64;
    std::size_t hidden_layers = 2;
    RewardMode mode = RewardMode::Standard;
};

// MLP over [observation one-hots ++ action one-hot] with a tanh output head.
// Standard mode maps to [-1, 1]; forced-negative mode to [-1, 0] via (tanh(x) - 1) / 2.
class RewardNet {
public:
    RewardNet(grid::GridConfig grid, RewardNetConfig config, nn::Rng& rng);

    const grid::GridConfig& grid() const { return grid_; }
    const RewardNetConfig& config() const { return config_; }
    std::size_t input_dim() const { return 2 * static_cast<std::size_t>(grid_.n) + grid::kNumActions; }

    ad::Tensor encode(const Trajectory& tau) const;
    ad::Tensor encode(grid::Observation obs, grid::Action a) const;
    // Pre-activation of the output head, one row per input row.
    ad::Tensor logits(const ad::Tensor& inputs) const;
    // Per-step rewards, shape T x 1.
    ad::Tensor forward(const ad::Tensor& inputs) const;
    ad::Tensor step_rewards(const Trajectory& tau) const { return forward(encode(tau)); }

    double predict_reward(grid::Observation obs, grid::Action a) const;
    // Rewards for every (cell, action), indexed cell * 4 + action.
    std::vector<double> reward_table() const;

    void zero_output_head();
    nn::NamedParameters named_parameters() const;
    std::vector<ad::Tensor> parameters() const { return nn::values_of(named_parameters()); }

    nlohmann::json checkpoint() const;
    void load(const nlohmann::json& checkpoint);

private:
    grid::GridConfig grid_;
    RewardNetConfig config_;
    std::vector<nn::Linear> hidden_;
    nn::Linear head_;
};

double trajectory_return(const RewardNet& net, const Trajectory& tau);

// (P[tau0 > tau1], P[tau1 > tau0]) from a softmax over the two returns.
std::pair<double, double> bt_probability(double return0, double return1);
std::pair<double, double> bt_probability(const RewardNet& net, const Trajectory& tau0, const Trajectory& tau1);

// Cross-entropy of the Bradley-Terry probability against a (possibly soft) label,
// from per-step reward columns of the two trajectories.
ad::Tensor ce_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1, const Label& y);
ad::Tensor ce_loss(const RewardNet& net, const PreferencePair& pair);

}  // namespace prior
