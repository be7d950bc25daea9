#include "prior/reward_model.hpp"

#include <cmath>
#include <stdexcept>

namespace prior {

RewardNet::RewardNet(grid::GridConfig grid, RewardNetConfig config, nn::Rng& rng)
    : grid_(grid), config_(config) {
    grid_.validate();
    if (config_.hidden_layers == 0 || config_.hidden == 0) throw std::invalid_argument("reward net: empty hidden layers");
    std::size_t width = input_dim();
    for (std::size_t i = 0; i < config_.hidden_layers; ++i) {
        hidden_.emplace_back(width, config_.hidden, rng);
        width = config_.hidden;
    }
    head_ = nn::Linear(width, 1, rng);
}

ad::Tensor RewardNet::encode(const Trajectory& tau) const {
    const std::size_t dim = input_dim();
    std::vector<double> values;
    values.reserve(tau.size() * dim);
    for (const auto& s : tau.steps) {
        const auto o = grid::encode_observation(s.obs, grid_);
        const auto a = grid::encode_action(s.action);
        values.insert(values.end(), o.begin(), o.end());
        values.insert(values.end(), a.begin(), a.end());
    }
    return ad::Tensor(ad::Shape{tau.size(), dim}, std::move(values));
}

ad::Tensor RewardNet::encode(grid::Observation obs, grid::Action a) const {
    Trajectory single;
    single.steps.push_back({obs, a});
    return encode(single);
}

ad::Tensor RewardNet::logits(const ad::Tensor& inputs) const {
    ad::Tensor h = inputs;
    for (const auto& layer : hidden_) h = ad::tanh(layer(h));
    return head_(h);
}

ad::Tensor RewardNet::forward(const ad::Tensor& inputs) const {
    auto out = ad::tanh(logits(inputs));
    if (config_.mode == RewardMode::ForcedNegative) out = ad::scale(ad::add_scalar(out, -1.0), 0.5);
    return out;
}

double RewardNet::predict_reward(grid::Observation obs, grid::Action a) const {
    return forward(encode(obs, a)).item();
}

std::vector<double> RewardNet::reward_table() const {
    Trajectory all;
    for (std::size_t c = 0; c < grid_.num_cells(); ++c)
        for (auto a : grid::kAllActions) all.steps.push_back({grid_.cell(c), a});
    return forward(encode(all)).values();
}

void RewardNet::zero_output_head() { head_.zero(); }

nn::NamedParameters RewardNet::named_parameters() const {
    nn::NamedParameters out;
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
        out.emplace_back("hidden" + std::to_string(i) + ".weight", hidden_[i].weight);
        out.emplace_back("hidden" + std::to_string(i) + ".bias", hidden_[i].bias);
    }
    out.emplace_back("head.weight", head_.weight);
    out.emplace_back("head.bias", head_.bias);
    return out;
}

nlohmann::json RewardNet::checkpoint() const {
    const nlohmann::json meta{{"grid_n", grid_.n},
                              {"hidden", config_.hidden},
                              {"hidden_layers", config_.hidden_layers},
                              {"mode", config_.mode == RewardMode::Standard ? "standard" : "forced_negative"}};
    return nn::checkpoint_json("reward_net", meta, named_parameters());
}

void RewardNet::load(const nlohmann::json& checkpoint) { nn::load_checkpoint(checkpoint, "reward_net", named_parameters()); }

double trajectory_return(const RewardNet& net, const Trajectory& tau) {
    if (tau.empty()) throw std::invalid_argument("trajectory_return: empty trajectory");
    return ad::sum(net.step_rewards(tau)).item();
}

namespace {
// evaluated on the side that cannot overflow
double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

std::pair<double, double> bt_probability(double return0, double return1) {
    const double d = return0 - return1;
    return {logistic(d), logistic(-d)};
}

std::pair<double, double> bt_probability(const RewardNet& net, const Trajectory& tau0, const Trajectory& tau1) {
    return bt_probability(trajectory_return(net, tau0), trajectory_return(net, tau1));
}

ad::Tensor ce_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1, const Label& y) {
    const auto returns = ad::concat_cols({ad::sum(rewards0), ad::sum(rewards1)});
    const auto logp = ad::log_softmax(returns, 1);
    const auto weights = ad::Tensor::row({y.y0, y.y1});
    return ad::scale(ad::sum(ad::mul(weights, logp)), -1.0);
}

ad::Tensor ce_loss(const RewardNet& net, const PreferencePair& pair) {
    return ce_loss(net.step_rewards(pair.tau0), net.step_rewards(pair.tau1), pair.y);
}

}  // namespace prior
