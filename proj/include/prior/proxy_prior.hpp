#pragma once

#include <vector>

#include "json.hpp"
#include "prior/nn.hpp"
#include "prior/reconstruction_prior.hpp"
#include "prior/reward_model.hpp"
#include "prior/state_view.hpp"

namespace prior {

struct ProxyConfig {
    std::size_t dim = 32;
};

// Pairwise preference classifier: a shared state-action step encoder, one single-head
// self-attention layer per trajectory (mean-pooled, no positional encoding), and a
// linear layer over the concatenated pair embedding producing two logits.
class ProxyLabeller {
public:
    ProxyLabeller(StateView view, grid::GridConfig grid, ProxyConfig config, nn::Rng& rng);

    StateView view() const { return view_; }
    const grid::GridConfig& grid() const { return grid_; }
    std::size_t input_dim() const { return state_dim(view_, grid_) + grid::kNumActions; }

    ad::Tensor encode(const Trajectory& tau, bool requires_grad = false) const;
    ad::Tensor embed(const ad::Tensor& steps) const;
    // 1 x 2 logits from encoded step matrices of both trajectories.
    ad::Tensor logits(const ad::Tensor& steps0, const ad::Tensor& steps1) const;
    int predict(const Trajectory& tau0, const Trajectory& tau1) const;

    void zero_classifier();
    nn::NamedParameters named_parameters() const;
    nlohmann::json checkpoint() const;
    void load(const nlohmann::json& checkpoint);

private:
    StateView view_;
    grid::GridConfig grid_;
    ProxyConfig config_;
    nn::Linear step_encoder_;
    ad::Tensor wq_, wk_, wv_;
    nn::Linear classifier_;
};

// Trains on the non-tie pairs; throws std::runtime_error("no trainable pairs") if there are none.
// The report's accuracy is measured on those pairs after the last epoch.
TrainingReport train_proxy(ProxyLabeller& model, const std::vector<PreferencePair>& pairs,
                           const TrainOptions& options, nn::Rng& rng);
double proxy_accuracy(const ProxyLabeller& model, const std::vector<PreferencePair>& pairs);

struct SignedStepImportance {
    std::vector<double> g0;
    std::vector<double> g1;
    int predicted = 0;
};

// Gradient of the predicted class's logit with respect to each step's input encoding,
// summed over the encoding components.
SignedStepImportance vanilla_grad(const ProxyLabeller& model, const Trajectory& tau0, const Trajectory& tau1);

// Reflects positive importances below the minimum so every entry is <= 0.
std::vector<double> transform_dispreferred(const std::vector<double>& g);

// Preferred importances followed by the transformed dis-preferred ones.
std::vector<double> proxy_target(const SignedStepImportance& importance);

// KL(softmax(rewards of preferred ++ dis-preferred) || softmax(proxy_target)). The target is a constant.
ad::Tensor proxy_prior_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1,
                            const SignedStepImportance& importance);
ad::Tensor proxy_prior_loss(const Trajectory& tau0, const Trajectory& tau1, const RewardNet& net,
                            const ProxyLabeller& model);

}  // namespace prior
