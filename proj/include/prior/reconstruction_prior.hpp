#pragma once

#include <vector>

#include "json.hpp"
#include "prior/nn.hpp"
#include "prior/reward_model.hpp"
#include "prior/state_view.hpp"

namespace prior {

struct PriorWeights {
    enum class Kind { Simplex, Signed };
    std::vector<double> w;
    Kind kind = Kind::Simplex;
};

struct ReconstructionConfig {
    std::size_t dim = 32;
    std::size_t max_context = 7;  // k = |tau| - 1 for the longest window seen
};

// Forward-prediction model: predicts the final state of a window from the states before it,
// through one single-head self-attention layer. Learned per-position embeddings are added
// to the state encodings; the attention row of the last context position feeds the head.
class ReconstructionModel {
public:
    ReconstructionModel(StateView view, grid::GridConfig grid, ReconstructionConfig config, nn::Rng& rng);

    struct Output {
        ad::Tensor prediction;  // 1 x state_dim
        ad::Tensor attention;   // 1 x k
    };

    StateView view() const { return view_; }
    const grid::GridConfig& grid() const { return grid_; }
    const ReconstructionConfig& config() const { return config_; }
    std::size_t state_dim() const { return prior::state_dim(view_, grid_); }

    Output forward(const Trajectory& tau) const;
    ad::Tensor loss(const Trajectory& tau) const;

    void zero_query_key();
    nn::NamedParameters named_parameters() const;
    nlohmann::json checkpoint() const;
    void load(const nlohmann::json& checkpoint);

private:
    StateView view_;
    grid::GridConfig grid_;
    ReconstructionConfig config_;
    nn::Linear encoder_;
    ad::Tensor positions_;
    ad::Tensor wq_, wk_, wv_;
    nn::Linear head_;
};

struct TrainingReport {
    std::vector<double> epoch_losses;
    std::size_t skipped = 0;
    double accuracy = 0.0;  // proxy labeller only
};

struct TrainOptions {
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t batch_size = 16;
};

// Windows shorter than 2 steps are skipped with a warning on stderr.
TrainingReport train_reconstruction(ReconstructionModel& model, const std::vector<Trajectory>& windows,
                                    const TrainOptions& options, nn::Rng& rng);

PriorWeights attention_weights(const ReconstructionModel& model, const Trajectory& tau);

// KL(w || softmax(rewards of the k context steps)). The prior is a constant.
ad::Tensor recon_prior_loss(const ad::Tensor& step_rewards, const PriorWeights& weights);
ad::Tensor recon_prior_loss(const Trajectory& tau, const RewardNet& net, const ReconstructionModel& model);

}  // namespace prior
