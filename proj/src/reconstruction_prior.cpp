#include "prior/reconstruction_prior.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace prior {

namespace {

ad::Tensor square_param(std::size_t d, nn::Rng& rng) { return nn::xavier_uniform(d, d, rng); }

}  // namespace

ReconstructionModel::ReconstructionModel(StateView view, grid::GridConfig grid, ReconstructionConfig config,
                                         nn::Rng& rng)
    : view_(view), grid_(grid), config_(config) {
    if (config_.max_context == 0) throw std::invalid_argument("reconstruction: max_context must be positive");
    const std::size_t d = config_.dim;
    encoder_ = nn::Linear(state_dim(), d, rng);
    positions_ = nn::xavier_uniform(config_.max_context, d, rng);
    wq_ = square_param(d, rng);
    wk_ = square_param(d, rng);
    wv_ = square_param(d, rng);
    head_ = nn::Linear(d, state_dim(), rng);
}

ReconstructionModel::Output ReconstructionModel::forward(const Trajectory& tau) const {
    if (tau.size() < 2) throw std::invalid_argument("reconstruction: window needs at least 2 steps");
    const std::size_t k = tau.size() - 1;
    if (k > config_.max_context)
        throw std::invalid_argument("reconstruction: context " + std::to_string(k) + " exceeds " +
                                    std::to_string(config_.max_context));
    const auto states = encode_states(tau, view_, grid_);
    const auto context = ad::slice_rows(states, 0, k);
    const auto embedded = ad::add(ad::tanh(encoder_(context)), ad::slice_rows(positions_, 0, k));
    const auto query = ad::matmul(ad::slice_rows(embedded, k - 1, k), wq_);
    const auto keys = ad::matmul(embedded, wk_);
    const auto values = ad::matmul(embedded, wv_);
    const auto scores = ad::scale(ad::matmul(query, ad::transpose(keys)),
                                  1.0 / std::sqrt(static_cast<double>(config_.dim)));
    auto attention = ad::softmax(scores, 1);
    const auto pooled = ad::matmul(attention, values);
    return {head_(pooled), attention};
}

ad::Tensor ReconstructionModel::loss(const Trajectory& tau) const {
    const auto out = forward(tau);
    const auto target = ad::slice_rows(encode_states(tau, view_, grid_), tau.size() - 1, tau.size());
    return ad::mse(out.prediction, target);
}

void ReconstructionModel::zero_query_key() {
    std::fill(wq_.mutable_values().begin(), wq_.mutable_values().end(), 0.0);
    std::fill(wk_.mutable_values().begin(), wk_.mutable_values().end(), 0.0);
}

nn::NamedParameters ReconstructionModel::named_parameters() const {
    return {{"encoder.weight", encoder_.weight}, {"encoder.bias", encoder_.bias}, {"positions", positions_},
            {"query", wq_},
            {"key", wk_},
            {"value", wv_},
            {"head.weight", head_.weight},
            {"head.bias", head_.bias}};
}

nlohmann::json ReconstructionModel::checkpoint() const {
    const nlohmann::json meta{{"view", to_string(view_)},
                              {"grid_n", grid_.n},
                              {"dim", config_.dim},
                              {"max_context", config_.max_context}};
    return nn::checkpoint_json("reconstruction_model", meta, named_parameters());
}

void ReconstructionModel::load(const nlohmann::json& checkpoint) {
    nn::load_checkpoint(checkpoint, "reconstruction_model", named_parameters());
}

TrainingReport train_reconstruction(ReconstructionModel& model, const std::vector<Trajectory>& windows,
                                    const TrainOptions& options, nn::Rng& rng) {
    TrainingReport report;
    std::vector<const Trajectory*> usable;
    for (const auto& w : windows) {
        if (w.size() < 2) {
            ++report.skipped;
            continue;
        }
        usable.push_back(&w);
    }
    if (report.skipped > 0)
        std::cerr << "warning: reconstruction skipped " << report.skipped << " window(s) shorter than 2 steps\n";
    if (usable.empty()) return report;

    const auto named = model.named_parameters();
    nn::Adam adam(nn::values_of(named), {.lr = options.lr});
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::vector<std::size_t> order(usable.size());
    for (std::size_t e = 0; e < options.epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto l = model.loss(*usable[order[i]]);
                total += l.item();
                ad::backward(ad::scale(l, inv));
            }
            adam.step();
        }
        report.epoch_losses.push_back(total / static_cast<double>(order.size()));
    }
    return report;
}

PriorWeights attention_weights(const ReconstructionModel& model, const Trajectory& tau) {
    return {model.forward(tau).attention.values(), PriorWeights::Kind::Simplex};
}

ad::Tensor recon_prior_loss(const ad::Tensor& step_rewards, const PriorWeights& weights) {
    const std::size_t k = weights.w.size();
    if (k == 0 || k > step_rewards.rows())
        throw std::invalid_argument("recon_prior_loss: " + std::to_string(k) + " prior weights for " +
                                    std::to_string(step_rewards.rows()) + " steps");
    const auto context = ad::reshape(ad::slice_rows(step_rewards, 0, k), 1, k);
    return ad::kl_divergence(ad::Tensor::row(weights.w), ad::softmax(context, 1));
}

ad::Tensor recon_prior_loss(const Trajectory& tau, const RewardNet& net, const ReconstructionModel& model) {
    return recon_prior_loss(net.step_rewards(tau), attention_weights(model, tau));
}

}  // namespace prior
