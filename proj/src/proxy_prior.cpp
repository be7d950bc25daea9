#include "prior/proxy_prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prior {

ProxyLabeller::ProxyLabeller(StateView view, grid::GridConfig grid, ProxyConfig config, nn::Rng& rng)
    : view_(view), grid_(grid), config_(config) {
    const std::size_t d = config_.dim;
    step_encoder_ = nn::Linear(input_dim(), d, rng);
    wq_ = nn::xavier_uniform(d, d, rng);
    wk_ = nn::xavier_uniform(d, d, rng);
    wv_ = nn::xavier_uniform(d, d, rng);
    classifier_ = nn::Linear(2 * d, 2, rng);
}

ad::Tensor ProxyLabeller::encode(const Trajectory& tau, bool requires_grad) const {
    return encode_state_actions(tau, view_, grid_, requires_grad);
}

ad::Tensor ProxyLabeller::embed(const ad::Tensor& steps) const {
    const auto e = ad::tanh(step_encoder_(steps));
    const auto scores = ad::scale(ad::matmul(ad::matmul(e, wq_), ad::transpose(ad::matmul(e, wk_))),
                                  1.0 / std::sqrt(static_cast<double>(config_.dim)));
    const auto attended = ad::matmul(ad::softmax(scores, 1), ad::matmul(e, wv_));
    return ad::mean_rows(ad::add(e, attended));
}

ad::Tensor ProxyLabeller::logits(const ad::Tensor& steps0, const ad::Tensor& steps1) const {
    return classifier_(ad::concat_cols({embed(steps0), embed(steps1)}));
}

int ProxyLabeller::predict(const Trajectory& tau0, const Trajectory& tau1) const {
    const auto out = logits(encode(tau0), encode(tau1));
    return out.values()[1] > out.values()[0] ? 1 : 0;
}

void ProxyLabeller::zero_classifier() { classifier_.zero(); }

nn::NamedParameters ProxyLabeller::named_parameters() const {
    return {{"step_encoder.weight", step_encoder_.weight},
            {"step_encoder.bias", step_encoder_.bias},
            {"query", wq_},
            {"key", wk_},
            {"value", wv_},
            {"classifier.weight", classifier_.weight},
            {"classifier.bias", classifier_.bias}};
}

nlohmann::json ProxyLabeller::checkpoint() const {
    const nlohmann::json meta{{"view", to_string(view_)}, {"grid_n", grid_.n}, {"dim", config_.dim}};
    return nn::checkpoint_json("proxy_labeller", meta, named_parameters());
}

void ProxyLabeller::load(const nlohmann::json& checkpoint) {
    nn::load_checkpoint(checkpoint, "proxy_labeller", named_parameters());
}

double proxy_accuracy(const ProxyLabeller& model, const std::vector<PreferencePair>& pairs) {
    std::size_t total = 0, correct = 0;
    for (const auto& p : pairs) {
        if (p.tie) continue;
        ++total;
        if (model.predict(p.tau0, p.tau1) == p.y.preferred()) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainingReport train_proxy(ProxyLabeller& model, const std::vector<PreferencePair>& pairs,
                           const TrainOptions& options, nn::Rng& rng) {
    struct Example {
        ad::Tensor steps0, steps1;
        std::size_t label;
    };
    std::vector<Example> examples;
    for (const auto& p : pairs)
        if (!p.tie)
            examples.push_back({model.encode(p.tau0), model.encode(p.tau1), static_cast<std::size_t>(p.y.preferred())});
    if (examples.empty()) throw std::runtime_error("no trainable pairs");

    TrainingReport report;
    report.skipped = pairs.size() - examples.size();
    nn::Adam adam(nn::values_of(model.named_parameters()), {.lr = options.lr});
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t e = 0; e < options.epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = examples[order[i]];
                const auto logp = ad::log_softmax(model.logits(ex.steps0, ex.steps1), 1);
                const auto l = ad::scale(ad::element(logp, 0, ex.label), -1.0);
                total += l.item();
                ad::backward(ad::scale(l, inv));
            }
            adam.step();
        }
        report.epoch_losses.push_back(total / static_cast<double>(examples.size()));
    }
    report.accuracy = proxy_accuracy(model, pairs);
    return report;
}

SignedStepImportance vanilla_grad(const ProxyLabeller& model, const Trajectory& tau0, const Trajectory& tau1) {
    auto x0 = model.encode(tau0, true);
    auto x1 = model.encode(tau1, true);
    const auto out = model.logits(x0, x1);
    SignedStepImportance imp;
    imp.predicted = out.values()[1] > out.values()[0] ? 1 : 0;
    ad::backward(ad::element(out, 0, static_cast<std::size_t>(imp.predicted)));
    nn::zero_grads(model.named_parameters());

    const auto per_step = [](const ad::Tensor& x) {
        std::vector<double> g(x.rows(), 0.0);
        if (!x.has_grad()) return g;
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t c = 0; c < x.cols(); ++c) g[i] += x.grad()[i * x.cols() + c];
        return g;
    };
    imp.g0 = per_step(x0);
    imp.g1 = per_step(x1);
    return imp;
}

std::vector<double> transform_dispreferred(const std::vector<double>& g) {
    if (g.empty()) throw std::invalid_argument("transform_dispreferred: empty importance vector");
    const double lowest = *std::min_element(g.begin(), g.end());
    std::vector<double> out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = g[k] > 0.0 ? lowest - g[k] : g[k];
    return out;
}

std::vector<double> proxy_target(const SignedStepImportance& importance) {
    const auto& preferred = importance.predicted == 0 ? importance.g0 : importance.g1;
    const auto& dispreferred = importance.predicted == 0 ? importance.g1 : importance.g0;
    std::vector<double> out(preferred);
    const auto transformed = transform_dispreferred(dispreferred);
    out.insert(out.end(), transformed.begin(), transformed.end());
    return out;
}

ad::Tensor proxy_prior_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1,
                            const SignedStepImportance& importance) {
    const auto& preferred = importance.predicted == 0 ? rewards0 : rewards1;
    const auto& dispreferred = importance.predicted == 0 ? rewards1 : rewards0;
    const auto target = proxy_target(importance);
    const std::size_t total = preferred.rows() + dispreferred.rows();
    if (target.size() != total)
        throw std::invalid_argument("proxy_prior_loss: " + std::to_string(target.size()) + " importances for " +
                                    std::to_string(total) + " steps");
    const auto reward_dist = ad::softmax(ad::reshape(ad::concat_rows({preferred, dispreferred}), 1, total), 1);
    const auto grad_dist = ad::softmax(ad::Tensor::row(target), 1);
    return ad::kl_divergence(reward_dist, grad_dist);
}

ad::Tensor proxy_prior_loss(const Trajectory& tau0, const Trajectory& tau1, const RewardNet& net,
                            const ProxyLabeller& model) {
    return proxy_prior_loss(net.step_rewards(tau0), net.step_rewards(tau1), vanilla_grad(model, tau0, tau1));
}

}  // namespace prior
