#include "prior/nn.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace prior::nn {

Rng make_rng(std::uint64_t seed, std::string_view stream) {
    // FNV-1a keeps the stream derivation independent of std::hash.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : stream) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> values(fan_in * fan_out);
    for (auto& v : values) v = dist(rng);
    return Tensor(ad::Shape{fan_in, fan_out}, std::move(values), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros(1, out, true)) {}

void Linear::zero() {
    std::fill(weight.mutable_values().begin(), weight.mutable_values().end(), 0.0);
    std::fill(bias.mutable_values().begin(), bias.mutable_values().end(), 0.0);
}

std::vector<Tensor> values_of(const NamedParameters& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
}

void zero_grads(const NamedParameters& named) {
    for (auto [name, t] : named) t.zero_grad();
}

nlohmann::json checkpoint_json(const std::string& kind, const nlohmann::json& meta, const NamedParameters& params) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, t] : params)
        list.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"values", t.values()}});
    return {{"format", "prior-checkpoint"}, {"version", 1}, {"kind", kind}, {"meta", meta}, {"parameters", list}};
}

void load_checkpoint(const nlohmann::json& doc, const std::string& kind, const NamedParameters& params) {
    if (doc.value("format", "") != "prior-checkpoint" || doc.value("version", 0) != 1)
        throw std::runtime_error("checkpoint: unsupported format or version");
    if (doc.value("kind", "") != kind)
        throw std::runtime_error("checkpoint: expected kind " + kind + ", got " + doc.value("kind", ""));
    const auto& list = doc.at("parameters");
    if (list.size() != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = list[i];
        auto t = params[i].second;
        if (entry.at("name") != params[i].first)
            throw std::runtime_error("checkpoint: expected parameter " + params[i].first);
        if (entry.at("shape")[0] != t.rows() || entry.at("shape")[1] != t.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " + params[i].first);
        t.mutable_values() = entry.at("values").get<std::vector<double>>();
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

namespace {

void check_finite(const std::vector<Tensor>& params) {
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k].grad().size(); ++i)
            if (!std::isfinite(params[k].grad()[i])) {
                std::ostringstream msg;
                msg << "optimizer: non-finite gradient in parameter " << k << " " << params[k].shape().str()
                    << " at index " << i << " (value " << params[k].grad()[i] << ")";
                throw std::runtime_error(msg.str());
            }
}

}  // namespace

void Adam::step() {
    check_finite(params_);
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        if (!p.has_grad()) continue;
        auto& w = p.mutable_values();
        auto& g = p.mutable_grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
        std::fill(g.begin(), g.end(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {}

void Sgd::step() {
    check_finite(params_);
    for (auto& p : params_) {
        if (!p.has_grad()) continue;
        auto& w = p.mutable_values();
        auto& g = p.mutable_grad();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
        std::fill(g.begin(), g.end(), 0.0);
    }
}

}  // namespace prior::nn
