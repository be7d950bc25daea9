#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prior/autodiff.hpp"

namespace prior::nn {

using ad::Tensor;

using Rng = std::mt19937_64;

// Independent, reproducible stream for a named purpose under a run seed.
Rng make_rng(std::uint64_t seed, std::string_view stream);

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    Tensor operator()(const Tensor& x) const { return ad::add_row(ad::matmul(x, weight), bias); }
    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    void zero();
};

using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> values_of(const NamedParameters& named);
void zero_grads(const NamedParameters& named);

// Versioned checkpoint: {"format", "version", "kind", "meta", "parameters": [{name, shape, values}]}.
nlohmann::json checkpoint_json(const std::string& kind, const nlohmann::json& meta, const NamedParameters& params);
// Copies values from a checkpoint into existing parameters; names and shapes must match.
void load_checkpoint(const nlohmann::json& doc, const std::string& kind, const NamedParameters& params);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig config);

    // Applies one update from the accumulated gradients, then zeroes them.
    void step();
    void zero_grad();
    std::size_t steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

class Sgd {
public:
    Sgd(std::vector<Tensor> params, double lr);
    void step();

private:
    std::vector<Tensor> params_;
    double lr_;
};

}  // namespace prior::nn
