#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "prior/autodiff.hpp"
#include "prior/gridworld.hpp"
#include "prior/nn.hpp"
#include "prior/teacher.hpp"

namespace prior::testing {

inline Trajectory walk(grid::Cell start, const std::vector<grid::Action>& actions, const grid::GridConfig& cfg) {
    Trajectory tau;
    auto obs = start;
    for (auto a : actions) {
        tau.steps.push_back({obs, a});
        obs = grid::transition(obs, a, cfg);
    }
    return tau;
}

inline Trajectory random_walk(std::size_t length, const grid::GridConfig& cfg, nn::Rng& rng) {
    std::uniform_int_distribution<int> cell(0, cfg.n - 1), act(0, 3);
    std::vector<grid::Action> actions;
    for (std::size_t i = 0; i < length; ++i) actions.push_back(grid::action_from_index(act(rng)));
    return walk({cell(rng), cell(rng)}, actions, cfg);
}

// Every step parked on one cell with a fixed action; not necessarily transition-consistent.
inline Trajectory parked(grid::Cell c, std::size_t length, grid::Action a = grid::Action::Up) {
    Trajectory tau;
    tau.steps.assign(length, Step{c, a});
    return tau;
}

inline std::vector<double> random_vector(std::size_t n, nn::Rng& rng, double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline std::vector<double> softmax_oracle(const std::vector<double>& x) {
    const double m = *std::max_element(x.begin(), x.end());
    std::vector<double> e(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i] - m);
    for (auto& v : e) v /= z;
    return e;
}

inline double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Central differences on the scalar returned by `loss` against the analytic gradient of every
// tensor in `wrt`. `loss` must rebuild its graph from the current tensor values on each call.
// With `sample` > 0 only that many randomly chosen coordinates per tensor are compared.
inline GradCheck grad_check(const std::function<ad::Tensor()>& loss, std::vector<ad::Tensor> wrt, double h = 1e-5,
                            std::size_t sample = 0, nn::Rng* rng = nullptr) {
    for (auto& t : wrt) t.zero_grad();
    ad::backward(loss());
    std::vector<std::vector<double>> analytic;
    for (auto& t : wrt) analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
    for (auto& t : wrt) t.zero_grad();

    GradCheck out;
    for (std::size_t k = 0; k < wrt.size(); ++k) {
        auto& values = wrt[k].mutable_values();
        std::vector<std::size_t> idx(values.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (sample > 0 && rng && idx.size() > sample) {
            std::shuffle(idx.begin(), idx.end(), *rng);
            idx.resize(sample);
        }
        for (auto i : idx) {
            const double v = values[i];
            values[i] = v + h;
            const double up = loss().item();
            values[i] = v - h;
            const double down = loss().item();
            values[i] = v;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            out.max_rel = std::max(out.max_rel, rel);
            ++out.checked;
        }
    }
    return out;
}

}  // namespace prior::testing
