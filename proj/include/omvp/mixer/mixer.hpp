#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "omvp/tensor/ops.hpp"
#include "omvp/tensor/params.hpp"

namespace omvp::mixer {

using tensor::Bound;
using tensor::DenseIds;
using tensor::Graph;
using tensor::ParamSet;
using tensor::Tensor;
using tensor::Var;

/// Additive mixing: Q_total = sum_i q_i for each row of q (B x N).
inline Var vdn_mix(Var q) { return tensor::row_sum(q); }

inline double vdn_mix(const std::vector<double>& q) {
    double s = 0.0;
    for (double x : q) s += x;
    return s;
}

struct QmixConfig {
    std::size_t agents = 8;
    std::size_t state_dim = 507;
    std::size_t hidden = 128;
};

/// Monotone mixing network whose weights come from hypernetworks over the global state.
class QmixMixer {
public:
    QmixMixer() = default;
    QmixMixer(const QmixConfig& cfg, ParamSet& ps, std::mt19937_64& rng, const std::string& prefix = "mixer")
        : cfg_(cfg) {
        if (cfg.agents == 0 || cfg.state_dim == 0 || cfg.hidden == 0)
            throw InvalidConfig("mixer dimensions must be positive");
        const std::size_t s = cfg.state_dim, h = cfg.hidden, n = cfg.agents;
        w1a_ = tensor::add_dense(ps, prefix + ".hyper_w1.0", s, h, rng);
        w1b_ = tensor::add_dense(ps, prefix + ".hyper_w1.1", h, h * n, rng);
        wfa_ = tensor::add_dense(ps, prefix + ".hyper_wf.0", s, h, rng);
        wfb_ = tensor::add_dense(ps, prefix + ".hyper_wf.1", h, h, rng);
        b1_ = tensor::add_dense(ps, prefix + ".hyper_b1", s, h, rng);
        bfa_ = tensor::add_dense(ps, prefix + ".hyper_bf.0", s, h, rng);
        bfb_ = tensor::add_dense(ps, prefix + ".hyper_bf.1", h, 1, rng);
    }

    const QmixConfig& config() const { return cfg_; }

    /// q: B x N chosen-action values, state: B x S. Returns B x 1.
    Var forward(const Bound& p, Var q, Var state) const {
        if (q.cols() != cfg_.agents || state.cols() != cfg_.state_dim || q.rows() != state.rows())
            throw ContractError("qmix: expected q B x " + std::to_string(cfg_.agents) + " and state B x " +
                                std::to_string(cfg_.state_dim));
        using namespace tensor;
        auto dense = [&](Var x, const DenseIds& d) { return linear(x, p[d.weight], p[d.bias]); };
        Var w1 = abs(dense(elu(dense(state, w1a_)), w1b_));  // B x (N*h)
        Var wf = abs(dense(elu(dense(state, wfa_)), wfb_));  // B x h
        Var b1 = dense(state, b1_);
        Var bf = dense(elu(dense(state, bfa_)), bfb_);
        Var hidden = elu(add(batched_vecmat(q, w1, cfg_.hidden), b1));
        return add(row_sum(mul(hidden, wf)), bf);
    }

    /// Scalar convenience for one (q, state) pair.
    double evaluate(const ParamSet& ps, const std::vector<double>& q, const std::vector<double>& state) const {
        Graph g(false);
        Bound b = tensor::bind(g, ps);
        Var qv = g.constant(Tensor::matrix(1, q.size(), q));
        Var sv = g.constant(Tensor::matrix(1, state.size(), state));
        return forward(b, qv, sv).value()[0];
    }

private:
    QmixConfig cfg_;
    DenseIds w1a_, w1b_, wfa_, wfb_, b1_, bfa_, bfb_;
};

/// Draws one global-state vector.
using StateSampler = std::function<std::vector<double>(std::mt19937_64&)>;

/// Minimum over samples and agents of the central-difference slope dQ_total/dq_i at
/// random points. q ~ N(0, 1) per entry; states come from `sampler`.
inline double monotonicity_probe(const QmixMixer& mixer, const ParamSet& ps, std::size_t samples,
                                 std::mt19937_64& rng, const StateSampler& sampler, double h = 1e-4) {
    if (samples == 0) throw ContractError("monotonicity_probe: need at least one sample");
    const std::size_t n = mixer.config().agents, s = mixer.config().state_dim;
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor q = Tensor::matrix(samples, n), state = Tensor::matrix(samples, s);
    for (auto& x : q.values()) x = normal(rng);
    for (std::size_t i = 0; i < samples; ++i) {
        const auto row = sampler(rng);
        if (row.size() != s) throw ContractError("monotonicity_probe: sampler returned the wrong state size");
        std::copy(row.begin(), row.end(), state.data() + i * s);
    }

    Graph g(false);
    Bound b = tensor::bind(g, ps);
    Var sv = g.constant(state);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t agent = 0; agent < n; ++agent) {
        Tensor up = q, down = q;
        for (std::size_t i = 0; i < samples; ++i) {
            up(i, agent) += h;
            down(i, agent) -= h;
        }
        const Tensor fu = mixer.forward(b, g.constant(std::move(up)), sv).value();
        const Tensor fd = mixer.forward(b, g.constant(std::move(down)), sv).value();
        for (std::size_t i = 0; i < samples; ++i) worst = std::min(worst, (fu[i] - fd[i]) / (2.0 * h));
    }
    return worst;
}

/// States with uniform [0, 2) pursuer/evader counts and a 0/1 obstacle layer.
inline StateSampler uniform_state_sampler(std::size_t state_dim) {
    return [state_dim](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.0, 2.0);
        std::vector<double> s(state_dim);
        const std::size_t third = state_dim / 3;
        for (std::size_t i = 0; i < state_dim; ++i) s[i] = i < 2 * third ? u(rng) : (u(rng) < 1.0 ? 1.0 : 0.0);
        return s;
    };
}

}  // namespace omvp::mixer
