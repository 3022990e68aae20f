#pragma once

#include <random>
#include <string>

#include "omvp/policy/transformer.hpp"

namespace omvp::policy {

struct RecurrentConfig {
    std::size_t features = 56;
    std::size_t hidden = 128;
};

/// Per-agent GRU baseline: elu(embed) feeds a gated recurrent cell, then a linear Q-head.
/// Agents never see each other before the mixer.
class RecurrentPolicy {
public:
    RecurrentPolicy() = default;
    RecurrentPolicy(const RecurrentConfig& cfg, ParamSet& ps, std::mt19937_64& rng,
                    const std::string& prefix = "agent")
        : cfg_(cfg) {
        if (cfg.hidden == 0) throw InvalidConfig("recurrent hidden width must be positive");
        const std::size_t h = cfg.hidden;
        embed_ = tensor::add_dense(ps, prefix + ".embed", cfg.features, h, rng);
        // update | reset | candidate gates side by side
        input_ = tensor::add_dense(ps, prefix + ".gru.input", h, 3 * h, rng);
        recur_ = tensor::add_dense(ps, prefix + ".gru.recur", h, 3 * h, rng);
        head_ = tensor::add_dense(ps, prefix + ".qhead", h, env::kActionCount, rng);
    }

    const RecurrentConfig& config() const { return cfg_; }
    std::size_t hidden_width() const { return cfg_.hidden; }
    std::size_t hidden_rows(std::size_t agents) const { return agents; }

    PolicyOutput forward(const Bound& p, Var features, Var hidden, std::size_t agents,
                         bool keep_attention = false) const {
        (void)keep_attention;
        if (agents == 0 || features.rows() % agents != 0)
            throw ContractError("policy forward: feature rows not a multiple of the agent count");
        if (features.cols() != cfg_.features)
            throw ContractError("policy forward: expected " + std::to_string(cfg_.features) + " features, got " +
                                std::to_string(features.cols()));
        if (hidden.rows() != features.rows() || hidden.cols() != cfg_.hidden)
            throw ContractError("policy forward: hidden state has the wrong shape");
        const std::size_t h = cfg_.hidden;
        using namespace tensor;
        Var x = elu(linear(features, p[embed_.weight], p[embed_.bias]));
        Var gx = linear(x, p[input_.weight], p[input_.bias]);
        Var gh = linear(hidden, p[recur_.weight], p[recur_.bias]);
        Var z = sigmoid(add(slice_cols(gx, 0, h), slice_cols(gh, 0, h)));
        Var r = sigmoid(add(slice_cols(gx, h, h), slice_cols(gh, h, h)));
        Var n = tanh(add(slice_cols(gx, 2 * h, h), mul(r, slice_cols(gh, 2 * h, h))));
        Var next = add(n, mul(z, sub(hidden, n)));  // (1 - z) n + z h

        PolicyOutput out;
        out.q = linear(next, p[head_.weight], p[head_.bias]);
        out.hidden = next;
        return out;
    }

private:
    RecurrentConfig cfg_;
    DenseIds embed_, input_, recur_, head_;
};

}  // namespace omvp::policy
