#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "omvp/env/world.hpp"
#include "omvp/tensor/ops.hpp"
#include "omvp/tensor/params.hpp"

namespace omvp::policy {

using tensor::Bound;
using tensor::DenseIds;
using tensor::Graph;
using tensor::ParamSet;
using tensor::Var;

/// One shared history token for the team, or one per agent.
enum class HiddenMode { Team, PerAgent };

struct TransformerConfig {
    std::size_t features = 56;
    std::size_t embed = 250;
    std::size_t heads = 5;
    std::size_t depth = 2;
    bool layer_norm = true;
    HiddenMode hidden = HiddenMode::Team;
};

struct PolicyOutput {
    Var q;       // (B*N) x 5
    Var hidden;  // (B*H) x width
    // Per layer, (B*heads*T) x T softmax maps with T = N + H tokens per sample.
    std::vector<tensor::Tensor> attention;
};

/// softmax(Q K^T / sqrt(d_k)) V for one head.
inline Var attention(Var q, Var k, Var v) {
    if (q.cols() != k.cols()) throw ContractError("attention: Q and K column counts differ");
    if (k.rows() != v.rows()) throw ContractError("attention: K and V row counts differ");
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    return tensor::matmul(tensor::softmax_rows(tensor::affine(tensor::matmul_nt(q, k), scale)), v);
}

class TransformerPolicy {
public:
    TransformerPolicy() = default;
    TransformerPolicy(const TransformerConfig& cfg, ParamSet& ps, std::mt19937_64& rng,
                      const std::string& prefix = "agent")
        : cfg_(cfg) {
        if (cfg.embed == 0 || cfg.heads == 0 || cfg.embed % cfg.heads != 0)
            throw InvalidConfig("embedding width must be a positive multiple of the head count");
        if (cfg.depth == 0) throw InvalidConfig("transformer depth must be positive");
        embed_ = tensor::add_dense(ps, prefix + ".embed", cfg.features, cfg.embed, rng);
        const std::size_t d = cfg.embed;
        for (std::size_t l = 0; l < cfg.depth; ++l) {
            const std::string p = prefix + ".layer" + std::to_string(l);
            Layer layer;
            layer.wq = ps.add(p + ".wq", tensor::fan_in_uniform(d, d, d, rng));
            layer.wk = ps.add(p + ".wk", tensor::fan_in_uniform(d, d, d, rng));
            layer.wv = ps.add(p + ".wv", tensor::fan_in_uniform(d, d, d, rng));
            layer.out = tensor::add_dense(ps, p + ".out", d, d, rng);
            layer.ff1 = tensor::add_dense(ps, p + ".ff1", d, d, rng);
            layer.ff2 = tensor::add_dense(ps, p + ".ff2", d, d, rng);
            if (cfg.layer_norm) {
                layer.ln1_gain = ps.add(p + ".ln1.gain", tensor::Tensor::matrix(1, d, 1.0));
                layer.ln1_bias = ps.add(p + ".ln1.bias", tensor::Tensor::matrix(1, d, 0.0));
                layer.ln2_gain = ps.add(p + ".ln2.gain", tensor::Tensor::matrix(1, d, 1.0));
                layer.ln2_bias = ps.add(p + ".ln2.bias", tensor::Tensor::matrix(1, d, 0.0));
            }
            layers_.push_back(layer);
        }
        // The head reads layer-normed rows of unit scale; a fan-in init there starts Q
        // with action gaps around 0.5, far above the gaps learning has to discover.
        head_ = tensor::add_dense(ps, prefix + ".qhead", d, env::kActionCount, rng);
        for (auto* t : {&ps[head_.weight].value, &ps[head_.bias].value})
            for (auto& x : t->values()) x *= kHeadInitScale;
    }

    static constexpr double kHeadInitScale = 0.01;

    const TransformerConfig& config() const { return cfg_; }
    std::size_t hidden_width() const { return cfg_.embed; }
    std::size_t hidden_rows(std::size_t agents) const { return cfg_.hidden == HiddenMode::Team ? 1 : agents; }

    /// Token rows 1..N: the per-agent feature rows projected to the embedding width.
    Var embed_tokens(const Bound& p, Var features) const {
        return tensor::linear(features, p[embed_.weight], p[embed_.bias]);
    }

    /// features: (B*N) x F, hidden: (B*H) x d. Each sample's token block is its N agent
    /// rows followed by its H hidden rows.
    PolicyOutput forward(const Bound& p, Var features, Var hidden, std::size_t agents,
                         bool keep_attention = false) const {
        if (agents == 0 || features.rows() % agents != 0)
            throw ContractError("policy forward: feature rows not a multiple of the agent count");
        if (features.cols() != cfg_.features)
            throw ContractError("policy forward: expected " + std::to_string(cfg_.features) + " features, got " +
                                std::to_string(features.cols()));
        const std::size_t batch = features.rows() / agents;
        const std::size_t h = hidden_rows(agents);
        if (hidden.rows() != batch * h || hidden.cols() != cfg_.embed)
            throw ContractError("policy forward: hidden state has the wrong shape");
        const std::size_t t = agents + h;

        // concat_rows puts all agent rows first; this permutation interleaves them per sample.
        std::vector<std::size_t> order, agent_rows, hidden_out;
        order.reserve(batch * t);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < agents; ++k) {
                agent_rows.push_back(order.size());
                order.push_back(b * agents + k);
            }
            for (std::size_t k = 0; k < h; ++k) {
                hidden_out.push_back(order.size());
                order.push_back(batch * agents + b * h + k);
            }
        }
        Var x = tensor::gather_rows(tensor::concat_rows({embed_tokens(p, features), hidden}), std::move(order));

        PolicyOutput out;
        for (const Layer& layer : layers_) {
            tensor::Tensor maps;
            Var q = tensor::matmul(x, p[layer.wq]);
            Var k = tensor::matmul(x, p[layer.wk]);
            Var v = tensor::matmul(x, p[layer.wv]);
            Var att = tensor::grouped_attention(q, k, v, t, cfg_.heads, keep_attention ? &maps : nullptr);
            Var y = tensor::add(x, tensor::linear(att, p[layer.out.weight], p[layer.out.bias]));
            if (cfg_.layer_norm) y = tensor::layer_norm_rows(y, p[layer.ln1_gain], p[layer.ln1_bias]);
            Var ff = tensor::linear(tensor::elu(tensor::linear(y, p[layer.ff1.weight], p[layer.ff1.bias])),
                                    p[layer.ff2.weight], p[layer.ff2.bias]);
            x = tensor::add(y, ff);
            if (cfg_.layer_norm) x = tensor::layer_norm_rows(x, p[layer.ln2_gain], p[layer.ln2_bias]);
            if (keep_attention) out.attention.push_back(std::move(maps));
        }
        out.q = tensor::linear(tensor::gather_rows(x, std::move(agent_rows)), p[head_.weight], p[head_.bias]);
        out.hidden = tensor::gather_rows(x, std::move(hidden_out));
        return out;
    }

private:
    struct Layer {
        std::size_t wq = 0, wk = 0, wv = 0;
        DenseIds out, ff1, ff2;
        std::size_t ln1_gain = 0, ln1_bias = 0, ln2_gain = 0, ln2_bias = 0;
    };

    TransformerConfig cfg_;
    DenseIds embed_;
    std::vector<Layer> layers_;
    DenseIds head_;
};

}  // namespace omvp::policy
