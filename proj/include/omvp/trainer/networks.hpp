#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>

#include "omvp/mixer/mixer.hpp"
#include "omvp/policy/agent_net.hpp"
#include "omvp/policy/features.hpp"
#include "omvp/tensor/checkpoint.hpp"
#include "omvp/trainer/config.hpp"

namespace omvp::trainer {

using tensor::Bound;
using tensor::Graph;
using tensor::ParamSet;
using tensor::Tensor;
using tensor::Var;

/// splitmix64 over (seed, stream, index): independent, reproducible sub-seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::uint64_t z = seed;
    for (std::uint64_t v : {stream, index}) {
        z += 0x9E3779B97F4A7C15ULL + v;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
    }
    return z;
}

/// Online and target parameters of one agent network plus mixer. The network
/// objects only hold parameter indices, so both sets run through the same code.
struct Networks {
    Algorithm algorithm = Algorithm::T3Qmix;
    ModelConfig model;
    std::size_t agents = 0;
    std::size_t features = 0;
    std::size_t state_dim = 0;
    policy::AgentNet agent;
    std::optional<mixer::QmixMixer> mixer;
    ParamSet online;
    ParamSet target;

    bool learns() const { return algorithm != Algorithm::Random; }

    /// chosen: B x N, state: B x S. Returns B x 1.
    Var mix(const Bound& p, Var chosen, Var state) const {
        return mixer ? mixer->forward(p, chosen, state) : mixer::vdn_mix(chosen);
    }
};

inline Networks make_networks(Algorithm algorithm, const ModelConfig& model, const env::EnvConfig& env,
                              std::uint64_t seed) {
    Networks n;
    n.algorithm = algorithm;
    n.model = model;
    n.agents = static_cast<std::size_t>(env.pursuers);
    n.features = policy::feature_width(env.observation_size);
    n.state_dim = 3 * static_cast<std::size_t>(env.width) * static_cast<std::size_t>(env.width);
    if (algorithm == Algorithm::Random) return n;

    std::mt19937_64 rng(derive_seed(seed, 0xA11CE));
    if (uses_transformer(algorithm)) {
        policy::TransformerConfig tc;
        tc.features = n.features;
        tc.embed = model.embed;
        tc.heads = model.heads;
        tc.depth = model.depth;
        tc.layer_norm = model.layer_norm;
        tc.hidden = model.hidden_mode;
        n.agent = policy::AgentNet(policy::TransformerPolicy(tc, n.online, rng));
    } else {
        n.agent = policy::AgentNet(policy::RecurrentPolicy({n.features, model.rnn_hidden}, n.online, rng));
    }
    if (uses_qmix(algorithm)) n.mixer = mixer::QmixMixer({n.agents, n.state_dim, model.mixer_hidden}, n.online, rng);
    n.target = n.online;
    return n;
}

inline Networks make_networks(const TrainConfig& cfg) {
    return make_networks(cfg.algorithm, cfg.model, cfg.env, cfg.seed);
}

/// Hard copy online -> target.
inline void update_targets(Networks& n) { n.target = n.online; }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline tensor::Checkpoint to_checkpoint(const Networks& n, const env::EnvConfig& env) {
    tensor::Checkpoint ck;
    auto& m = ck.metadata;
    m["algorithm"] = to_string(n.algorithm);
    m["width"] = std::to_string(env.width);
    m["pursuers"] = std::to_string(env.pursuers);
    m["evaders"] = std::to_string(env.evaders);
    m["horizon"] = std::to_string(env.horizon);
    m["observation_size"] = std::to_string(env.observation_size);
    m["embed_dim"] = std::to_string(n.model.embed);
    m["heads"] = std::to_string(n.model.heads);
    m["depth"] = std::to_string(n.model.depth);
    m["layer_norm"] = n.model.layer_norm ? "true" : "false";
    m["hidden_token"] = n.model.hidden_mode == policy::HiddenMode::Team ? "team" : "agent";
    m["rnn_hidden"] = std::to_string(n.model.rnn_hidden);
    m["mixer_hidden"] = std::to_string(n.model.mixer_hidden);
    ck.params = n.online;
    return ck;
}

struct CheckpointShape {
    Algorithm algorithm = Algorithm::Random;
    ModelConfig model;
    int width = 0;
    int pursuers = 0;
    int evaders = 0;
    int horizon = 0;
    int observation_size = 0;

    /// The scenario the checkpoint was trained on (evader strategy left random).
    env::EnvConfig scenario() const {
        env::EnvConfig e;
        e.width = width;
        e.pursuers = pursuers;
        e.evaders = evaders;
        e.horizon = horizon;
        e.observation_size = observation_size;
        return e;
    }
};

inline CheckpointShape checkpoint_shape(const tensor::Checkpoint& ck) {
    auto get = [&](const std::string& key) {
        auto it = ck.metadata.find(key);
        if (it == ck.metadata.end()) throw tensor::CheckpointError("checkpoint metadata lacks '" + key + "'");
        return it->second;
    };
    auto num = [&](const std::string& key) {
        try {
            return std::stoul(get(key));
        } catch (const std::logic_error&) {
            throw tensor::CheckpointError("checkpoint metadata '" + key + "' is not a number");
        }
    };
    CheckpointShape s;
    auto alg = parse_algorithm(get("algorithm"));
    if (!alg) throw tensor::CheckpointError("checkpoint names unknown algorithm '" + get("algorithm") + "'");
    s.algorithm = *alg;
    s.width = static_cast<int>(num("width"));
    s.pursuers = static_cast<int>(num("pursuers"));
    s.evaders = static_cast<int>(num("evaders"));
    s.horizon = static_cast<int>(num("horizon"));
    s.observation_size = static_cast<int>(num("observation_size"));
    s.model.embed = num("embed_dim");
    s.model.heads = num("heads");
    s.model.depth = num("depth");
    s.model.layer_norm = get("layer_norm") == "true";
    s.model.hidden_mode = get("hidden_token") == "agent" ? policy::HiddenMode::PerAgent : policy::HiddenMode::Team;
    s.model.rnn_hidden = num("rnn_hidden");
    s.model.mixer_hidden = num("mixer_hidden");
    return s;
}

/// Rebuilds networks for `env` from a checkpoint. The scenario must match the one the
/// checkpoint was trained on in every dimension that fixes a parameter shape.
inline Networks from_checkpoint(const tensor::Checkpoint& ck, const env::EnvConfig& env) {
    const CheckpointShape s = checkpoint_shape(ck);
    if (s.pursuers != env.pursuers)
        throw ContractError("checkpoint was trained with " + std::to_string(s.pursuers) + " pursuers, scenario has " +
                            std::to_string(env.pursuers));
    if (s.observation_size != env.observation_size)
        throw ContractError("checkpoint observation window " + std::to_string(s.observation_size) +
                            " does not match scenario window " + std::to_string(env.observation_size));
    if (uses_qmix(s.algorithm) && s.width != env.width)
        throw ContractError("checkpoint mixer expects width " + std::to_string(s.width) + ", scenario has width " +
                            std::to_string(env.width));
    Networks n = make_networks(s.algorithm, s.model, env, 0);
    if (n.online.size() != ck.params.size())
        throw ContractError("checkpoint parameter count does not match the network");
    for (std::size_t i = 0; i < n.online.size(); ++i) {
        if (n.online[i].name != ck.params[i].name || n.online[i].value.shape() != ck.params[i].value.shape())
            throw ContractError("checkpoint parameter '" + ck.params[i].name + "' does not match the network");
        n.online[i].value = ck.params[i].value;
    }
    n.target = n.online;
    return n;
}

}  // namespace omvp::trainer
